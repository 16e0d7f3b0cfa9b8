//! Per-file and run-level scoring of a migration run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{bleu, chrf, token_recall};
use super::scoring::{
    categorize_errors, feature_correlation, feature_coverage, CorrelationReport, ErrorGroupReport, ErrorThresholds,
    FileStructure,
};
use super::validator::{ser_metrics, statement_spans, validate_syntax, SerMetrics, SyntaxFinding, Validator};
use crate::error::{Error, Result};
use crate::lexer::{line_count, tokenize, Dialect};
use crate::profile::{predict_expected_features, FeatureProfile, Profiler, SizeClass};
use crate::segment::{segment, UnitKind};
use crate::taxonomy::{FeatureMapping, FeatureTaxonomy};
use crate::translate::{FileStatus, RunSummary};

/// One file to score.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput {
    pub name: String,
    pub source: String,
    /// `None` when the file was not converted.
    pub output: Option<String>,
    pub reference: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub validator: Validator,
    pub thresholds: ErrorThresholds,
    pub oracle_taxonomy: FeatureTaxonomy,
    pub pg_taxonomy: FeatureTaxonomy,
    pub mapping: FeatureMapping,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            validator: Validator::Builtin,
            thresholds: ErrorThresholds::default(),
            oracle_taxonomy: FeatureTaxonomy::default_for(Dialect::Oracle),
            pg_taxonomy: FeatureTaxonomy::default_for(Dialect::PostgreSql),
            mapping: FeatureMapping::default_oracle_to_postgres(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMetrics {
    pub file: String,
    pub size_class: SizeClass,
    pub converted: bool,
    /// A reference translation was available.
    pub scored: bool,
    pub recall: Option<f64>,
    pub bleu: Option<f64>,
    pub chrf: Option<f64>,
    #[serde(flatten)]
    pub syntax: SerMetrics,
    /// Pooled over classes: sum of min(generated, expected) over sum of
    /// expected; 1 when nothing is expected.
    pub coverage: f64,
    pub class_coverage: BTreeMap<String, f64>,
    pub oracle_counts: BTreeMap<String, u64>,
    pub expected_counts: BTreeMap<String, u64>,
    pub generated_counts: BTreeMap<String, u64>,
    pub error_groups: ErrorGroupReport,
    pub findings: Vec<SyntaxFinding>,
}

/// Scores of the files that contain a given source feature class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAggregate {
    pub feature: String,
    pub files: usize,
    pub scored_files: usize,
    pub recall: Option<f64>,
    pub bleu: Option<f64>,
    pub chrf: Option<f64>,
    /// Mean of `1 - ser`.
    pub syntax_correctness: f64,
    pub coverage: f64,
    /// Mean of the available scores among recall, bleu, chrf,
    /// syntax_correctness and coverage.
    pub agg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub total_files: usize,
    pub valid_files: usize,
    pub file_efficiency: f64,
    pub class_efficiency: f64,
    pub size_efficiency: f64,
    /// Percent of statements with an error, pooled over converted files.
    pub ser_db: f64,
    /// Errors per line, pooled over converted files.
    pub sepl_db: f64,
    pub error_files: usize,
    pub total_errors: usize,
    pub total_warnings: usize,
    pub not_converted: usize,
    pub unscored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: Option<String>,
    pub validator: String,
    pub run: RunMetrics,
    pub per_file: Vec<FileMetrics>,
    pub per_feature: Vec<FeatureAggregate>,
    pub pooled_class_coverage: BTreeMap<String, f64>,
    pub size_class_efficiency: BTreeMap<String, f64>,
    pub error_groups: ErrorGroupReport,
    pub correlation: CorrelationReport,
}

fn statement_count(text: &str, dialect: Dialect) -> usize {
    let lexed = tokenize(text, dialect);
    segment(text, &lexed, dialect)
        .iter()
        .filter(|u| u.kind != UnitKind::Trivia)
        .count()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn score_file(input: &EvalInput, opts: &EvalOptions) -> Result<FileMetrics> {
    let oracle = Profiler::new(&opts.oracle_taxonomy).profile_text(&input.source);
    let expected = predict_expected_features(&oracle, &opts.mapping)?;
    let out = input.output.as_deref();
    let generated = match out {
        Some(o) => Profiler::new(&opts.pg_taxonomy).profile_text(o),
        None => FeatureProfile::empty(&opts.pg_taxonomy),
    };
    let findings = match out {
        Some(o) => validate_syntax(&input.name, o, &opts.validator)?,
        None => Vec::new(),
    };
    let mut syntax = ser_metrics(&findings, out.unwrap_or(""));
    if out.is_none() {
        syntax.valid = false;
    }
    let class_coverage = feature_coverage(&expected, &generated);
    let exp_total: u64 = expected.counts.values().sum();
    let covered: u64 = expected
        .counts
        .iter()
        .map(|(c, &e)| generated.count(c).min(e))
        .sum();
    let coverage = if exp_total == 0 { 1.0 } else { covered as f64 / exp_total as f64 };
    let structure = FileStructure {
        input_statements: statement_count(&input.source, Dialect::Oracle),
        output_statements: out.map_or(0, |o| statement_spans(o).len()),
        input_bytes: input.source.trim().len(),
        output_bytes: out.map_or(0, |o| o.trim().len()),
    };
    let errors = categorize_errors(&findings, &class_coverage, &structure, &expected, &generated, &opts.thresholds);
    let (recall, bleu_s, chrf_s) = match (&input.reference, out) {
        (Some(r), Some(o)) => (Some(token_recall(o, r)), Some(bleu(o, r)), Some(chrf(o, r))),
        (Some(_), None) => (Some(0.0), Some(0.0), Some(0.0)),
        _ => (None, None, None),
    };
    Ok(FileMetrics {
        file: input.name.clone(),
        size_class: SizeClass::from_lines(line_count(&input.source)),
        converted: out.is_some(),
        scored: input.reference.is_some(),
        recall,
        bleu: bleu_s,
        chrf: chrf_s,
        syntax,
        coverage,
        class_coverage,
        oracle_counts: oracle.counts.into_iter().filter(|(_, v)| *v > 0).collect(),
        expected_counts: expected.counts.clone(),
        generated_counts: generated.counts.clone(),
        error_groups: errors,
        findings,
    })
}

/// Scores every input. Files are scored in parallel; the report lists them
/// sorted by name.
pub fn evaluate_files(inputs: &[EvalInput], opts: &EvalOptions) -> Result<MetricReport> {
    let mut per_file = inputs
        .par_iter()
        .map(|i| score_file(i, opts))
        .collect::<Result<Vec<_>>>()?;
    per_file.sort_by(|a, b| a.file.cmp(&b.file));
    Ok(aggregate(per_file, opts))
}

fn aggregate(per_file: Vec<FileMetrics>, opts: &EvalOptions) -> MetricReport {
    let total = per_file.len();
    let valid = per_file.iter().filter(|f| f.syntax.valid).count();
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };

    let mut pooled: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for f in &per_file {
        for (c, &e) in &f.expected_counts {
            let g = f.generated_counts.get(c).copied().unwrap_or(0);
            let entry = pooled.entry(c.clone()).or_default();
            entry.0 += g.min(e);
            entry.1 += e;
        }
    }
    let pooled_class_coverage: BTreeMap<String, f64> = pooled
        .into_iter()
        .filter(|(_, (_, e))| *e > 0)
        .map(|(c, (m, e))| (c, m as f64 / e as f64))
        .collect();

    let mut by_size: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for f in &per_file {
        let e = by_size.entry(f.size_class.as_str().to_string()).or_default();
        e.0 += usize::from(f.syntax.valid);
        e.1 += 1;
    }
    let size_class_efficiency: BTreeMap<String, f64> =
        by_size.into_iter().map(|(k, (v, n))| (k, pct(v, n))).collect();

    let converted: Vec<&FileMetrics> = per_file.iter().filter(|f| f.converted).collect();
    let stmts: usize = converted.iter().map(|f| f.syntax.statements).sum();
    let err_stmts: usize = converted.iter().map(|f| f.syntax.error_statements).sum();
    let lines: usize = converted.iter().map(|f| f.syntax.lines).sum();
    let total_errors: usize = converted.iter().map(|f| f.syntax.errors).sum();

    let mut error_groups = ErrorGroupReport::default();
    for f in &per_file {
        error_groups.add(&f.error_groups);
    }

    let run = RunMetrics {
        total_files: total,
        valid_files: valid,
        file_efficiency: pct(valid, total),
        class_efficiency: mean(pooled_class_coverage.values().copied()).unwrap_or(0.0) * 100.0,
        size_efficiency: mean(size_class_efficiency.values().copied()).unwrap_or(0.0),
        ser_db: pct(err_stmts, stmts),
        sepl_db: if lines == 0 { 0.0 } else { total_errors as f64 / lines as f64 },
        error_files: converted.iter().filter(|f| f.syntax.errors > 0).count(),
        total_errors,
        total_warnings: converted.iter().map(|f| f.syntax.warnings).sum(),
        not_converted: total - converted.len(),
        unscored: per_file.iter().filter(|f| !f.scored).count(),
    };

    let mut features: Vec<&str> = opts.oracle_taxonomy.class_names();
    features.sort_unstable();
    let per_feature = features
        .into_iter()
        .filter_map(|feature| {
            let files: Vec<&FileMetrics> = per_file
                .iter()
                .filter(|f| f.oracle_counts.contains_key(feature))
                .collect();
            if files.is_empty() {
                return None;
            }
            let recall = mean(files.iter().filter_map(|f| f.recall));
            let bleu = mean(files.iter().filter_map(|f| f.bleu));
            let chrf = mean(files.iter().filter_map(|f| f.chrf));
            let syntax_correctness = mean(files.iter().map(|f| 1.0 - f.syntax.ser)).unwrap_or(0.0);
            let coverage = mean(files.iter().map(|f| f.coverage)).unwrap_or(0.0);
            let agg = mean([recall, bleu, chrf, Some(syntax_correctness), Some(coverage)].into_iter().flatten())
                .unwrap_or(0.0);
            Some(FeatureAggregate {
                feature: feature.to_string(),
                files: files.len(),
                scored_files: files.iter().filter(|f| f.scored).count(),
                recall,
                bleu,
                chrf,
                syntax_correctness,
                coverage,
                agg,
            })
        })
        .collect();

    let correlation = feature_correlation(
        &per_file
            .iter()
            .filter(|f| f.converted)
            .map(|f| {
                (
                    f.file.clone(),
                    FeatureProfile::from_counts(Dialect::PostgreSql, f.expected_counts.clone()),
                    FeatureProfile::from_counts(Dialect::PostgreSql, f.generated_counts.clone()),
                )
            })
            .collect::<Vec<_>>(),
    );

    MetricReport {
        run_id: None,
        validator: opts.validator.id(),
        run,
        per_file,
        per_feature,
        pooled_class_coverage,
        size_class_efficiency,
        error_groups,
        correlation,
    }
}

/// Reads `run.json`, `sources/` and `outputs/` of a run directory. Reference
/// translations are looked up by file name under `references`; files without
/// one are scored for syntax and coverage only.
pub fn evaluate_run(run_dir: &Path, references: Option<&Path>, opts: &EvalOptions) -> Result<MetricReport> {
    let summary = RunSummary::load(run_dir)?;
    let read = |p: PathBuf| std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e));
    let mut inputs = Vec::with_capacity(summary.files.len());
    for f in &summary.files {
        let source = read(run_dir.join("sources").join(&f.name))?;
        let output = match f.status {
            FileStatus::Converted => Some(read(run_dir.join("outputs").join(&f.name))?),
            FileStatus::NotConverted => None,
        };
        let reference = match references {
            Some(dir) if dir.join(&f.name).is_file() => Some(read(dir.join(&f.name))?),
            _ => None,
        };
        inputs.push(EvalInput {
            name: f.name.clone(),
            source,
            output,
            reference,
        });
    }
    let mut report = evaluate_files(&inputs, opts)?;
    report.run_id = Some(summary.run_id);
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

/// Writes `metrics.json`, `files.csv`, `summary.csv`, `features.csv`,
/// `coverage.csv`, `correlation.csv` and `error_groups.csv` into `out`.
pub fn write_report(report: &MetricReport, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();

    let p = out.join("metrics.json");
    std::fs::write(&p, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = out.join("files.csv");
    let mut w = csv_writer(&p)?;
    w.write_record([
        "file", "size_class", "converted", "scored", "recall", "bleu", "chrf", "statements", "error_statements",
        "errors", "warnings", "lines", "ser", "sepl", "warnings_norm", "valid", "coverage",
    ])?;
    for f in &report.per_file {
        w.write_record([
            f.file.clone(),
            f.size_class.as_str().to_string(),
            f.converted.to_string(),
            f.scored.to_string(),
            fmt_opt(f.recall),
            fmt_opt(f.bleu),
            fmt_opt(f.chrf),
            f.syntax.statements.to_string(),
            f.syntax.error_statements.to_string(),
            f.syntax.errors.to_string(),
            f.syntax.warnings.to_string(),
            f.syntax.lines.to_string(),
            format!("{:.6}", f.syntax.ser),
            format!("{:.6}", f.syntax.sepl),
            format!("{:.6}", f.syntax.warnings_norm),
            f.syntax.valid.to_string(),
            format!("{:.6}", f.coverage),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = out.join("summary.csv");
    let mut w = csv_writer(&p)?;
    let r = &report.run;
    w.write_record([
        "file_efficiency", "class_efficiency", "size_efficiency", "ser_db", "sepl_db", "error_files", "total_errors",
        "not_converted",
    ])?;
    w.write_record([
        format!("{:.4}", r.file_efficiency),
        format!("{:.4}", r.class_efficiency),
        format!("{:.4}", r.size_efficiency),
        format!("{:.4}", r.ser_db),
        format!("{:.6}", r.sepl_db),
        r.error_files.to_string(),
        r.total_errors.to_string(),
        r.not_converted.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = out.join("features.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["feature", "files", "scored_files", "recall", "bleu", "chrf", "syntax_correctness", "coverage", "agg"])?;
    for a in &report.per_feature {
        w.write_record([
            a.feature.clone(),
            a.files.to_string(),
            a.scored_files.to_string(),
            fmt_opt(a.recall),
            fmt_opt(a.bleu),
            fmt_opt(a.chrf),
            format!("{:.6}", a.syntax_correctness),
            format!("{:.6}", a.coverage),
            format!("{:.6}", a.agg),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = out.join("coverage.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["file", "class", "coverage"])?;
    for f in &report.per_file {
        for (c, v) in &f.class_coverage {
            w.write_record([f.file.clone(), c.clone(), format!("{v:.6}")])?;
        }
    }
    for (c, v) in &report.pooled_class_coverage {
        w.write_record(["*".to_string(), c.clone(), format!("{v:.6}")])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = out.join("correlation.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["file", "class", "expected", "generated", "pearson_r"])?;
    for pt in &report.correlation.points {
        let r = report.correlation.pearson_r.get(&pt.class).copied().flatten();
        w.write_record([
            pt.file.clone(),
            pt.class.clone(),
            pt.expected.to_string(),
            pt.generated.to_string(),
            fmt_opt(r),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = out.join("error_groups.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["file", "syntax", "structural", "missing_feature", "semantic_flagged_heuristic"])?;
    let mut row = |name: &str, g: &ErrorGroupReport| {
        w.write_record([
            name.to_string(),
            g.syntax.to_string(),
            g.structural.to_string(),
            g.missing_feature.to_string(),
            g.semantic_flagged.to_string(),
        ])
    };
    for f in &report.per_file {
        row(&f.file, &f.error_groups)?;
    }
    row("*", &report.error_groups)?;
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    Ok(written)
}
