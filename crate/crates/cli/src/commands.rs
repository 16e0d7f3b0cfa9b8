//! One function per subcommand. Every command writes `manifest.json` into
//! its output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use sqlmig::chunker::{chunk_with, ChunkRecord};
use sqlmig::eval::{evaluate_run, write_report, EvalOptions, MetricReport, Validator};
use sqlmig::gap::{
    build_datasets, estimate_dataset, project_yield, qualities_from_report, read_jsonl, read_manifest, train_counts,
    write_build, write_gap_csv, write_yield, FeatureQuality, GapWeights, Overlap, PipelineScores, Quantize,
    SplitConfig, YieldInput,
};
use sqlmig::kb::{
    by_store, dedupe_ids, evaluate_retrieval, prose_entries, read_entries_jsonl, Embedder, GoldRetrievalCase,
    HttpEmbedder, KbEntry, KnowledgeBase, StoreKind, TrigramEmbedder,
};
use sqlmig::lexer::Dialect;
use sqlmig::manifest::{fingerprint, RunManifest};
use sqlmig::profile::{profile, profile_corpus, ScriptProfile, SourceScript};
use sqlmig::taxonomy::FeatureTaxonomy;
use sqlmig::translate::{run_pipeline, write_run_dir, Echo, HttpLlm, RuleBaseline, Translator};

use crate::config::{BackendKind, Config};
use crate::{Cli, Command, UsageError};

pub fn run(cli: Cli) -> Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(j) = cli.jobs {
        config.jobs = j;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if config.jobs > 0 {
        config.translation.jobs = config.jobs;
        // ignore the error raised when a pool already exists (tests run in-process)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build_global();
    }
    match cli.command {
        Command::Profile(a) => cmd_profile(&config, a),
        Command::Chunk(a) => cmd_chunk(&config, a),
        Command::KbBuild(a) => cmd_kb_build(&config, a),
        Command::KbEval(a) => cmd_kb_eval(&config, a),
        Command::Migrate(a) => cmd_migrate(config, a),
        Command::Evaluate(a) => cmd_evaluate(&config, a),
        Command::Gap(a) => cmd_gap(&config, a),
        Command::Yield(a) => cmd_yield(&config, a),
        Command::Report(a) => cmd_report(&config, a),
        Command::Dataset(a) => cmd_dataset(&config, a),
    }
}

/// Files under `paths`, directories walked recursively, in sorted order.
fn collect_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(p: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.sort();
            for e in entries {
                walk(&e, out)?;
            }
        } else if p.is_file() {
            out.push(p.to_path_buf());
        } else {
            return Err(UsageError(format!("no such file or directory: {}", p.display())).into());
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        walk(p, &mut out)?;
    }
    Ok(out)
}

fn load_scripts(paths: &[PathBuf], dialect: Dialect) -> Result<Vec<SourceScript>> {
    collect_files(paths)?
        .iter()
        .map(|p| SourceScript::load(p, dialect).map_err(Into::into))
        .collect()
}

fn scripts_fingerprint(scripts: &[SourceScript]) -> String {
    fingerprint(scripts.iter().map(|s| (s.path.as_str(), s.text.as_bytes())))
}

fn files_fingerprint(paths: &[&Path]) -> Result<String> {
    let mut items = Vec::new();
    for p in paths {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        // keyed by file name so the fingerprint survives moving the inputs
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        items.push((name, bytes));
    }
    Ok(fingerprint(items.iter().map(|(n, b)| (n.as_str(), b.as_slice()))))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn finish(command: &str, snapshot: serde_json::Value, corpus: String, out: &Path, artifacts: &[PathBuf]) -> Result<()> {
    let mut m = RunManifest::new(command, snapshot, corpus);
    for a in artifacts {
        m.add_artifact(a)?;
    }
    m.finish_and_write(&out.join("manifest.json"))?;
    Ok(())
}

fn csv_file(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_taxonomy(path: Option<&Path>, dialect: Dialect) -> Result<FeatureTaxonomy> {
    let Some(path) = path else {
        return Ok(FeatureTaxonomy::default_for(dialect));
    };
    let t = FeatureTaxonomy::load(path)?;
    if t.dialect != dialect {
        return Err(UsageError(format!(
            "taxonomy {} is for {} but --dialect is {}",
            path.display(),
            t.dialect,
            dialect
        ))
        .into());
    }
    Ok(t)
}

fn cmd_profile(config: &Config, a: crate::ProfileArgs) -> Result<()> {
    let taxonomy = load_taxonomy(a.taxonomy.as_deref(), a.dialect)?;
    let scripts = load_scripts(&a.paths, a.dialect)?;
    let corpus = profile_corpus(&scripts, &taxonomy)?;
    create_dir(&a.out)?;

    let dist = a.out.join("distribution.csv");
    let mut w = csv_file(&dist)?;
    w.write_record(["feature", "count", "percentage"])?;
    for class in taxonomy.class_names() {
        w.write_record([
            class.to_string(),
            corpus.count(class).to_string(),
            format!("{:.4}", corpus.percentage(class) * 100.0),
        ])?;
    }
    w.flush()?;

    let files = a.out.join("profiles.jsonl");
    let mut lines = String::new();
    for s in &scripts {
        let p = profile(s, &taxonomy)?;
        lines.push_str(&serde_json::to_string(&ScriptProfile::new(s, p))?);
        lines.push('\n');
    }
    std::fs::write(&files, lines)?;

    let snapshot = json!({"jobs": config.jobs, "dialect": a.dialect, "taxonomy": a.taxonomy, "paths": a.paths});
    finish("profile", snapshot, scripts_fingerprint(&scripts), &a.out, &[dist, files])?;
    println!("profiled {} file(s), {} feature hit(s)", scripts.len(), corpus.total_hits);
    Ok(())
}

fn cmd_chunk(config: &Config, a: crate::ChunkArgs) -> Result<()> {
    let mut cfg = config.translation.chunk.clone();
    if let Some(m) = a.max_bytes {
        cfg.max_chunk_bytes = m;
    }
    cfg.statement_per_chunk |= a.statement_per_chunk;
    cfg.validate()?;
    let scripts = load_scripts(&a.paths, Dialect::Oracle)?;
    let taxonomy = FeatureTaxonomy::default_for(Dialect::Oracle);
    create_dir(&a.out)?;
    let path = a.out.join("chunks.jsonl");
    let mut lines = String::new();
    let mut n = 0;
    for s in &scripts {
        for c in chunk_with(s, &taxonomy, &cfg) {
            lines.push_str(&serde_json::to_string(&ChunkRecord::from(&c))?);
            lines.push('\n');
            n += 1;
        }
    }
    std::fs::write(&path, lines)?;
    finish("chunk", json!({"chunk": cfg, "paths": a.paths}), scripts_fingerprint(&scripts), &a.out, &[path])?;
    println!("{n} chunk(s) from {} file(s)", scripts.len());
    Ok(())
}

fn read_store_inputs(store: StoreKind, paths: &[PathBuf]) -> Result<Vec<KbEntry>> {
    let mut out = Vec::new();
    for p in collect_files(paths)? {
        if p.extension().is_some_and(|e| e == "jsonl") {
            out.extend(read_entries_jsonl(&p, store)?);
        } else {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            out.extend(prose_entries(store, &p.display().to_string(), &text, &[])?);
        }
    }
    dedupe_ids(&mut out);
    Ok(out)
}

fn cmd_kb_build(_config: &Config, a: crate::KbBuildArgs) -> Result<()> {
    let mut entries = Vec::new();
    let inputs = [
        (StoreKind::OracleContext, &a.oracle_context),
        (StoreKind::PgDocs, &a.pg_docs),
        (StoreKind::SmeRules, &a.sme_rules),
        (StoreKind::PairExamples, &a.pairs),
    ];
    let mut all_paths: Vec<PathBuf> = Vec::new();
    for (store, paths) in inputs {
        all_paths.extend(collect_files(paths)?);
        entries.extend(read_store_inputs(store, paths)?);
    }
    if entries.is_empty() {
        return Err(UsageError("no knowledge-base inputs given".into()).into());
    }
    let embedder = if a.http_embedder {
        Embedder::Http(HttpEmbedder::from_env()?)
    } else {
        Embedder::Builtin(TrigramEmbedder::fit(entries.iter().map(|e| e.text.as_str())))
    };
    let grouped = by_store(entries);
    let counts: BTreeMap<String, usize> = grouped.iter().map(|(k, v)| (k.to_string(), v.len())).collect();
    let kb = KnowledgeBase::build(embedder, grouped, &[])?;
    kb.save(&a.out)?;
    let mut artifacts = vec![a.out.join("embedder.json")];
    for store in kb.stores.keys() {
        for f in ["manifest.json", "entries.jsonl", "vectors.f32"] {
            artifacts.push(a.out.join(store.as_str()).join(f));
        }
    }
    let paths: Vec<&Path> = all_paths.iter().map(PathBuf::as_path).collect();
    let snapshot = json!({"embedder": kb.embedder.id(), "entries": counts});
    finish("kb-build", snapshot, files_fingerprint(&paths)?, &a.out, &artifacts)?;
    for (store, n) in counts {
        println!("{store}: {n} entr{}", if n == 1 { "y" } else { "ies" });
    }
    Ok(())
}

fn cmd_kb_eval(config: &Config, a: crate::KbEvalArgs) -> Result<()> {
    let store: StoreKind = a.store.parse()?;
    let kb = KnowledgeBase::load(&a.kb)?;
    let index = kb.get(store).ok_or_else(|| sqlmig::Error::StoreMissing(vec![store]))?;
    let gold = GoldRetrievalCase::read_jsonl(&a.gold)?;
    let k = a.k.unwrap_or(config.translation.k);
    let min = a.min_similarity.unwrap_or(if store == StoreKind::PairExamples {
        config.translation.min_similarity_b
    } else {
        config.translation.min_similarity_a
    });
    let card = evaluate_retrieval(index.entries(), &kb.embedder, &gold, k, min)?;
    create_dir(&a.out)?;
    let path = a.out.join("scorecard.json");
    write_json(&path, &card)?;
    let snapshot = json!({"store": store, "k": k, "min_similarity": min});
    finish("kb-eval", snapshot, files_fingerprint(&[&a.gold])?, &a.out, &[path])?;
    println!(
        "hit@1 {}  hit@{k} {}  abstention {}  stability {:.3}",
        fmt_opt(card.hit_at_1),
        fmt_opt(card.hit_at_k),
        fmt_opt(card.abstention_correctness),
        card.ranking_stability
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

fn cmd_migrate(mut config: Config, a: crate::MigrateArgs) -> Result<()> {
    if let Some(b) = a.backend {
        config.backend.kind = b;
    }
    if let Some(k) = a.k {
        config.translation.k = k;
    }
    if let Some(m) = a.max_bytes {
        config.translation.chunk.max_chunk_bytes = m;
    }
    config.translation.validate()?;
    let kb = a.kb.as_deref().map(KnowledgeBase::load).transpose()?;
    let scripts = load_scripts(&a.paths, Dialect::Oracle)?;
    let backend: Box<dyn Translator> = match config.backend.kind {
        BackendKind::Echo => Box::new(Echo),
        BackendKind::RuleBaseline => Box::new(RuleBaseline::default()),
        BackendKind::Http => Box::new(HttpLlm::new(config.backend.http.clone())?),
    };
    let run = run_pipeline(a.pipeline, &scripts, backend.as_ref(), kb.as_ref(), &config.translation)?;
    let artifacts = write_run_dir(&run, &scripts, &a.out)?;
    let snapshot = json!({
        "pipeline": a.pipeline,
        "backend": config.backend,
        "translation": config.translation,
        "kb": a.kb,
    });
    finish("migrate", snapshot, run.corpus_fingerprint.clone(), &a.out, &artifacts)?;
    let failed: Vec<&str> = run.not_converted().map(|f| f.path.as_str()).collect();
    println!(
        "{}: {} converted, {} not converted",
        a.pipeline,
        run.files.len() - failed.len(),
        failed.len()
    );
    for f in failed {
        eprintln!("not converted: {f}");
    }
    Ok(())
}

fn cmd_evaluate(config: &Config, a: crate::EvaluateArgs) -> Result<()> {
    let validator = Validator::parse(a.validator.as_deref().unwrap_or(&config.eval.validator))?;
    let opts = EvalOptions {
        validator,
        thresholds: config.eval.thresholds,
        ..EvalOptions::default()
    };
    let report = evaluate_run(&a.run_dir, a.references.as_deref(), &opts)?;
    let mut artifacts = write_report(&report, &a.out)?;
    let kv = a.out.join("metrics.kv");
    let r = &report.run;
    let text = format!(
        "file_efficiency={}\nclass_efficiency={}\nsize_efficiency={}\nser_db={}\nsepl_db={}\nerror_files={}\ntotal_errors={}\nnot_converted={}\nunscored={}\n",
        r.file_efficiency,
        r.class_efficiency,
        r.size_efficiency,
        r.ser_db,
        r.sepl_db,
        r.error_files,
        r.total_errors,
        r.not_converted,
        r.unscored
    );
    std::fs::write(&kv, text)?;
    artifacts.push(kv);
    let snapshot = json!({"validator": opts.validator, "thresholds": opts.thresholds, "references": a.references});
    let corpus = files_fingerprint(&[&a.run_dir.join("run.json")])?;
    finish("evaluate", snapshot, corpus, &a.out, &artifacts)?;
    println!(
        "file efficiency {:.2}%  SER {:.2}%  errors {}  not converted {}",
        r.file_efficiency, r.ser_db, r.total_errors, r.not_converted
    );
    if r.unscored > 0 {
        eprintln!("warning: {} file(s) unscored (no reference translation)", r.unscored);
    }
    Ok(())
}

fn parse_quantize(s: &str) -> Result<Quantize> {
    let bad = || UsageError(format!("invalid --quantize `{s}` (expected exact, truncate:N or round:N)"));
    if s == "exact" {
        return Ok(Quantize::Exact);
    }
    let (mode, n) = s.split_once(':').ok_or_else(bad)?;
    let n: u32 = n.parse().map_err(|_| bad())?;
    match mode {
        "truncate" => Ok(Quantize::Truncate(n)),
        "round" => Ok(Quantize::Round(n)),
        _ => Err(bad().into()),
    }
}

fn read_train_counts(path: &Path) -> Result<BTreeMap<String, u64>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(train_counts(&read_jsonl(path)?));
    }
    #[derive(serde::Deserialize)]
    struct Row {
        feature: String,
        count: u64,
    }
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for row in r.deserialize() {
        let row: Row = row.with_context(|| format!("parsing {}", path.display()))?;
        out.insert(row.feature, row.count);
    }
    Ok(out)
}

fn read_scores(path: &Path) -> Result<BTreeMap<String, FeatureQuality>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scores = if let Ok(report) = serde_json::from_str::<MetricReport>(&text) {
        qualities_from_report(&report)
    } else {
        let list: Vec<FeatureQuality> = serde_json::from_str(&text).map_err(|e| {
            UsageError(format!(
                "{} is neither an evaluation metrics.json nor a list of feature scores: {e}",
                path.display()
            ))
        })?;
        list.into_iter().map(|q| (q.feature.clone(), q)).collect()
    };
    if scores.is_empty() {
        return Err(UsageError(format!("{} has no per-feature scores", path.display())).into());
    }
    Ok(scores)
}

fn cmd_gap(config: &Config, a: crate::GapArgs) -> Result<()> {
    let weights: GapWeights = match &a.weights {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid weights {}: {e}", p.display())))?
        }
        None => config.gap.weights,
    };
    let quantize = match &a.quantize {
        Some(q) => parse_quantize(q)?,
        None => config.gap.quantize,
    };
    let counts = read_train_counts(&a.dataset)?;
    let mut scores = PipelineScores::new();
    let mut inputs: Vec<PathBuf> = vec![a.dataset.clone()];
    for m in &a.metrics {
        let (pipeline, file) = m
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--metrics expects PIPELINE=FILE, got `{m}`")))?;
        let file = PathBuf::from(file);
        scores.insert(pipeline.to_string(), read_scores(&file)?);
        inputs.push(file);
    }
    let estimate = estimate_dataset(&counts, &scores, &weights, quantize)?;
    create_dir(&a.out)?;
    let csv_path = a.out.join("GAP.csv");
    write_gap_csv(&estimate, &csv_path)?;
    let json_path = a.out.join("gap.json");
    write_json(&json_path, &estimate)?;
    let paths: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let snapshot = json!({"weights": weights, "quantize": quantize, "metrics": a.metrics});
    finish("gap", snapshot, files_fingerprint(&paths)?, &a.out, &[csv_path, json_path])?;
    for r in &estimate.records {
        println!(
            "{:<12} {:<22} {:>8.2}%  request {}",
            r.pipeline, r.feature, r.gap_feature_pct, r.samples_requested
        );
    }
    for n in &estimate.notes {
        eprintln!("note: {n}");
    }
    Ok(())
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| UsageError(format!("{}: {e}", path.display())).into()))
        .collect()
}

fn cmd_yield(config: &Config, a: crate::YieldArgs) -> Result<()> {
    let inputs: Vec<YieldInput> = read_csv(&a.inputs)?;
    let overlaps: Vec<Overlap> = match &a.overlaps {
        Some(p) => read_csv(p)?,
        None => Vec::new(),
    };
    let per_day = a.samples_per_day.unwrap_or(config.yield_.samples_per_day);
    let report = project_yield(&inputs, per_day, &overlaps)?;
    let artifacts = write_yield(&report, &a.out)?;
    let mut sources = vec![a.inputs.as_path()];
    sources.extend(a.overlaps.as_deref());
    finish("yield", json!({"samples_per_day": per_day}), files_fingerprint(&sources)?, &a.out, &artifacts)?;
    println!(
        "success {:.0} vs baseline {:.0}: difference {:.0} files, {:.1} SME days",
        report.total_success, report.total_baseline, report.difference, report.sme_days
    );
    Ok(())
}

fn cmd_report(_config: &Config, a: crate::ReportArgs) -> Result<()> {
    create_dir(&a.out)?;
    let eff = a.out.join("efficiency.csv");
    let feat = a.out.join("features.csv");
    let mut we = csv_file(&eff)?;
    let mut wf = csv_file(&feat)?;
    we.write_record([
        "run",
        "run_id",
        "file_efficiency",
        "class_efficiency",
        "size_efficiency",
        "ser_db",
        "sepl_db",
        "error_files",
        "total_errors",
        "not_converted",
    ])?;
    wf.write_record(["run", "feature", "recall", "bleu", "chrf", "syntax_correctness", "coverage", "agg"])?;
    let mut sources = Vec::new();
    for dir in &a.evaluations {
        let p = dir.join("metrics.json");
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let report: MetricReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let r = &report.run;
        we.write_record([
            label.clone(),
            report.run_id.clone().unwrap_or_default(),
            format!("{:.4}", r.file_efficiency),
            format!("{:.4}", r.class_efficiency),
            format!("{:.4}", r.size_efficiency),
            format!("{:.4}", r.ser_db),
            format!("{:.6}", r.sepl_db),
            r.error_files.to_string(),
            r.total_errors.to_string(),
            r.not_converted.to_string(),
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for f in &report.per_feature {
            wf.write_record([
                label.clone(),
                f.feature.clone(),
                opt(f.recall),
                opt(f.bleu),
                opt(f.chrf),
                format!("{:.6}", f.syntax_correctness),
                format!("{:.6}", f.coverage),
                format!("{:.6}", f.agg),
            ])?;
        }
        sources.push(p);
    }
    we.flush()?;
    wf.flush()?;
    let paths: Vec<&Path> = sources.iter().map(PathBuf::as_path).collect();
    finish("report", json!({"evaluations": a.evaluations}), files_fingerprint(&paths)?, &a.out, &[eff, feat])?;
    println!("{} run(s) tabulated", a.evaluations.len());
    Ok(())
}

fn cmd_dataset(config: &Config, a: crate::DatasetArgs) -> Result<()> {
    let rows = read_manifest(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let split = SplitConfig {
        train_ratio: a.train_ratio.unwrap_or(config.dataset.train_ratio),
        seed: config.seed,
    };
    let taxonomy = FeatureTaxonomy::default_for(Dialect::Oracle);
    let build = build_datasets(&rows, base, &taxonomy, &split)?;
    let mut artifacts = write_build(&build, &a.out)?;
    let counts_path = a.out.join("train_counts.csv");
    let mut w = csv_file(&counts_path)?;
    w.write_record(["feature", "count"])?;
    for (f, c) in build.train_counts() {
        w.write_record([f, c.to_string()])?;
    }
    w.flush()?;
    artifacts.push(counts_path);
    finish("dataset", json!({"split": split}), files_fingerprint(&[&a.manifest])?, &a.out, &artifacts)?;
    println!(
        "dataset1: {} sample(s), dataset2: {} sample(s), {} missing counterpart(s)",
        build.dataset1.len(),
        build.dataset2.len(),
        build.missing.len()
    );
    for m in &build.missing {
        eprintln!("missing counterpart (row {}): {}: {}", m.row, m.oracle, m.reason);
    }
    Ok(())
}
