//! Feature coverage, expected-vs-generated correlation and error groups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validator::{Severity, SyntaxFinding};
use crate::profile::FeatureProfile;

/// Per class `min(generated, expected) / expected`; classes with no expected
/// instances are left out.
pub fn feature_coverage(expected: &FeatureProfile, generated: &FeatureProfile) -> BTreeMap<String, f64> {
    expected
        .counts
        .iter()
        .filter(|(_, &e)| e > 0)
        .map(|(class, &e)| (class.clone(), generated.count(class).min(e) as f64 / e as f64))
        .collect()
}

/// Pearson correlation; `None` when either side has zero variance or fewer
/// than two points.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (xs[i] - mx, ys[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub file: String,
    pub class: String,
    pub expected: u64,
    pub generated: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_r: BTreeMap<String, Option<f64>>,
    pub points: Vec<CorrelationPoint>,
}

/// Correlates expected and generated counts per class across files.
/// `files` holds `(file, expected, generated)`.
pub fn feature_correlation(files: &[(String, FeatureProfile, FeatureProfile)]) -> CorrelationReport {
    let mut classes: Vec<&String> = files
        .iter()
        .flat_map(|(_, e, g)| e.counts.keys().chain(g.counts.keys()))
        .collect();
    classes.sort();
    classes.dedup();
    let mut report = CorrelationReport::default();
    for class in classes {
        let mut xs = Vec::with_capacity(files.len());
        let mut ys = Vec::with_capacity(files.len());
        for (file, e, g) in files {
            let (x, y) = (e.count(class), g.count(class));
            xs.push(x as f64);
            ys.push(y as f64);
            report.points.push(CorrelationPoint {
                file: file.clone(),
                class: class.clone(),
                expected: x,
                generated: y,
            });
        }
        report.pearson_r.insert(class.clone(), pearson(&xs, &ys));
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorThresholds {
    pub missing_feature: f64,
    pub structural_ratio: f64,
    /// Total-variation distance between expected and generated class shares.
    pub deviation: f64,
}

impl Default for ErrorThresholds {
    fn default() -> Self {
        ErrorThresholds {
            missing_feature: 0.5,
            structural_ratio: 0.3,
            deviation: 0.4,
        }
    }
}

/// Statement counts of one input/output pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FileStructure {
    pub input_statements: usize,
    pub output_statements: usize,
    pub input_bytes: usize,
    pub output_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorGroupReport {
    /// Validator errors.
    pub syntax: usize,
    /// Files with an empty or collapsed output.
    pub structural: usize,
    /// Classes covered below the threshold.
    pub missing_feature: usize,
    /// Syntactically valid files whose feature mix drifted. Heuristic only:
    /// nothing is executed.
    pub semantic_flagged: usize,
}

impl ErrorGroupReport {
    pub fn add(&mut self, o: &ErrorGroupReport) {
        self.syntax += o.syntax;
        self.structural += o.structural;
        self.missing_feature += o.missing_feature;
        self.semantic_flagged += o.semantic_flagged;
    }
}

/// Total-variation distance between the class distributions of two
/// profiles. An empty side against a non-empty one is at distance 1.
pub fn profile_deviation(expected: &FeatureProfile, generated: &FeatureProfile) -> f64 {
    let (te, tg) = (expected.total_hits as f64, generated.total_hits as f64);
    match (te == 0.0, tg == 0.0) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let mut classes: Vec<&String> = expected.counts.keys().chain(generated.counts.keys()).collect();
    classes.sort();
    classes.dedup();
    0.5 * classes
        .iter()
        .map(|c| (expected.count(c) as f64 / te - generated.count(c) as f64 / tg).abs())
        .sum::<f64>()
}

pub fn categorize_errors(
    findings: &[SyntaxFinding],
    coverage: &BTreeMap<String, f64>,
    structure: &FileStructure,
    expected: &FeatureProfile,
    generated: &FeatureProfile,
    thresholds: &ErrorThresholds,
) -> ErrorGroupReport {
    let syntax = findings.iter().filter(|f| f.severity == Severity::Error).count();
    let empty_output = structure.input_bytes > 0 && structure.output_statements == 0;
    let collapsed = structure.input_statements > 0
        && (structure.output_statements as f64) < thresholds.structural_ratio * structure.input_statements as f64;
    let semantic = syntax == 0 && profile_deviation(expected, generated) > thresholds.deviation;
    ErrorGroupReport {
        syntax,
        structural: usize::from(empty_output || collapsed),
        missing_feature: coverage.values().filter(|&&c| c < thresholds.missing_feature).count(),
        semantic_flagged: usize::from(semantic),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::Dialect;

    fn prof(pairs: &[(&str, u64)]) -> FeatureProfile {
        FeatureProfile::from_counts(
            Dialect::PostgreSql,
            pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        )
    }

    #[test]
    fn coverage_examples() {
        let e = prof(&[("A", 10), ("B", 4), ("C", 0)]);
        assert_eq!(feature_coverage(&e, &e).values().copied().collect::<Vec<_>>(), [1.0, 1.0]);
        assert!(feature_coverage(&e, &prof(&[])).values().all(|&c| c == 0.0));
        let c = feature_coverage(&prof(&[("A", 10)]), &prof(&[("A", 7)]));
        assert_eq!(c["A"], 0.7);
        assert!(!feature_coverage(&e, &e).contains_key("C"));
        assert_eq!(feature_coverage(&prof(&[("A", 2)]), &prof(&[("A", 9)]))["A"], 1.0);
    }

    #[test]
    fn pearson_by_hand() {
        // x = 1..5, y = 2 4 5 4 5: mean 3 and 4, sxy = 6, sxx = 10, syy = 6
        let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0]).unwrap();
        assert!((r - 6.0 / (10f64.sqrt() * 6f64.sqrt())).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 2.0], &[3.0, 3.0]), None);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_points_and_nulls() {
        let files = vec![
            ("a".to_string(), prof(&[("X", 1), ("Y", 2)]), prof(&[("X", 1), ("Y", 5)])),
            ("b".to_string(), prof(&[("X", 3), ("Y", 4)]), prof(&[("X", 3), ("Y", 5)])),
        ];
        let r = feature_correlation(&files);
        assert!((r.pearson_r["X"].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.pearson_r["Y"], None);
        assert_eq!(r.points.len(), 4);
    }

    #[test]
    fn clean_file_has_no_groups() {
        let p = prof(&[("A", 3)]);
        let s = FileStructure {
            input_statements: 3,
            output_statements: 3,
            input_bytes: 30,
            output_bytes: 30,
        };
        let g = categorize_errors(&[], &feature_coverage(&p, &p), &s, &p, &p, &Default::default());
        assert_eq!(g, ErrorGroupReport::default());
    }

    #[test]
    fn empty_output_is_structural() {
        let s = FileStructure {
            input_statements: 100,
            output_statements: 0,
            input_bytes: 4000,
            output_bytes: 0,
        };
        let g = categorize_errors(&[], &BTreeMap::new(), &s, &prof(&[]), &prof(&[]), &Default::default());
        assert!(g.structural >= 1);
    }

    #[test]
    fn deviation_is_total_variation() {
        assert_eq!(profile_deviation(&prof(&[("A", 1)]), &prof(&[("B", 1)])), 1.0);
        assert_eq!(profile_deviation(&prof(&[("A", 1), ("B", 1)]), &prof(&[("A", 1)])), 0.5);
        assert_eq!(profile_deviation(&prof(&[]), &prof(&[])), 0.0);
    }
}
