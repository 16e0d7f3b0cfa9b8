//! Per-feature GAP estimation: dictionary gap, quality gap and the combined
//! feature gap that drives how many new samples to collect.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricReport;

/// How `gap_dict` values are reduced before use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "decimals", rename_all = "lowercase")]
pub enum Quantize {
    Exact,
    /// Cut after this many decimals.
    Truncate(u32),
    Round(u32),
}

impl Default for Quantize {
    fn default() -> Self {
        Quantize::Truncate(2)
    }
}

impl Quantize {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Quantize::Exact => v,
            Quantize::Truncate(d) => {
                let f = 10f64.powi(d as i32);
                // the epsilon keeps values like 0.53 (stored as 0.5299999...) intact
                ((v * f) + 1e-9).floor() / f
            }
            Quantize::Round(d) => {
                let f = 10f64.powi(d as i32);
                (v * f).round() / f
            }
        }
    }
}

/// `1 - count / max_count` per feature.
pub fn gap_dict(train_counts: &BTreeMap<String, u64>, quantize: Quantize) -> Result<BTreeMap<String, f64>> {
    let max = train_counts.values().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok(train_counts
        .iter()
        .map(|(f, &c)| (f.clone(), quantize.apply(1.0 - c as f64 / max as f64).clamp(0.0, 1.0)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapWeights {
    pub w_r: f64,
    pub w_b: f64,
    pub w_c: f64,
    pub w_ser: f64,
    pub w_agg: f64,
    pub beta: f64,
}

impl Default for GapWeights {
    fn default() -> Self {
        GapWeights {
            w_r: 0.2,
            w_b: 0.2,
            w_c: 0.2,
            w_ser: 0.2,
            w_agg: 0.4,
            beta: 0.3,
        }
    }
}

impl GapWeights {
    pub fn weight_sum(&self) -> f64 {
        self.w_r + self.w_b + self.w_c + self.w_ser + self.w_agg
    }

    /// Weights must be finite and non-negative with a positive sum, and
    /// `1 + beta^2 < 2` so the feature-gap denominator stays positive.
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("w_r", self.w_r),
            ("w_b", self.w_b),
            ("w_c", self.w_c),
            ("w_ser", self.w_ser),
            ("w_agg", self.w_agg),
            ("beta", self.beta),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights(format!("{name} = {v}")));
        }
        if self.weight_sum() <= 0.0 {
            return Err(Error::InvalidWeights("weights sum to zero".into()));
        }
        if 1.0 + self.beta * self.beta >= 2.0 {
            return Err(Error::InvalidWeights(format!(
                "beta = {} makes 2 - x reach zero for perfect scores",
                self.beta
            )));
        }
        Ok(())
    }

    /// `(floor, ceiling)` of `gap_feature` in percent for this beta.
    pub fn gap_feature_bounds(&self) -> (f64, f64) {
        let x_max = 1.0 + self.beta * self.beta;
        (100.0 * (1.0 - 1.0 / (2.0 - x_max)), 50.0)
    }
}

/// Scores of one feature under one pipeline. `syntax_correctness` is
/// `1 - ser`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureQuality {
    pub feature: String,
    pub recall: f64,
    pub bleu: f64,
    pub chrf: f64,
    pub syntax_correctness: f64,
    pub aggregated: f64,
    #[serde(default)]
    pub train_count: u64,
}

impl FeatureQuality {
    pub fn zero(feature: &str) -> Self {
        FeatureQuality {
            feature: feature.to_string(),
            recall: 0.0,
            bleu: 0.0,
            chrf: 0.0,
            syntax_correctness: 0.0,
            aggregated: 0.0,
            train_count: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("recall", self.recall),
            ("bleu", self.bleu),
            ("chrf", self.chrf),
            ("syntax_correctness", self.syntax_correctness),
            ("aggregated", self.aggregated),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{}: {name} = {v} is outside [0, 1]", self.feature)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub q_raw: f64,
    pub q_norm: f64,
    pub gap_quality: f64,
}

pub fn quality_score(q: &FeatureQuality, w: &GapWeights) -> Result<QualityScore> {
    w.validate()?;
    q.validate()?;
    let q_raw = w.w_r * q.recall
        + w.w_b * q.bleu
        + w.w_c * q.chrf
        + w.w_ser * q.syntax_correctness
        + w.w_agg * q.aggregated;
    let q_norm = q_raw / w.weight_sum();
    Ok(QualityScore {
        q_raw,
        q_norm,
        gap_quality: 1.0 - q_norm,
    })
}

/// `(1 - 1 / (2 - x)) * 100` with `x = (1 + beta^2)(1 - gap_quality)(1 - gap_dict)`.
pub fn gap_feature(gap_quality: f64, gap_dict: f64, beta: f64) -> Result<f64> {
    let x = (1.0 + beta * beta) * (1.0 - gap_quality) * (1.0 - gap_dict);
    let denominator = 2.0 - x;
    if denominator <= 0.0 || !denominator.is_finite() {
        return Err(Error::Singularity { x, denominator });
    }
    Ok((1.0 - 1.0 / denominator) * 100.0)
}

/// `ceil(pct / 100 * max_count) - current`, never below zero.
pub fn samples_requested(gap_feature_pct: f64, max_count: u64, current: u64) -> u64 {
    let target = (gap_feature_pct / 100.0 * max_count as f64).ceil();
    if target <= 0.0 {
        return 0;
    }
    (target as u64).saturating_sub(current)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub pipeline: String,
    pub feature: String,
    pub train_count: u64,
    pub gap_dict: f64,
    pub q_norm: f64,
    pub gap_quality: f64,
    pub gap_feature_pct: f64,
    pub samples_requested: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub weights: GapWeights,
    pub quantize: Quantize,
    pub max_train_count: u64,
    pub records: Vec<GapRecord>,
    /// Caveats worth surfacing next to the numbers.
    pub notes: Vec<String>,
}

/// Pipeline name → feature → scores.
pub type PipelineScores = BTreeMap<String, BTreeMap<String, FeatureQuality>>;

/// One record per (pipeline, feature) over the union of features seen in
/// `train_counts` and in the scores. Missing counts are 0 and missing scores
/// are all 0. Records are sorted by `gap_feature_pct` descending.
pub fn estimate_dataset(
    train_counts: &BTreeMap<String, u64>,
    scores: &PipelineScores,
    weights: &GapWeights,
    quantize: Quantize,
) -> Result<GapEstimate> {
    weights.validate()?;
    let features: BTreeSet<&String> = train_counts
        .keys()
        .chain(scores.values().flat_map(|m| m.keys()))
        .collect();
    let counts: BTreeMap<String, u64> = features
        .iter()
        .map(|f| ((*f).clone(), train_counts.get(*f).copied().unwrap_or(0)))
        .collect();
    let dict = gap_dict(&counts, quantize)?;
    let max_count = counts.values().copied().max().unwrap_or(0);

    let mut records = Vec::new();
    for (pipeline, per_feature) in scores {
        for f in &features {
            let q = per_feature.get(*f).cloned().unwrap_or_else(|| FeatureQuality::zero(f));
            let qs = quality_score(&q, weights)?;
            let gd = dict[*f];
            let pct = gap_feature(qs.gap_quality, gd, weights.beta)?;
            let current = counts[*f];
            records.push(GapRecord {
                pipeline: pipeline.clone(),
                feature: (*f).clone(),
                train_count: current,
                gap_dict: gd,
                q_norm: qs.q_norm,
                gap_quality: qs.gap_quality,
                gap_feature_pct: pct,
                samples_requested: samples_requested(pct, max_count, current),
            });
        }
    }
    records.sort_by(|a, b| {
        b.gap_feature_pct
            .total_cmp(&a.gap_feature_pct)
            .then_with(|| a.pipeline.cmp(&b.pipeline))
            .then_with(|| a.feature.cmp(&b.feature))
    });

    let mut notes = Vec::new();
    let unseen: Vec<&str> = counts.iter().filter(|(_, &c)| c == 0).map(|(f, _)| f.as_str()).collect();
    if !unseen.is_empty() {
        notes.push(format!(
            "features without training samples ({}) are capped at the formula ceiling of 50%, not near 100%",
            unseen.join(", ")
        ));
    }
    if (weights.weight_sum() - 1.0).abs() > 1e-12 {
        notes.push(format!("weights sum to {}; q_norm divides by that sum", weights.weight_sum()));
    }
    Ok(GapEstimate {
        weights: *weights,
        quantize,
        max_train_count: max_count,
        records,
        notes,
    })
}

/// Per-feature scores of a metric report. Metrics that were not computed
/// (no references) count as 0.
pub fn qualities_from_report(report: &MetricReport) -> BTreeMap<String, FeatureQuality> {
    report
        .per_feature
        .iter()
        .map(|a| {
            (
                a.feature.clone(),
                FeatureQuality {
                    feature: a.feature.clone(),
                    recall: a.recall.unwrap_or(0.0),
                    bleu: a.bleu.unwrap_or(0.0),
                    chrf: a.chrf.unwrap_or(0.0),
                    syntax_correctness: a.syntax_correctness,
                    aggregated: a.agg,
                    train_count: 0,
                },
            )
        })
        .collect()
}

/// Writes `GAP.csv`.
pub fn write_gap_csv(estimate: &GapEstimate, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "pipeline",
        "feature",
        "train_count",
        "gap_dict",
        "q_norm",
        "gap_quality",
        "gap_feature_pct",
        "samples_requested",
    ])?;
    for r in &estimate.records {
        w.write_record([
            r.pipeline.clone(),
            r.feature.clone(),
            r.train_count.to_string(),
            format!("{:.6}", r.gap_dict),
            format!("{:.8}", r.q_norm),
            format!("{:.8}", r.gap_quality),
            format!("{:.4}", r.gap_feature_pct),
            r.samples_requested.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn dict_edges() {
        let d = gap_dict(&counts(&[("A", 5), ("B", 5)]), Quantize::Exact).unwrap();
        assert!(d.values().all(|&v| v == 0.0));
        let d = gap_dict(&counts(&[("A", 5), ("B", 0)]), Quantize::Exact).unwrap();
        assert_eq!(d["B"], 1.0);
        assert!(matches!(gap_dict(&counts(&[("A", 0)]), Quantize::Exact), Err(Error::EmptyCounts)));
        assert!(matches!(gap_dict(&BTreeMap::new(), Quantize::Exact), Err(Error::EmptyCounts)));
    }

    #[test]
    fn quantize_modes() {
        assert_eq!(Quantize::Truncate(2).apply(0.99934), 0.99);
        assert_eq!(Quantize::Round(2).apply(0.99934), 1.0);
        assert_eq!(Quantize::Truncate(2).apply(0.53), 0.53);
        assert_eq!(Quantize::Exact.apply(0.123456), 0.123456);
    }

    #[test]
    fn quality_extremes() {
        let w = GapWeights::default();
        let mut q = FeatureQuality::zero("A");
        assert!((quality_score(&q, &w).unwrap().gap_quality - 1.0).abs() < 1e-15);
        q.recall = 1.0;
        q.bleu = 1.0;
        q.chrf = 1.0;
        q.syntax_correctness = 1.0;
        q.aggregated = 1.0;
        let s = quality_score(&q, &w).unwrap();
        assert!((s.q_norm - 1.0).abs() < 1e-15);
        assert!(s.gap_quality.abs() < 1e-15);
    }

    #[test]
    fn weights_guard() {
        assert!(GapWeights::default().validate().is_ok());
        let bad = |f: fn(&mut GapWeights)| {
            let mut w = GapWeights::default();
            f(&mut w);
            matches!(w.validate(), Err(Error::InvalidWeights(_)))
        };
        assert!(bad(|w| w.beta = 1.0));
        assert!(bad(|w| w.w_r = -0.1));
        assert!(bad(|w| {
            w.w_r = 0.0;
            w.w_b = 0.0;
            w.w_c = 0.0;
            w.w_ser = 0.0;
            w.w_agg = 0.0;
        }));
        assert!(bad(|w| w.w_agg = f64::NAN));
    }

    #[test]
    fn feature_gap_ceiling_and_singularity() {
        assert_eq!(gap_feature(1.0, 0.3, 0.3).unwrap(), 50.0);
        assert!(matches!(gap_feature(0.0, 0.0, 1.0), Err(Error::Singularity { .. })));
        let (floor, ceil) = GapWeights::default().gap_feature_bounds();
        assert_eq!(ceil, 50.0);
        assert!((gap_feature(0.0, 0.0, 0.3).unwrap() - floor).abs() < 1e-12);
        assert!((floor - 100.0 * (1.0 - 1.0 / 0.91)).abs() < 1e-12);
    }

    #[test]
    fn requested_samples() {
        assert_eq!(samples_requested(0.0, 1000, 1000), 0);
        assert_eq!(samples_requested(-9.0, 1000, 0), 0);
        assert_eq!(samples_requested(50.0, 1001, 0), 501);
        assert_eq!(samples_requested(50.0, 1000, 400), 100);
        assert_eq!(samples_requested(10.0, 1000, 400), 0);
    }

    #[test]
    fn brand_new_feature_hits_the_ceiling() {
        let mut scores = PipelineScores::new();
        scores.insert("conversion".into(), BTreeMap::new());
        let est = estimate_dataset(
            &counts(&[("OLD", 1000), ("NEW", 0)]),
            &scores,
            &GapWeights::default(),
            Quantize::Exact,
        )
        .unwrap();
        let new = est.records.iter().find(|r| r.feature == "NEW").unwrap();
        assert_eq!(new.gap_dict, 1.0);
        assert_eq!(new.gap_feature_pct, 50.0);
        assert_eq!(new.samples_requested, 500);
        assert_eq!(est.records[0].feature, "NEW");
        assert!(est.notes.iter().any(|n| n.contains("NEW")));
    }

    #[test]
    fn perfect_frequent_feature_requests_nothing() {
        let mut per = BTreeMap::new();
        per.insert(
            "A".to_string(),
            FeatureQuality {
                feature: "A".into(),
                recall: 1.0,
                bleu: 1.0,
                chrf: 1.0,
                syntax_correctness: 1.0,
                aggregated: 1.0,
                train_count: 0,
            },
        );
        let scores: PipelineScores = [("conversion".to_string(), per)].into();
        let est = estimate_dataset(&counts(&[("A", 10)]), &scores, &GapWeights::default(), Quantize::Exact).unwrap();
        assert_eq!(est.records[0].samples_requested, 0);
        assert!(est.records[0].gap_feature_pct < 0.0);
    }
}
