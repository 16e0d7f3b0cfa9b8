//! Migration-yield projection: files expected to convert successfully per
//! feature against a baseline tool, and the manual effort the difference
//! represents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES_PER_DAY: f64 = 150.0;

/// Files shared by two feature groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub a: String,
    pub b: String,
    pub files: u64,
}

/// Subtracts every overlap a feature takes part in from its raw file count.
pub fn deoverlap(raw: &[(String, u64)], overlaps: &[Overlap]) -> Vec<(String, u64)> {
    raw.iter()
        .map(|(f, n)| {
            let shared: u64 = overlaps
                .iter()
                .filter(|o| &o.a == f || &o.b == f)
                .map(|o| o.files)
                .sum();
            (f.clone(), n.saturating_sub(shared))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldInput {
    pub feature: String,
    pub coverage_pct: f64,
    /// De-overlapped file count.
    pub files: u64,
    pub quality_pct: f64,
    pub baseline_files: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldRow {
    pub feature: String,
    pub coverage_pct: f64,
    pub files: u64,
    pub quality_pct: f64,
    /// coverage × quality, in percent.
    pub success_pct: f64,
    pub success_files: f64,
    pub baseline_files: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub rows: Vec<YieldRow>,
    pub total_success: f64,
    pub total_baseline: f64,
    pub difference: f64,
    pub samples_per_day: f64,
    /// Person-days needed to convert `difference` files by hand.
    pub sme_days: f64,
    pub overlap_assumptions: Vec<Overlap>,
}

pub fn project_yield(inputs: &[YieldInput], samples_per_day: f64, overlaps: &[Overlap]) -> Result<YieldReport> {
    if !(samples_per_day > 0.0) {
        return Err(Error::InvalidConfig(format!("samples_per_day must be positive, got {samples_per_day}")));
    }
    let rows: Vec<YieldRow> = inputs
        .iter()
        .map(|i| {
            let success_pct = i.coverage_pct * i.quality_pct / 100.0;
            YieldRow {
                feature: i.feature.clone(),
                coverage_pct: i.coverage_pct,
                files: i.files,
                quality_pct: i.quality_pct,
                success_pct,
                success_files: i.files as f64 * success_pct / 100.0,
                baseline_files: i.baseline_files,
            }
        })
        .collect();
    let total_success: f64 = rows.iter().map(|r| r.success_files).sum();
    let total_baseline: f64 = rows.iter().map(|r| r.baseline_files).sum();
    let difference = total_success - total_baseline;
    Ok(YieldReport {
        rows,
        total_success,
        total_baseline,
        difference,
        samples_per_day,
        sme_days: difference.max(0.0) / samples_per_day,
        overlap_assumptions: overlaps.to_vec(),
    })
}

/// Writes `yield.json` and `yield.csv` into `dir`.
pub fn write_yield(report: &YieldReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("yield.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(&json, e))?;
    let csv_path = dir.join("yield.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "feature",
        "coverage_pct",
        "files",
        "quality_pct",
        "success_pct",
        "success_files",
        "baseline_files",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.feature.clone(),
            format!("{}", r.coverage_pct),
            r.files.to_string(),
            format!("{}", r.quality_pct),
            format!("{:.4}", r.success_pct),
            format!("{:.2}", r.success_files),
            format!("{}", r.baseline_files),
        ])?;
    }
    w.write_record([
        "TOTAL".to_string(),
        String::new(),
        report.rows.iter().map(|r| r.files).sum::<u64>().to_string(),
        String::new(),
        String::new(),
        format!("{:.2}", report.total_success),
        format!("{}", report.total_baseline),
    ])?;
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(vec![json, csv_path])
}
