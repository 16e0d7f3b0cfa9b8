//! Training datasets: Oracle code with descriptions, and Oracle/PostgreSQL
//! pairs, split into train and test with per-class distribution reports.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::profile::{Profiler, SizeClass};
use crate::lexer::line_count;
use crate::taxonomy::FeatureTaxonomy;

/// Train share that matches a 30K / 2K train / test dataset.
pub const DEFAULT_TRAIN_RATIO: f64 = 0.9375;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    /// Code with a natural-language description.
    Descriptive,
    /// Oracle code with its PostgreSQL translation.
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub id: String,
    pub kind: SampleKind,
    pub source: String,
    pub oracle_text: String,
    /// Description for descriptive samples, PostgreSQL code for pairs.
    pub counterpart: String,
    /// Classes present in `oracle_text`.
    pub feature_tags: Vec<String>,
    /// Occurrences per class in `oracle_text`.
    pub feature_counts: BTreeMap<String, u64>,
    pub split: Split,
    pub size_class: SizeClass,
}

/// One row of a pairing manifest (CSV with a header). Paths are relative to
/// the manifest's directory. `description` is inline text and
/// `description_file` a path; either may be used.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifestRow {
    pub oracle: String,
    pub postgres: String,
    pub description: String,
    pub description_file: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCounterpart {
    /// 1-based manifest row (header excluded).
    pub row: usize,
    pub oracle: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_ratio: DEFAULT_TRAIN_RATIO,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub dataset: SampleKind,
    pub split: Split,
    pub feature: String,
    /// Samples where the class is present.
    pub samples: usize,
    pub occurrences: u64,
    /// Share of the split's occurrences, in percent.
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBuild {
    pub dataset1: Vec<DatasetSample>,
    pub dataset2: Vec<DatasetSample>,
    pub missing: Vec<MissingCounterpart>,
    pub distribution: Vec<DistributionRow>,
}

impl DatasetBuild {
    /// Class occurrences over the train split of the pair dataset.
    pub fn train_counts(&self) -> BTreeMap<String, u64> {
        train_counts(&self.dataset2)
    }
}

pub fn train_counts(samples: &[DatasetSample]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for s in samples.iter().filter(|s| s.split == Split::Train) {
        for (c, &n) in &s.feature_counts {
            *out.entry(c.clone()).or_insert(0) += n;
        }
    }
    out
}

fn sample_id(kind: SampleKind, oracle: &str, counterpart: &str) -> String {
    let mut h = Sha256::new();
    h.update([kind as u8]);
    h.update((oracle.len() as u64).to_le_bytes());
    h.update(oracle.as_bytes());
    h.update(counterpart.as_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn split_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Stratified, deterministic split. Samples are grouped by their tag set;
/// within a group they are ordered by a seeded hash of their id and the
/// first `round(n * ratio)` go to train.
pub fn assign_splits(samples: &mut [DatasetSample], config: &SplitConfig) -> Result<()> {
    if !(0.0..=1.0).contains(&config.train_ratio) {
        return Err(Error::InvalidConfig(format!("train_ratio {} is outside [0, 1]", config.train_ratio)));
    }
    let mut strata: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        strata.entry(s.feature_tags.clone()).or_default().push(i);
    }
    for idx in strata.values_mut() {
        idx.sort_by_cached_key(|&i| (split_key(config.seed, &samples[i].id), i));
        let n_train = (idx.len() as f64 * config.train_ratio).round() as usize;
        for (rank, &i) in idx.iter().enumerate() {
            samples[i].split = if rank < n_train { Split::Train } else { Split::Test };
        }
    }
    Ok(())
}

fn make_sample(profiler: &Profiler<'_>, kind: SampleKind, source: &str, oracle: String, counterpart: String) -> DatasetSample {
    let profile = profiler.profile_text(&oracle);
    let feature_counts: BTreeMap<String, u64> = profile.counts.into_iter().filter(|(_, c)| *c > 0).collect();
    DatasetSample {
        id: sample_id(kind, &oracle, &counterpart),
        kind,
        source: source.to_string(),
        size_class: SizeClass::from_lines(line_count(&oracle)),
        feature_tags: feature_counts.keys().cloned().collect(),
        feature_counts,
        oracle_text: oracle,
        counterpart,
        split: Split::Train,
    }
}

/// Builds both datasets from manifest rows. Rows whose files cannot be read
/// or whose counterparts are empty are reported in `missing` and skipped.
pub fn build_datasets(
    rows: &[ManifestRow],
    base_dir: &Path,
    taxonomy: &FeatureTaxonomy,
    split: &SplitConfig,
) -> Result<DatasetBuild> {
    let profiler = Profiler::new(taxonomy);
    let mut dataset1 = Vec::new();
    let mut dataset2 = Vec::new();
    let mut missing = Vec::new();
    let read = |rel: &str| -> std::result::Result<String, String> {
        let p: PathBuf = base_dir.join(rel);
        std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
    };
    for (i, row) in rows.iter().enumerate() {
        let mut miss = |reason: String| {
            missing.push(MissingCounterpart {
                row: i + 1,
                oracle: row.oracle.clone(),
                reason,
            })
        };
        if row.oracle.is_empty() {
            miss("no oracle file".into());
            continue;
        }
        let oracle = match read(&row.oracle) {
            Ok(t) => t,
            Err(e) => {
                miss(e);
                continue;
            }
        };
        let mut any = false;
        if !row.postgres.is_empty() {
            match read(&row.postgres) {
                Ok(pg) if !pg.trim().is_empty() => {
                    dataset2.push(make_sample(&profiler, SampleKind::Pair, &row.oracle, oracle.clone(), pg));
                    any = true;
                }
                Ok(_) => miss(format!("{} is empty", row.postgres)),
                Err(e) => miss(e),
            }
        }
        let description = if !row.description_file.is_empty() {
            match read(&row.description_file) {
                Ok(d) => Some(d),
                Err(e) => {
                    miss(e);
                    None
                }
            }
        } else if !row.description.is_empty() {
            Some(row.description.clone())
        } else {
            None
        };
        if let Some(d) = description {
            if d.trim().is_empty() {
                miss("description is empty".into());
            } else {
                dataset1.push(make_sample(&profiler, SampleKind::Descriptive, &row.oracle, oracle.clone(), d));
                any = true;
            }
        }
        if !any && row.postgres.is_empty() && row.description.is_empty() && row.description_file.is_empty() {
            miss("no counterpart given".into());
        }
    }
    assign_splits(&mut dataset1, split)?;
    assign_splits(&mut dataset2, split)?;
    let mut distribution = distribution(&dataset1, taxonomy);
    distribution.extend(self::distribution(&dataset2, taxonomy));
    Ok(DatasetBuild {
        dataset1,
        dataset2,
        missing,
        distribution,
    })
}

/// Per split and class: samples containing the class, occurrences and the
/// class's share of the split's occurrences.
pub fn distribution(samples: &[DatasetSample], taxonomy: &FeatureTaxonomy) -> Vec<DistributionRow> {
    let mut out = Vec::new();
    let Some(kind) = samples.first().map(|s| s.kind) else {
        return out;
    };
    for split in [Split::Train, Split::Test] {
        let in_split: Vec<&DatasetSample> = samples.iter().filter(|s| s.split == split).collect();
        let total: u64 = in_split.iter().flat_map(|s| s.feature_counts.values()).sum();
        for class in taxonomy.class_names() {
            let occurrences: u64 = in_split.iter().map(|s| s.feature_counts.get(class).copied().unwrap_or(0)).sum();
            out.push(DistributionRow {
                dataset: kind,
                split,
                feature: class.to_string(),
                samples: in_split.iter().filter(|s| s.feature_counts.contains_key(class)).count(),
                occurrences,
                percentage: if total == 0 { 0.0 } else { 100.0 * occurrences as f64 / total as f64 },
            });
        }
    }
    out
}

pub fn write_jsonl(samples: &[DatasetSample], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn write_distribution_csv(rows: &[DistributionRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dataset", "split", "feature", "samples", "occurrences", "percentage"])?;
    for r in rows {
        let kind = match r.dataset {
            SampleKind::Descriptive => "descriptive",
            SampleKind::Pair => "pair",
        };
        w.write_record([
            kind.to_string(),
            r.split.as_str().to_string(),
            r.feature.clone(),
            r.samples.to_string(),
            r.occurrences.to_string(),
            format!("{:.2}", r.percentage),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `dataset1.jsonl`, `dataset2.jsonl`, `distribution.csv` and
/// `missing.csv` into `dir`.
pub fn write_build(build: &DatasetBuild, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d1 = dir.join("dataset1.jsonl");
    let d2 = dir.join("dataset2.jsonl");
    let dist = dir.join("distribution.csv");
    let miss = dir.join("missing.csv");
    write_jsonl(&build.dataset1, &d1)?;
    write_jsonl(&build.dataset2, &d2)?;
    write_distribution_csv(&build.distribution, &dist)?;
    let mut w = csv::Writer::from_path(&miss)?;
    w.write_record(["row", "oracle", "reason"])?;
    for m in &build.missing {
        w.write_record([m.row.to_string(), m.oracle.clone(), m.reason.clone()])?;
    }
    w.flush().map_err(|e| Error::io(&miss, e))?;
    Ok(vec![d1, d2, dist, miss])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::Dialect;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn one_pair_row() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.sql", "BEGIN\n  UPDATE t SET a = 1;\nEND;\n/\n");
        write(dir.path(), "a.pg.sql", "DO $$ BEGIN UPDATE t SET a = 1; END $$;\n");
        let rows = vec![ManifestRow {
            oracle: "a.sql".into(),
            postgres: "a.pg.sql".into(),
            ..Default::default()
        }];
        let tax = FeatureTaxonomy::default_for(Dialect::Oracle);
        let b = build_datasets(&rows, dir.path(), &tax, &SplitConfig::default()).unwrap();
        assert_eq!(b.dataset2.len(), 1);
        assert!(b.dataset1.is_empty());
        let profile = Profiler::new(&tax).profile_text(&b.dataset2[0].oracle_text);
        let present: Vec<String> = profile.present_classes().map(str::to_string).collect();
        assert_eq!(b.dataset2[0].feature_tags, present);
        assert!(b.missing.is_empty());
    }

    #[test]
    fn missing_counterparts_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.sql", "SELECT 1 FROM dual;");
        write(dir.path(), "empty.sql", "  \n");
        let rows = vec![
            ManifestRow {
                oracle: "a.sql".into(),
                postgres: "nope.sql".into(),
                ..Default::default()
            },
            ManifestRow {
                oracle: "a.sql".into(),
                postgres: "empty.sql".into(),
                description: "selects one".into(),
                ..Default::default()
            },
            ManifestRow {
                oracle: "a.sql".into(),
                ..Default::default()
            },
        ];
        let tax = FeatureTaxonomy::default_for(Dialect::Oracle);
        let b = build_datasets(&rows, dir.path(), &tax, &SplitConfig::default()).unwrap();
        assert_eq!(b.missing.iter().map(|m| m.row).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(b.dataset1.len(), 1);
        assert!(b.dataset2.is_empty());
    }

    #[test]
    fn manifest_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "oracle,postgres,description\na.sql,a.pg.sql,\nb.sql,,does b\n").unwrap();
        let rows = read_manifest(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].description, "does b");
        assert!(rows[0].description_file.is_empty());
    }
}
