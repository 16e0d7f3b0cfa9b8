//! Dataset construction, per-feature GAP estimation and yield projection.

pub mod dataset;
pub mod estimate;
pub mod projection;

pub use dataset::{
    assign_splits, build_datasets, distribution, read_jsonl, read_manifest, train_counts, write_build,
    write_distribution_csv, write_jsonl, DatasetBuild, DatasetSample, DistributionRow, ManifestRow,
    MissingCounterpart, SampleKind, Split, SplitConfig, DEFAULT_TRAIN_RATIO,
};
pub use estimate::{
    estimate_dataset, gap_dict, gap_feature, qualities_from_report, quality_score, samples_requested,
    write_gap_csv, FeatureQuality, GapEstimate, GapRecord, GapWeights, PipelineScores, QualityScore, Quantize,
};
pub use projection::{
    deoverlap, project_yield, write_yield, Overlap, YieldInput, YieldReport, YieldRow, DEFAULT_SAMPLES_PER_DAY,
};
