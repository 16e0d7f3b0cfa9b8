//! Backend-independent scoring of migration outputs.

pub mod metrics;
pub mod report;
pub mod scoring;
pub mod validator;

pub use metrics::{bleu, chrf, corpus_bleu, corpus_chrf, metric_tokens, token_recall, BleuStats, ChrfStats};
pub use report::{
    evaluate_files, evaluate_run, write_report, EvalInput, EvalOptions, FeatureAggregate, FileMetrics, MetricReport,
    RunMetrics,
};
pub use scoring::{
    categorize_errors, feature_correlation, feature_coverage, pearson, profile_deviation, CorrelationPoint,
    CorrelationReport, ErrorGroupReport, ErrorThresholds, FileStructure,
};
pub use validator::{
    ser_metrics, statement_spans, validate_syntax, SerMetrics, Severity, StatementSpan, SyntaxFinding, Validator,
};
