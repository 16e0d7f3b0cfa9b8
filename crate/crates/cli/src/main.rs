//! `sqlmig`: profile, chunk, index, migrate, evaluate and plan datasets for
//! Oracle to PostgreSQL migrations.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqlmig::lexer::Dialect;
use sqlmig::translate::Pipeline;

use config::BackendKind;

/// A mistake in how the tool was invoked or configured.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "sqlmig", version, about = "Oracle to PostgreSQL migration toolkit")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for anything randomised (dataset splits).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Feature distribution of a corpus.
    Profile(ProfileArgs),
    /// Statement-aligned chunks as JSONL.
    Chunk(ChunkArgs),
    /// Build the retrieval knowledge base.
    KbBuild(KbBuildArgs),
    /// Score retrieval against a gold set.
    KbEval(KbEvalArgs),
    /// Translate a corpus through one pipeline.
    Migrate(MigrateArgs),
    /// Score a migration run directory.
    Evaluate(EvaluateArgs),
    /// Per-feature GAP estimation and sample requests.
    Gap(GapArgs),
    /// Migration-yield projection.
    Yield(YieldArgs),
    /// Efficiency table across evaluated runs.
    Report(ReportArgs),
    /// Build the descriptive and pair datasets.
    Dataset(DatasetArgs),
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Files or directories.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long, default_value = "oracle")]
    pub dialect: Dialect,
    /// Taxonomy TOML; defaults to the built-in one for the dialect.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long)]
    pub max_bytes: Option<usize>,
    /// One statement or block per chunk.
    #[arg(long)]
    pub statement_per_chunk: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KbBuildArgs {
    /// Oracle code context: JSONL entries or prose.
    #[arg(long)]
    pub oracle_context: Vec<PathBuf>,
    /// PostgreSQL documentation: JSONL entries or prose.
    #[arg(long)]
    pub pg_docs: Vec<PathBuf>,
    /// Conversion rules: JSONL entries or prose.
    #[arg(long)]
    pub sme_rules: Vec<PathBuf>,
    /// Translation pairs: JSONL with `text` and `pair_target`.
    #[arg(long)]
    pub pairs: Vec<PathBuf>,
    /// Use the HTTP embedder at MIGRATE_EMBED_URL instead of the built-in one.
    #[arg(long)]
    pub http_embedder: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KbEvalArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, default_value = "pair_examples")]
    pub store: String,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub min_similarity: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MigrateArgs {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long, default_value = "conversion")]
    pub pipeline: Pipeline,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_bytes: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub run_dir: PathBuf,
    /// Directory of reference translations named like the outputs.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// `builtin` or an external command.
    #[arg(long)]
    pub validator: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// Training counts: CSV `feature,count` or a pair dataset JSONL.
    #[arg(long)]
    pub dataset: PathBuf,
    /// `PIPELINE=FILE`, where FILE is an evaluation `metrics.json` or a JSON
    /// list of per-feature scores. Repeatable.
    #[arg(long, required = true)]
    pub metrics: Vec<String>,
    /// TOML file with `w_r`, `w_b`, `w_c`, `w_ser`, `w_agg`, `beta`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// `exact`, `truncate:N` or `round:N` for gap_dict.
    #[arg(long)]
    pub quantize: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct YieldArgs {
    /// CSV with feature, coverage_pct, files, quality_pct, baseline_files.
    #[arg(long)]
    pub inputs: PathBuf,
    /// CSV with a, b, files: overlaps already removed from `files`, recorded
    /// in the report.
    #[arg(long)]
    pub overlaps: Option<PathBuf>,
    #[arg(long)]
    pub samples_per_day: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directories of `evaluate`.
    #[arg(required = true)]
    pub evaluations: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// CSV with oracle, postgres, description, description_file columns.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub train_ratio: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use sqlmig::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(
            E::InvalidConfig(_)
            | E::StoreMissing(_)
            | E::InvalidWeights(_)
            | E::InvalidK
            | E::Taxonomy(_)
            | E::Mapping(_)
            | E::UnboundPlaceholder(_)
            | E::UnknownBinding(_)
            | E::EmptyCounts
            | E::EmptyCorpus,
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
