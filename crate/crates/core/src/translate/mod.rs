//! Translation pipelines: direct conversion, history-aware conversion and
//! the two retrieval-augmented strategies, over a pluggable backend.

mod backend;
mod pipeline;
mod prompt;

pub use backend::{strip_code_fences, Echo, HttpLlm, HttpLlmConfig, RuleBaseline, Translator, LLM_KEY_ENV, LLM_URL_ENV};
pub use pipeline::{
    corpus_fingerprint, history_window, run_conversion, run_history, run_pipeline, run_rag, write_run_dir, FileResult,
    FileStatus, FileSummary, MigrationRun, Pipeline, RagStrategy, Retrieved, RetrievalProvenance, RunSummary,
    TranslatedChunk, TranslationConfig,
};
pub use prompt::{build_prompt, PromptSpec, Template, TemplateId, TemplateSet, NO_HISTORY_MARKER, NO_RETRIEVAL_MARKER};
