//! Oracle to PostgreSQL migration orchestration and evaluation.
//!
//! The crate is organised as a pipeline:
//!
//! * [`lexer`], [`segment`], [`taxonomy`] and [`profile`] classify scripts
//!   into feature classes at the keyword level.
//! * [`chunker`] cuts scripts into statement-aligned chunks and puts
//!   translated chunks back together.
//! * [`kb`] builds exact cosine indexes for retrieval-augmented prompting.
//! * [`translate`] drives the four conversion pipelines over a pluggable
//!   backend.
//! * [`eval`] scores outputs: lexical metrics, syntax findings, feature
//!   coverage and run-level efficiency.
//! * [`gap`] turns scores and dataset counts into per-feature sample
//!   requests and projects migration yield.

pub mod chunker;
pub mod error;
pub mod eval;
pub mod gap;
pub mod kb;
pub mod lexer;
pub mod manifest;
pub mod profile;
pub mod segment;
pub mod taxonomy;
pub mod translate;

pub use error::{Error, Result};
pub use lexer::Dialect;

/// The guide's chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/profiling.md")]
    mod profiling {}
    #[doc = include_str!("../../../book/src/chunking.md")]
    mod chunking {}
    #[doc = include_str!("../../../book/src/knowledge-base.md")]
    mod knowledge_base {}
    #[doc = include_str!("../../../book/src/pipelines.md")]
    mod pipelines {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/gap-and-yield.md")]
    mod gap_and_yield {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
