use serde::Serialize;

use super::index::{KnowledgeBase, RetrievalResult, VectorIndex};
use super::StoreKind;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_SIMILARITY_A: f64 = 0.15;
pub const DEFAULT_MIN_SIMILARITY_B: f64 = 0.25;

/// Per-store results of a Strategy A lookup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleContext {
    pub oracle_context: Vec<RetrievalResult>,
    pub pg_docs: Vec<RetrievalResult>,
    pub sme_rules: Vec<RetrievalResult>,
}

impl TripleContext {
    pub fn get(&self, store: StoreKind) -> &[RetrievalResult] {
        match store {
            StoreKind::OracleContext => &self.oracle_context,
            StoreKind::PgDocs => &self.pg_docs,
            StoreKind::SmeRules => &self.sme_rules,
            StoreKind::PairExamples => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairExample {
    pub id: String,
    pub oracle: String,
    pub postgres: String,
    pub similarity: f64,
    pub rank: usize,
}

/// Queries the three Strategy A stores independently. At equal similarity,
/// entries whose feature tags intersect `chunk_classes` rank first.
pub fn retrieve_strategy_a(
    kb: &KnowledgeBase,
    chunk_text: &str,
    chunk_classes: &[String],
    k: usize,
    min_similarity: f64,
) -> Result<TripleContext> {
    kb.require(&StoreKind::STRATEGY_A)?;
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let query = kb.embedder.embed(chunk_text)?;
    let run = |store: StoreKind| -> Result<Vec<RetrievalResult>> {
        let index = kb.get(store).expect("checked above");
        check_embedder(index, kb)?;
        if index.is_empty() {
            return Ok(Vec::new());
        }
        let mut all = index.query_vector(&query, index.len(), min_similarity)?;
        let overlap = |r: &RetrievalResult| {
            r.entry
                .metadata
                .tags
                .iter()
                .filter(|t| chunk_classes.contains(t))
                .count()
        };
        all.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| overlap(b).cmp(&overlap(a)))
                .then_with(|| a.entry.id.cmp(&b.entry.id))
        });
        all.truncate(k);
        for (i, r) in all.iter_mut().enumerate() {
            r.rank = i + 1;
        }
        Ok(all)
    };
    Ok(TripleContext {
        oracle_context: run(StoreKind::OracleContext)?,
        pg_docs: run(StoreKind::PgDocs)?,
        sme_rules: run(StoreKind::SmeRules)?,
    })
}

/// Nearest Oracle/PostgreSQL pairs from the unified store.
pub fn retrieve_strategy_b(kb: &KnowledgeBase, chunk_text: &str, k: usize, min_similarity: f64) -> Result<Vec<PairExample>> {
    kb.require(&[StoreKind::PairExamples])?;
    let index = kb.get(StoreKind::PairExamples).expect("checked above");
    check_embedder(index, kb)?;
    if k == 0 {
        return Err(Error::InvalidK);
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let results = index.query(&kb.embedder, chunk_text, k, min_similarity)?;
    Ok(results
        .into_iter()
        .map(|r| PairExample {
            postgres: r.entry.pair_target.clone().unwrap_or_default(),
            id: r.entry.id,
            oracle: r.entry.text,
            similarity: r.similarity,
            rank: r.rank,
        })
        .collect())
}

fn check_embedder(index: &VectorIndex, kb: &KnowledgeBase) -> Result<()> {
    if index.embedder_id() != kb.embedder.id() {
        return Err(Error::EmbedderMismatch {
            expected: index.embedder_id().to_string(),
            found: kb.embedder.id(),
        });
    }
    Ok(())
}
