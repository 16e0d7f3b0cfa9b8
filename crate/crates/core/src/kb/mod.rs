//! Knowledge bases for retrieval-augmented translation.
//!
//! Strategy A keeps three stores (Oracle context, PostgreSQL documentation,
//! conversion rules); Strategy B keeps one store of Oracle/PostgreSQL pairs.
//! Every store is an exact cosine index over embedded entries.

mod embed;
mod gold;
mod index;
mod retrieve;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use embed::{cosine, Embedder, EmbedderSpec, HttpEmbedder, TrigramEmbedder, BUILTIN_DIM, EMBED_URL_ENV};
pub use gold::{evaluate_retrieval, GoldRetrievalCase, RetrievalScorecard, Scenario, ScenarioScore};
pub use index::{KnowledgeBase, RetrievalResult, VectorIndex};
pub use retrieve::{
    retrieve_strategy_a, retrieve_strategy_b, PairExample, TripleContext, DEFAULT_MIN_SIMILARITY_A,
    DEFAULT_MIN_SIMILARITY_B,
};

pub const MAX_PARAGRAPH_BYTES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StoreKind {
    OracleContext,
    PgDocs,
    SmeRules,
    PairExamples,
}

impl StoreKind {
    pub const ALL: [StoreKind; 4] = [
        StoreKind::OracleContext,
        StoreKind::PgDocs,
        StoreKind::SmeRules,
        StoreKind::PairExamples,
    ];
    pub const STRATEGY_A: [StoreKind; 3] = [StoreKind::OracleContext, StoreKind::PgDocs, StoreKind::SmeRules];

    pub fn as_str(self) -> &'static str {
        match self {
            StoreKind::OracleContext => "oracle_context",
            StoreKind::PgDocs => "pg_docs",
            StoreKind::SmeRules => "sme_rules",
            StoreKind::PairExamples => "pair_examples",
        }
    }
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StoreKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown store `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Feature classes the entry is about.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub id: String,
    pub store: StoreKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_target: Option<String>,
    #[serde(default)]
    pub metadata: EntryMetadata,
}

impl KbEntry {
    /// Entry with a content-derived id. `pair_target` must be given exactly
    /// for pair entries.
    pub fn new(store: StoreKind, text: impl Into<String>, pair_target: Option<String>, metadata: EntryMetadata) -> Result<Self> {
        if pair_target.is_some() != (store == StoreKind::PairExamples) {
            return Err(Error::InvalidConfig(format!(
                "pair_target must be present exactly for {} entries",
                StoreKind::PairExamples
            )));
        }
        let text = text.into();
        Ok(KbEntry {
            id: content_id(store, &text, pair_target.as_deref()),
            store,
            text,
            pair_target,
            metadata,
        })
    }
}

fn content_id(store: StoreKind, text: &str, target: Option<&str>) -> String {
    let mut h = Sha256::new();
    h.update(store.as_str().as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    if let Some(t) = target {
        h.update([0]);
        h.update(t.as_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Makes ids unique within each store by suffixing repeats with `-1`, `-2`, ...
pub fn dedupe_ids(entries: &mut [KbEntry]) {
    let mut seen: HashMap<(StoreKind, String), usize> = HashMap::new();
    for e in entries.iter_mut() {
        let n = seen.entry((e.store, e.id.clone())).or_insert(0);
        if *n > 0 {
            e.id = format!("{}-{n}", e.id);
        }
        *n += 1;
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryLine {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    pair_target: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
}

/// Reads ingestion JSONL: one `{text, pair_target?, source?, tags?, id?}` per line.
pub fn read_entries_jsonl(path: &Path, store: StoreKind) -> Result<Vec<KbEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: EntryLine = serde_json::from_str(&line)?;
        let mut entry = KbEntry::new(
            store,
            raw.text,
            raw.pair_target,
            EntryMetadata {
                source: raw.source,
                tags: raw.tags,
            },
        )?;
        if let Some(id) = raw.id {
            entry.id = id;
        }
        out.push(entry);
    }
    dedupe_ids(&mut out);
    Ok(out)
}

/// Splits prose into blank-line separated paragraphs of at most `max_bytes`;
/// longer paragraphs are cut at line ends, then at char boundaries.
pub fn paragraphs(text: &str, max_bytes: usize) -> Vec<String> {
    let max_bytes = max_bytes.max(1);
    let mut out = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, out: &mut Vec<String>| {
        let t = current.trim();
        if !t.is_empty() {
            out.push(t.to_string());
        }
        current.clear();
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            flush(&mut current, &mut out);
            continue;
        }
        if !current.is_empty() && current.len() + 1 + line.len() > max_bytes {
            flush(&mut current, &mut out);
        }
        if line.len() > max_bytes {
            let mut rest = line;
            while rest.len() > max_bytes {
                let mut cut = max_bytes;
                while !rest.is_char_boundary(cut) {
                    cut -= 1;
                }
                out.push(rest[..cut].to_string());
                rest = &rest[cut..];
            }
            current.push_str(rest);
            continue;
        }
        if !current.is_empty() {
            current.push('\n');
        }
        current.push_str(line);
    }
    flush(&mut current, &mut out);
    out
}

/// Entries for a documentation or rules file, one per paragraph.
pub fn prose_entries(store: StoreKind, source: &str, text: &str, tags: &[String]) -> Result<Vec<KbEntry>> {
    paragraphs(text, MAX_PARAGRAPH_BYTES)
        .into_iter()
        .map(|p| {
            KbEntry::new(
                store,
                p,
                None,
                EntryMetadata {
                    source: Some(source.to_string()),
                    tags: tags.to_vec(),
                },
            )
        })
        .collect()
}

/// Groups entries by store.
pub fn by_store(entries: Vec<KbEntry>) -> BTreeMap<StoreKind, Vec<KbEntry>> {
    let mut out: BTreeMap<StoreKind, Vec<KbEntry>> = BTreeMap::new();
    for e in entries {
        out.entry(e.store).or_default().push(e);
    }
    out
}
