//! Statement-aligned chunking and re-assembly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::tokenize;
use crate::profile::{FeatureProfile, Profiler, SourceScript};
use crate::segment::{segment, UnitKind};
use crate::taxonomy::FeatureTaxonomy;

pub const MIN_CHUNK_BYTES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Statement,
    Block,
    Forced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkConfig {
    pub max_chunk_bytes: usize,
    /// One statement or block per chunk instead of greedy packing.
    pub statement_per_chunk: bool,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            max_chunk_bytes: 8192,
            statement_per_chunk: false,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_chunk_bytes < MIN_CHUNK_BYTES {
            return Err(Error::InvalidConfig(format!(
                "max_chunk_bytes must be at least {MIN_CHUNK_BYTES} (got {})",
                self.max_chunk_bytes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub script_path: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub features: FeatureProfile,
    pub boundary_kind: BoundaryKind,
}

/// One line of the chunk dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub script: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub boundary_kind: BoundaryKind,
    pub features: BTreeMap<String, u64>,
}

impl From<&Chunk> for ChunkRecord {
    fn from(c: &Chunk) -> Self {
        ChunkRecord {
            script: c.script_path.clone(),
            index: c.index,
            start: c.start,
            end: c.end,
            boundary_kind: c.boundary_kind,
            features: c.features.counts.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    start: usize,
    end: usize,
    kind: BoundaryKind,
}

/// Chunks `script` using the default taxonomy of its dialect.
pub fn chunk(script: &SourceScript, config: &ChunkConfig) -> Vec<Chunk> {
    let taxonomy = FeatureTaxonomy::default_for(script.dialect);
    chunk_with(script, &taxonomy, config)
}

/// Splits `script` into chunks that tile its text. Boundaries fall after
/// statement terminators, slash lines and block ends. A statement or block
/// larger than `max_chunk_bytes` is cut at its inner statement boundaries and
/// the pieces are marked `Forced`; a statement without inner boundaries is
/// never cut and becomes a single oversized `Forced` chunk.
///
/// Any `max_chunk_bytes >= 1` is accepted here; [`ChunkConfig::validate`]
/// enforces the operational minimum.
pub fn chunk_with(script: &SourceScript, taxonomy: &FeatureTaxonomy, config: &ChunkConfig) -> Vec<Chunk> {
    let text = script.text.as_str();
    if text.is_empty() {
        return Vec::new();
    }
    let max = config.max_chunk_bytes.max(1);
    let lexed = tokenize(text, script.dialect);
    let mut pieces = Vec::new();
    for unit in segment(text, &lexed, script.dialect) {
        let kind = match unit.kind {
            UnitKind::Block => BoundaryKind::Block,
            _ => BoundaryKind::Statement,
        };
        if unit.end - unit.start <= max {
            pieces.push(Piece {
                start: unit.start,
                end: unit.end,
                kind,
            });
            continue;
        }
        for (a, b) in greedy_cuts(unit.start, unit.end, &unit.inner, max) {
            pieces.push(Piece { start: a, end: b, kind: BoundaryKind::Forced });
        }
    }

    let spans = pack(&pieces, max, config.statement_per_chunk);
    let profiler = Profiler::new(taxonomy);
    let hits = profiler.hits(text);
    let mut counts: Vec<BTreeMap<String, u64>> = spans
        .iter()
        .map(|_| taxonomy.classes.iter().map(|c| (c.name.clone(), 0)).collect())
        .collect();
    for hit in hits {
        let idx = spans.partition_point(|s| s.end <= hit.start).min(spans.len() - 1);
        *counts[idx]
            .get_mut(&taxonomy.classes[hit.class].name)
            .expect("class present") += 1;
    }
    spans
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(index, (span, counts))| Chunk {
            script_path: script.path.clone(),
            index,
            start: span.start,
            end: span.end,
            text: text[span.start..span.end].to_string(),
            features: FeatureProfile::from_counts(taxonomy.dialect, counts),
            boundary_kind: span.kind,
        })
        .collect()
}

/// Greedy split of `[a, b)` using the allowed interior `cuts` (sorted): each
/// segment extends to the furthest cut within `max` bytes, or to the nearest
/// cut when none fits.
fn greedy_cuts(a: usize, b: usize, cuts: &[usize], max: usize) -> Vec<(usize, usize)> {
    let mut points: Vec<usize> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    points.sort_unstable();
    points.dedup();
    points.push(b);
    let mut out = Vec::new();
    let mut cur = a;
    let mut i = 0;
    while cur < b {
        let mut pick = None;
        while i < points.len() && points[i] - cur <= max {
            pick = Some(points[i]);
            i += 1;
        }
        let next = match pick {
            Some(p) => p,
            None => {
                i += 1;
                points[i - 1]
            }
        };
        out.push((cur, next));
        cur = next;
    }
    out
}

fn pack(pieces: &[Piece], max: usize, one_per_chunk: bool) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::new();
    for &p in pieces {
        if let Some(last) = out.last_mut() {
            let mergeable = !one_per_chunk
                && last.kind != BoundaryKind::Forced
                && p.kind != BoundaryKind::Forced
                && p.end - last.start <= max;
            if mergeable {
                last.end = p.end;
                last.kind = p.kind;
                continue;
            }
        }
        out.push(p);
    }
    out
}

/// Something that can be put back together into a script.
pub trait Assemble {
    fn script(&self) -> &str;
    fn index(&self) -> usize;
    fn output(&self) -> &str;
}

impl Assemble for Chunk {
    fn script(&self) -> &str {
        &self.script_path
    }
    fn index(&self) -> usize {
        self.index
    }
    fn output(&self) -> &str {
        &self.text
    }
}

/// Joins chunk outputs in index order, inserting a newline only where the
/// preceding output does not already end with one.
pub fn assemble<T: Assemble>(chunks: &[T]) -> Result<String> {
    let Some(first) = chunks.first() else {
        return Ok(String::new());
    };
    if let Some(other) = chunks.iter().find(|c| c.script() != first.script()) {
        return Err(Error::MixedScripts(first.script().to_string(), other.script().to_string()));
    }
    let mut slots: Vec<Option<&T>> = vec![None; chunks.len()];
    for c in chunks {
        let i = c.index();
        if i >= slots.len() {
            let missing = slots.iter().position(Option::is_none).unwrap_or(slots.len());
            return Err(Error::MissingChunk(missing));
        }
        if slots[i].is_some() {
            return Err(Error::DuplicateChunk(i));
        }
        slots[i] = Some(c);
    }
    let mut out = String::new();
    for slot in slots {
        let c = slot.expect("n distinct indexes below n fill every slot");
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        out.push_str(c.output());
    }
    Ok(out)
}
