//! Exact cosine index and its on-disk layout.
//!
//! An index directory holds `manifest.json`, `entries.jsonl` and
//! `vectors.f32` (packed little-endian f32, `entry_count * dim` values).
//! A knowledge-base directory holds `embedder.json` and one index directory
//! per store.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{Embedder, EmbedderSpec};
use super::{KbEntry, StoreKind};
use crate::error::{Error, Result};

const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    store: StoreKind,
    embedder_id: String,
    dim: usize,
    entries: Vec<KbEntry>,
    vectors: Vec<f32>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub entry: KbEntry,
    pub similarity: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    store: StoreKind,
    embedder_id: String,
    dim: usize,
    entry_count: usize,
}

impl VectorIndex {
    pub fn empty(store: StoreKind, embedder: &Embedder) -> Self {
        VectorIndex {
            store,
            embedder_id: embedder.id(),
            dim: 0,
            entries: Vec::new(),
            vectors: Vec::new(),
            norms: Vec::new(),
        }
    }

    /// Embeds and indexes `entries`, which must share one store.
    pub fn build(entries: Vec<KbEntry>, embedder: &Embedder) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::EmptyIndex);
        };
        let mut index = Self::empty(first.store, embedder);
        index.append(entries, embedder)?;
        Ok(index)
    }

    pub fn append(&mut self, entries: Vec<KbEntry>, embedder: &Embedder) -> Result<()> {
        if embedder.id() != self.embedder_id {
            return Err(Error::EmbedderMismatch {
                expected: self.embedder_id.clone(),
                found: embedder.id(),
            });
        }
        for entry in entries {
            if entry.store != self.store {
                return Err(Error::StoreKindMismatch {
                    expected: self.store,
                    found: entry.store,
                });
            }
            let v = embedder.embed(&entry.text)?;
            self.push_vector(v)?;
            self.entries.push(entry);
        }
        Ok(())
    }

    fn push_vector(&mut self, v: Vec<f32>) -> Result<()> {
        if self.entries.is_empty() && self.vectors.is_empty() {
            self.dim = v.len();
        } else if v.len() != self.dim {
            return Err(Error::IndexFormat(format!(
                "vector has dimension {}, index has {}",
                v.len(),
                self.dim
            )));
        }
        self.norms.push(norm(&v));
        self.vectors.extend(v);
        Ok(())
    }

    pub fn store(&self) -> StoreKind {
        self.store
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.entries
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine similarity of every entry to `query`, in entry order.
    pub fn similarities(&self, query: &[f32]) -> Vec<f64> {
        let qn = norm(query);
        (0..self.len())
            .map(|i| {
                let (n, v) = (self.norms[i], self.vector(i));
                if qn == 0.0 || n == 0.0 {
                    return 0.0;
                }
                let dot: f64 = v.iter().zip(query).map(|(&a, &b)| a as f64 * b as f64).sum();
                (dot / (n * qn)).clamp(-1.0, 1.0)
            })
            .collect()
    }

    /// Embeds `text` and returns the exact top `k` entries with similarity
    /// at least `min_similarity`, ordered by similarity then id.
    pub fn query(&self, embedder: &Embedder, text: &str, k: usize, min_similarity: f64) -> Result<Vec<RetrievalResult>> {
        if embedder.id() != self.embedder_id {
            return Err(Error::EmbedderMismatch {
                expected: self.embedder_id.clone(),
                found: embedder.id(),
            });
        }
        let v = embedder.embed(text)?;
        self.query_vector(&v, k, min_similarity)
    }

    pub fn query_vector(&self, query: &[f32], k: usize, min_similarity: f64) -> Result<Vec<RetrievalResult>> {
        if k == 0 {
            return Err(Error::InvalidK);
        }
        if !self.is_empty() && query.len() != self.dim {
            return Err(Error::IndexFormat(format!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        let sims = self.similarities(query);
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| sims[i] >= min_similarity).collect();
        let cmp = |a: &usize, b: &usize| -> Ordering {
            sims[*b]
                .total_cmp(&sims[*a])
                .then_with(|| self.entries[*a].id.cmp(&self.entries[*b].id))
        };
        if order.len() > k {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_by(cmp);
        Ok(order
            .into_iter()
            .enumerate()
            .map(|(r, i)| RetrievalResult {
                entry: self.entries[i].clone(),
                similarity: sims[i],
                rank: r + 1,
            })
            .collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format_version: INDEX_FORMAT_VERSION,
            store: self.store,
            embedder_id: self.embedder_id.clone(),
            dim: self.dim,
            entry_count: self.len(),
        };
        write_file(&dir.join("manifest.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest)?;
            writeln!(w).map_err(|e| Error::io(dir.join("manifest.json"), e))
        })?;
        let entries_path = dir.join("entries.jsonl");
        write_file(&entries_path, |w| {
            for e in &self.entries {
                serde_json::to_writer(&mut *w, e)?;
                writeln!(w).map_err(|err| Error::io(&entries_path, err))?;
            }
            Ok(())
        })?;
        let vec_path = dir.join("vectors.f32");
        write_file(&vec_path, |w| {
            for v in &self.vectors {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&vec_path, e))?;
            }
            Ok(())
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(Error::IndexFormat(format!(
                "unsupported index version {}",
                manifest.format_version
            )));
        }
        let entries_path = dir.join("entries.jsonl");
        let file = std::fs::File::open(&entries_path).map_err(|e| Error::io(&entries_path, e))?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&entries_path, e))?;
            if !line.trim().is_empty() {
                entries.push(serde_json::from_str::<KbEntry>(&line)?);
            }
        }
        let vec_path = dir.join("vectors.f32");
        let bytes = std::fs::read(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
        if entries.len() != manifest.entry_count || bytes.len() != manifest.entry_count * manifest.dim * 4 {
            return Err(Error::IndexFormat(format!(
                "{}: manifest declares {} entries of dimension {}, found {} entries and {} vector bytes",
                dir.display(),
                manifest.entry_count,
                manifest.dim,
                entries.len(),
                bytes.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|e| e.store != manifest.store) {
            return Err(Error::StoreKindMismatch {
                expected: manifest.store,
                found: bad.store,
            });
        }
        let vectors: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let norms = if manifest.dim == 0 {
            vec![0.0; entries.len()]
        } else {
            vectors.chunks_exact(manifest.dim).map(norm).collect()
        };
        Ok(VectorIndex {
            store: manifest.store,
            embedder_id: manifest.embedder_id,
            dim: manifest.dim,
            entries,
            vectors,
            norms,
        })
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// A set of store indexes sharing one embedder.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub embedder: Embedder,
    pub stores: BTreeMap<StoreKind, VectorIndex>,
}

impl KnowledgeBase {
    pub fn new(embedder: Embedder) -> Self {
        KnowledgeBase {
            embedder,
            stores: BTreeMap::new(),
        }
    }

    /// Builds one index per store; stores listed in `stores` but without
    /// entries become empty indexes.
    pub fn build(embedder: Embedder, entries: BTreeMap<StoreKind, Vec<KbEntry>>, stores: &[StoreKind]) -> Result<Self> {
        let mut kb = Self::new(embedder);
        for &store in stores {
            kb.stores.insert(store, VectorIndex::empty(store, &kb.embedder));
        }
        for (store, list) in entries {
            let index = if list.is_empty() {
                VectorIndex::empty(store, &kb.embedder)
            } else {
                VectorIndex::build(list, &kb.embedder)?
            };
            kb.stores.insert(store, index);
        }
        Ok(kb)
    }

    pub fn get(&self, store: StoreKind) -> Option<&VectorIndex> {
        self.stores.get(&store)
    }

    pub fn missing(&self, required: &[StoreKind]) -> Vec<StoreKind> {
        required.iter().copied().filter(|s| !self.stores.contains_key(s)).collect()
    }

    pub fn require(&self, required: &[StoreKind]) -> Result<()> {
        let missing = self.missing(required);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::StoreMissing(missing))
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("embedder.json");
        let json = serde_json::to_string(&self.embedder.spec())?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        for (store, index) in &self.stores {
            index.save(&dir.join(store.as_str()))?;
        }
        Ok(())
    }

    /// Loads every store directory present under `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("embedder.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let spec: EmbedderSpec = serde_json::from_str(&text)?;
        let mut kb = Self::new(Embedder::from_spec(spec));
        for store in StoreKind::ALL {
            let sub = dir.join(store.as_str());
            if sub.join("manifest.json").is_file() {
                let index = VectorIndex::load(&sub)?;
                if index.embedder_id() != kb.embedder.id() {
                    return Err(Error::EmbedderMismatch {
                        expected: kb.embedder.id(),
                        found: index.embedder_id().to_string(),
                    });
                }
                kb.stores.insert(store, index);
            }
        }
        Ok(kb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{EntryMetadata, TrigramEmbedder};

    fn entry(text: &str) -> KbEntry {
        KbEntry::new(StoreKind::PgDocs, text, None, EntryMetadata::default()).unwrap()
    }

    fn embedder() -> Embedder {
        Embedder::Builtin(TrigramEmbedder::unfitted())
    }

    #[test]
    fn single_entry_self_query() {
        let e = embedder();
        let index = VectorIndex::build(vec![entry("CREATE INDEX ON t (a)")], &e).unwrap();
        let r = index.query(&e, "CREATE INDEX ON t (a)", 1, 0.0).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rank, 1);
        assert!((r[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicates_tie_by_id() {
        let e = embedder();
        let mut entries = vec![entry("same text"), entry("same text")];
        crate::kb::dedupe_ids(&mut entries);
        let index = VectorIndex::build(entries.clone(), &e).unwrap();
        let r = index.query(&e, "same text", 2, 0.0).unwrap();
        assert_eq!(r[0].similarity, r[1].similarity);
        assert!(r[0].entry.id < r[1].entry.id);
    }

    #[test]
    fn threshold_and_k() {
        let e = embedder();
        let index = VectorIndex::build(vec![entry("aaaa"), entry("bbbb"), entry("aaab")], &e).unwrap();
        assert!(index.query(&e, "zzzz", 3, 0.99).unwrap().is_empty());
        assert_eq!(index.query(&e, "aaaa", 2, -1.0).unwrap().len(), 2);
        assert_eq!(index.query(&e, "aaaa", 10, -1.0).unwrap().len(), 3);
        assert!(matches!(index.query(&e, "aaaa", 0, 0.0), Err(Error::InvalidK)));
    }

    #[test]
    fn build_errors() {
        let e = embedder();
        assert!(matches!(VectorIndex::build(vec![], &e), Err(Error::EmptyIndex)));
        let rule = KbEntry::new(StoreKind::SmeRules, "x", None, EntryMetadata::default()).unwrap();
        assert!(matches!(
            VectorIndex::build(vec![entry("a"), rule], &e),
            Err(Error::StoreKindMismatch { .. })
        ));
        let mut index = VectorIndex::build(vec![entry("a")], &e).unwrap();
        let other = Embedder::Builtin(TrigramEmbedder::fit(["something"]));
        assert!(matches!(index.append(vec![entry("b")], &other), Err(Error::EmbedderMismatch { .. })));
        assert!(matches!(index.query(&other, "a", 1, 0.0), Err(Error::EmbedderMismatch { .. })));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = Embedder::Builtin(TrigramEmbedder::fit(["alpha beta", "gamma delta"]));
        let index = VectorIndex::build(vec![entry("alpha beta"), entry("gamma delta")], &e).unwrap();
        index.save(dir.path()).unwrap();
        let back = VectorIndex::load(dir.path()).unwrap();
        assert_eq!(back, index);
        let bytes = std::fs::read(dir.path().join("vectors.f32")).unwrap();
        assert_eq!(bytes.len(), 2 * index.dim() * 4);
    }

    #[test]
    fn knowledge_base_round_trip_and_missing_stores() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(StoreKind::PgDocs, vec![entry("docs paragraph")]);
        let kb = KnowledgeBase::build(embedder(), entries, &[StoreKind::SmeRules]).unwrap();
        assert_eq!(kb.missing(&StoreKind::STRATEGY_A), vec![StoreKind::OracleContext]);
        kb.save(dir.path()).unwrap();
        let back = KnowledgeBase::load(dir.path()).unwrap();
        assert_eq!(back.stores.len(), 2);
        assert!(back.get(StoreKind::SmeRules).unwrap().is_empty());
        assert!(matches!(
            back.require(&[StoreKind::PairExamples]),
            Err(Error::StoreMissing(s)) if s == vec![StoreKind::PairExamples]
        ));
    }
}
