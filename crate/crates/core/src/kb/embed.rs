//! Text embedders.
//!
//! The built-in embedder hashes character trigrams of the lowercased,
//! whitespace-collapsed text into 1024 buckets, weights bucket counts by a
//! smoothed inverse document frequency fitted on a corpus, and L2-normalizes.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const BUILTIN_DIM: usize = 1024;
pub const EMBED_URL_ENV: &str = "MIGRATE_EMBED_URL";

#[derive(Debug, Clone, PartialEq)]
pub struct TrigramEmbedder {
    idf: Vec<f32>,
    id: String,
}

impl TrigramEmbedder {
    /// Embedder with unit weights for every bucket.
    pub fn unfitted() -> Self {
        Self::from_idf(vec![1.0; BUILTIN_DIM])
    }

    /// Fits document frequencies over `texts`: `idf = ln((1 + n) / (1 + df)) + 1`.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df = vec![0u32; BUILTIN_DIM];
        let mut n = 0u32;
        let mut seen = vec![false; BUILTIN_DIM];
        for text in texts {
            n += 1;
            seen.iter_mut().for_each(|s| *s = false);
            for_each_bucket(text, |b| seen[b] = true);
            for (d, &s) in df.iter_mut().zip(&seen) {
                *d += s as u32;
            }
        }
        let idf = df
            .iter()
            .map(|&d| (((1 + n) as f64 / (1 + d) as f64).ln() + 1.0) as f32)
            .collect();
        Self::from_idf(idf)
    }

    pub fn from_idf(idf: Vec<f32>) -> Self {
        let mut hasher = Sha256::new();
        for v in &idf {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        TrigramEmbedder {
            id: format!("trigram-tfidf-{}:{hex}", idf.len()),
            idf,
        }
    }

    pub fn idf(&self) -> &[f32] {
        &self.idf
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut tf = vec![0f64; self.idf.len()];
        for_each_bucket(text, |b| tf[b] += 1.0);
        let weighted: Vec<f64> = tf.iter().zip(&self.idf).map(|(t, &w)| t * w as f64).collect();
        let norm = weighted.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; self.idf.len()];
        }
        weighted.iter().map(|v| (v / norm) as f32).collect()
    }
}

fn normalize(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(c.to_lowercase());
    }
    out
}

/// Calls `f` with the bucket of every trigram; texts shorter than three
/// characters contribute one gram made of the whole text.
fn for_each_bucket(text: &str, mut f: impl FnMut(usize)) {
    let chars = normalize(text);
    if chars.is_empty() {
        return;
    }
    let mut gram = String::new();
    if chars.len() < 3 {
        gram.extend(&chars);
        f(bucket(&gram));
        return;
    }
    for w in chars.windows(3) {
        gram.clear();
        gram.extend(w);
        f(bucket(&gram));
    }
}

/// FNV-1a over the gram bytes.
fn bucket(gram: &str) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in gram.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % BUILTIN_DIM as u64) as usize
}

/// Remote embedder: `POST {url}` with `{"text": ...}`, answer `{"embedding": [...]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpEmbedder {
    pub url: String,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn from_env() -> Result<Self> {
        let url = std::env::var(EMBED_URL_ENV)
            .map_err(|_| Error::EmbedderUnavailable(format!("{EMBED_URL_ENV} is not set")))?;
        Ok(HttpEmbedder {
            url,
            timeout: Duration::from_secs(30),
        })
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let unavailable = |e: ureq::Error| Error::EmbedderUnavailable(format!("{}: {e}", self.url));
        let resp: EmbedResponse = agent
            .post(&self.url)
            .send_json(EmbedRequest { text })
            .map_err(unavailable)?
            .body_mut()
            .read_json()
            .map_err(unavailable)?;
        Ok(resp.embedding)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    Builtin(TrigramEmbedder),
    Http(HttpEmbedder),
}

/// Persisted form of an embedder (`embedder.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderSpec {
    Builtin { idf: Vec<f32> },
    Http { url: String, timeout_secs: u64 },
}

impl Embedder {
    pub fn id(&self) -> String {
        match self {
            Embedder::Builtin(e) => e.id.clone(),
            Embedder::Http(h) => format!("http:{}", h.url),
        }
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>> {
        match self {
            Embedder::Builtin(e) => Ok(e.embed(text)),
            Embedder::Http(h) => h.embed(text),
        }
    }

    pub fn spec(&self) -> EmbedderSpec {
        match self {
            Embedder::Builtin(e) => EmbedderSpec::Builtin { idf: e.idf.clone() },
            Embedder::Http(h) => EmbedderSpec::Http {
                url: h.url.clone(),
                timeout_secs: h.timeout.as_secs(),
            },
        }
    }

    pub fn from_spec(spec: EmbedderSpec) -> Self {
        match spec {
            EmbedderSpec::Builtin { idf } => Embedder::Builtin(TrigramEmbedder::from_idf(idf)),
            EmbedderSpec::Http { url, timeout_secs } => Embedder::Http(HttpEmbedder {
                url,
                timeout: Duration::from_secs(timeout_secs),
            }),
        }
    }
}

/// Cosine similarity computed in f64; zero when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        let e = TrigramEmbedder::fit(["SELECT a FROM t", "BEGIN NULL; END;"]);
        let a = e.embed("SELECT a FROM t WHERE x = 1");
        assert_eq!(a, e.embed("SELECT a FROM t WHERE x = 1"));
        assert_eq!(a.len(), BUILTIN_DIM);
        let norm: f64 = a.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn whitespace_and_case_are_normalized() {
        let e = TrigramEmbedder::unfitted();
        assert_eq!(e.embed("select  a\n from t"), e.embed("SELECT A FROM T"));
    }

    #[test]
    fn disjoint_alphabets_are_orthogonal() {
        let e = TrigramEmbedder::unfitted();
        let a = e.embed("aaaa bbbb");
        let b = e.embed("xyz xyz");
        assert!(cosine(&a, &b).abs() < 1e-9);
    }

    #[test]
    fn empty_and_short_texts() {
        let e = TrigramEmbedder::unfitted();
        assert!(e.embed("").iter().all(|&v| v == 0.0));
        assert!(e.embed("   ").iter().all(|&v| v == 0.0));
        let short = e.embed("ab");
        assert!((cosine(&short, &short) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn id_tracks_idf() {
        let a = TrigramEmbedder::fit(["one text"]);
        let b = TrigramEmbedder::fit(["another text entirely"]);
        assert_ne!(a.id, b.id);
        assert_eq!(a.id, TrigramEmbedder::from_idf(a.idf.clone()).id);
    }

    #[test]
    fn spec_round_trip() {
        let e = Embedder::Builtin(TrigramEmbedder::fit(["x y z"]));
        let json = serde_json::to_string(&e.spec()).unwrap();
        let back = Embedder::from_spec(serde_json::from_str(&json).unwrap());
        assert_eq!(back.id(), e.id());
    }

    #[test]
    fn unreachable_endpoint_is_reported() {
        let h = HttpEmbedder {
            url: "http://127.0.0.1:9/embed".into(),
            timeout: Duration::from_secs(2),
        };
        assert!(matches!(h.embed("x"), Err(Error::EmbedderUnavailable(_))));
    }
}
