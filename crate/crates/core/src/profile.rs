//! Keyword-level feature profiling of SQL scripts.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::{line_count, tokenize, Dialect, Token, TokenKind};
use crate::segment::segment;
use crate::taxonomy::{FeatureMapping, FeatureTaxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    S,
    M,
    L,
}

impl SizeClass {
    pub fn from_lines(lines: usize) -> Self {
        match lines {
            0..=100 => SizeClass::S,
            101..=200 => SizeClass::M,
            _ => SizeClass::L,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::S => "S",
            SizeClass::M => "M",
            SizeClass::L => "L",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScript {
    pub path: String,
    pub dialect: Dialect,
    pub text: String,
    pub line_count: usize,
    pub size_class: SizeClass,
}

impl SourceScript {
    pub fn new(path: impl Into<String>, dialect: Dialect, text: impl Into<String>) -> Self {
        let text = text.into();
        let lines = line_count(&text);
        SourceScript {
            path: path.into(),
            dialect,
            line_count: lines,
            size_class: SizeClass::from_lines(lines),
            text,
        }
    }

    pub fn load(path: &Path, dialect: Dialect) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(path.display().to_string(), dialect, text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub dialect: Dialect,
    pub counts: BTreeMap<String, u64>,
    pub percentages: BTreeMap<String, f64>,
    pub total_hits: u64,
}

impl FeatureProfile {
    pub fn from_counts(dialect: Dialect, counts: BTreeMap<String, u64>) -> Self {
        let total_hits: u64 = counts.values().sum();
        let percentages = counts
            .iter()
            .map(|(k, &c)| {
                let p = if total_hits == 0 {
                    0.0
                } else {
                    c as f64 / total_hits as f64
                };
                (k.clone(), p)
            })
            .collect();
        FeatureProfile {
            dialect,
            counts,
            percentages,
            total_hits,
        }
    }

    pub fn empty(taxonomy: &FeatureTaxonomy) -> Self {
        let counts = taxonomy
            .classes
            .iter()
            .map(|c| (c.name.clone(), 0))
            .collect();
        Self::from_counts(taxonomy.dialect, counts)
    }

    pub fn count(&self, class: &str) -> u64 {
        self.counts.get(class).copied().unwrap_or(0)
    }

    pub fn percentage(&self, class: &str) -> f64 {
        self.percentages.get(class).copied().unwrap_or(0.0)
    }

    /// Classes with at least one hit.
    pub fn present_classes(&self) -> impl Iterator<Item = &str> {
        self.counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, _)| k.as_str())
    }

    /// Adds `other`'s counts and renormalizes.
    pub fn merge(&mut self, other: &FeatureProfile) {
        let mut counts = std::mem::take(&mut self.counts);
        for (k, c) in &other.counts {
            *counts.entry(k.clone()).or_insert(0) += c;
        }
        *self = Self::from_counts(self.dialect, counts);
    }
}

/// One keyword hit: the matched tokens' byte span and the owning class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    pub class: usize,
    pub start: usize,
    pub end: usize,
    pub line: usize,
}

/// Compiled matcher over a taxonomy.
#[derive(Debug, Clone)]
pub struct Profiler<'t> {
    taxonomy: &'t FeatureTaxonomy,
    // (class, pattern) in taxonomy order
    patterns: Vec<(usize, usize)>,
    by_first_word: HashMap<String, Vec<usize>>,
    prefix_first: Vec<usize>,
}

impl<'t> Profiler<'t> {
    pub fn new(taxonomy: &'t FeatureTaxonomy) -> Self {
        let mut patterns = Vec::new();
        let mut by_first_word: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefix_first = Vec::new();
        for (ci, class) in taxonomy.classes.iter().enumerate() {
            for (pi, pattern) in class.keyword_patterns.iter().enumerate() {
                let id = patterns.len();
                patterns.push((ci, pi));
                let first = &pattern.words[0];
                if first.prefix {
                    prefix_first.push(id);
                } else {
                    by_first_word.entry(first.text.clone()).or_default().push(id);
                }
            }
        }
        Profiler {
            taxonomy,
            patterns,
            by_first_word,
            prefix_first,
        }
    }

    pub fn taxonomy(&self) -> &FeatureTaxonomy {
        self.taxonomy
    }

    /// All keyword hits of `text`, in source order. Literals, comments and
    /// quoted identifiers never match.
    pub fn hits(&self, text: &str) -> Vec<Hit> {
        let lexed = tokenize(text, self.taxonomy.dialect);
        let toks = &lexed.tokens;
        if toks.is_empty() {
            return Vec::new();
        }
        let mut statement_start = vec![false; toks.len()];
        for unit in segment(text, &lexed, self.taxonomy.dialect) {
            if !unit.tokens.is_empty() {
                statement_start[unit.tokens.start] = true;
            }
        }
        for (i, t) in toks.iter().enumerate() {
            let ends = t.is_punct(";") || t.is_slash_terminator() || t.is_punct("{") || t.is_punct("}");
            if ends && i + 1 < toks.len() {
                statement_start[i + 1] = true;
            }
        }

        let mode = self.detect_mode(toks);
        let mut hits = Vec::new();
        let mut skip_line: Option<usize> = None;
        let mut i = 0;
        while i < toks.len() {
            let t = &toks[i];
            if let Some(line) = skip_line {
                if t.line == line {
                    i += 1;
                    continue;
                }
                skip_line = None;
            }
            match self.best_match(toks, i, statement_start[i], mode.as_deref()) {
                Some((id, len)) => {
                    let (class, pi) = self.patterns[id];
                    hits.push(Hit {
                        class,
                        start: t.start,
                        end: toks[i + len - 1].end,
                        line: t.line,
                    });
                    let pattern = &self.taxonomy.classes[class].keyword_patterns[pi];
                    if pattern.anchored || t.is_meta_command() {
                        skip_line = Some(toks[i + len - 1].line);
                    }
                    i += len;
                }
                None => {
                    if t.is_meta_command() {
                        skip_line = Some(t.line);
                    }
                    i += 1;
                }
            }
        }
        hits
    }

    /// A moded class (e.g. RMAN) is active when the script's first statement
    /// matches one of its patterns.
    fn detect_mode(&self, toks: &[Token<'_>]) -> Option<String> {
        let candidates = self.candidates(&toks[0]);
        candidates
            .into_iter()
            .filter_map(|id| {
                let (ci, pi) = self.patterns[id];
                let class = &self.taxonomy.classes[ci];
                let mode = class.mode.as_ref()?;
                self.match_len(toks, 0, &class.keyword_patterns[pi])
                    .map(|_| mode.clone())
            })
            .next()
    }

    fn candidates(&self, t: &Token<'_>) -> Vec<usize> {
        if !eligible(t) {
            return Vec::new();
        }
        let mut out: Vec<usize> = self
            .by_first_word
            .get(&t.text.to_uppercase())
            .cloned()
            .unwrap_or_default();
        out.extend(self.prefix_first.iter().copied().filter(|&id| {
            let (ci, pi) = self.patterns[id];
            self.taxonomy.classes[ci].keyword_patterns[pi].words[0].matches(t.text)
        }));
        out
    }

    fn match_len(&self, toks: &[Token<'_>], i: usize, pattern: &crate::taxonomy::Pattern) -> Option<usize> {
        let n = pattern.words.len();
        if i + n > toks.len() {
            return None;
        }
        pattern
            .words
            .iter()
            .zip(&toks[i..i + n])
            .all(|(w, t)| eligible(t) && w.matches(t.text))
            .then_some(n)
    }

    fn best_match(&self, toks: &[Token<'_>], i: usize, at_start: bool, mode: Option<&str>) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, usize)> = None; // (id, len, exact words)
        for id in self.candidates(&toks[i]) {
            let (ci, pi) = self.patterns[id];
            let class = &self.taxonomy.classes[ci];
            if class.mode.is_some() && class.mode.as_deref() != mode {
                continue;
            }
            let pattern = &class.keyword_patterns[pi];
            if pattern.anchored && !at_start {
                continue;
            }
            let Some(len) = self.match_len(toks, i, pattern) else {
                continue;
            };
            let exact = pattern.words.iter().filter(|w| !w.prefix).count();
            let better = match best {
                None => true,
                Some((bid, blen, bexact)) => (len, exact, std::cmp::Reverse(id)) > (blen, bexact, std::cmp::Reverse(bid)),
            };
            if better {
                best = Some((id, len, exact));
            }
        }
        best.map(|(id, len, _)| (id, len))
    }

    pub fn profile_text(&self, text: &str) -> FeatureProfile {
        let mut counts: BTreeMap<String, u64> = self
            .taxonomy
            .classes
            .iter()
            .map(|c| (c.name.clone(), 0))
            .collect();
        for hit in self.hits(text) {
            *counts
                .get_mut(&self.taxonomy.classes[hit.class].name)
                .expect("class present") += 1;
        }
        FeatureProfile::from_counts(self.taxonomy.dialect, counts)
    }
}

fn eligible(t: &Token<'_>) -> bool {
    t.kind != TokenKind::Literal && !t.is_quoted_identifier()
}

pub fn profile(script: &SourceScript, taxonomy: &FeatureTaxonomy) -> Result<FeatureProfile> {
    if script.dialect != taxonomy.dialect {
        return Err(Error::DialectMismatch {
            expected: taxonomy.dialect,
            found: script.dialect,
            path: Some(script.path.clone()),
        });
    }
    Ok(Profiler::new(taxonomy).profile_text(&script.text))
}

/// Sums per-script counts over a corpus. Scripts are profiled in parallel.
pub fn profile_corpus(scripts: &[SourceScript], taxonomy: &FeatureTaxonomy) -> Result<FeatureProfile> {
    use rayon::prelude::*;

    if scripts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(bad) = scripts.iter().find(|s| s.dialect != taxonomy.dialect) {
        return Err(Error::DialectMismatch {
            expected: taxonomy.dialect,
            found: bad.dialect,
            path: Some(bad.path.clone()),
        });
    }
    let profiler = Profiler::new(taxonomy);
    let profiles: Vec<FeatureProfile> = scripts
        .par_iter()
        .map(|s| profiler.profile_text(&s.text))
        .collect();
    let mut total = FeatureProfile::empty(taxonomy);
    for p in &profiles {
        total.merge(p);
    }
    Ok(total)
}

/// Redistributes Oracle class counts through `mapping` into the PostgreSQL
/// taxonomy. Fractional shares are apportioned by largest remainder so the
/// total number of hits is preserved exactly.
pub fn predict_expected_features(oracle: &FeatureProfile, mapping: &FeatureMapping) -> Result<FeatureProfile> {
    if oracle.dialect != Dialect::Oracle {
        return Err(Error::DialectMismatch {
            expected: Dialect::Oracle,
            found: oracle.dialect,
            path: None,
        });
    }
    mapping.validate()?;
    let mut shares: Vec<f64> = vec![0.0; mapping.target_classes.len()];
    for (class, &count) in &oracle.counts {
        let row = mapping
            .rows
            .get(class)
            .ok_or_else(|| Error::UnmappedClass(class.clone()))?;
        for (target, weight) in row {
            let idx = mapping
                .target_classes
                .iter()
                .position(|c| c == target)
                .expect("validated mapping");
            shares[idx] += count as f64 * weight;
        }
    }
    let floors: Vec<u64> = shares.iter().map(|s| (s + 1e-9).floor() as u64).collect();
    let assigned: u64 = floors.iter().sum();
    let mut leftover = oracle.total_hits.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - floors[a] as f64;
        let fb = shares[b] - floors[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut counts = floors;
    for idx in order {
        if leftover == 0 {
            break;
        }
        counts[idx] += 1;
        leftover -= 1;
    }
    let counts = mapping
        .target_classes
        .iter()
        .cloned()
        .zip(counts)
        .collect();
    Ok(FeatureProfile::from_counts(Dialect::PostgreSql, counts))
}

/// Per-file profile record as written by `sqlmig profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptProfile {
    pub file: String,
    pub dialect: Dialect,
    pub counts: BTreeMap<String, u64>,
    pub percentages: BTreeMap<String, f64>,
    pub size_class: SizeClass,
}

impl ScriptProfile {
    pub fn new(script: &SourceScript, profile: FeatureProfile) -> Self {
        ScriptProfile {
            file: script.path.clone(),
            dialect: script.dialect,
            counts: profile.counts,
            percentages: profile.percentages,
            size_class: script.size_class,
        }
    }
}
