//! Gold-standard retrieval validation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::index::VectorIndex;
use super::KbEntry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    ExactMatch,
    NoMatch,
    PartialMatch,
    MixedFeature,
    Ambiguous,
    SyntaxAlikeSemanticsDiffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRetrievalCase {
    pub query_chunk: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub expected_ids: Vec<String>,
    pub must_abstain: bool,
}

impl GoldRetrievalCase {
    pub fn validate(&self) -> Result<()> {
        if self.must_abstain != (self.scenario == Scenario::NoMatch) {
            return Err(Error::InvalidConfig(format!(
                "gold case {:?}: must_abstain must be true exactly for NoMatch",
                self.scenario
            )));
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<Self>> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                let case: GoldRetrievalCase = serde_json::from_str(&line)?;
                case.validate()?;
                out.push(case);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub cases: usize,
    pub hit_at_1: Option<f64>,
    pub hit_at_k: Option<f64>,
    pub mrr: Option<f64>,
    pub abstention_correctness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScorecard {
    pub k: usize,
    pub min_similarity: f64,
    pub cases: usize,
    /// Over cases that expect a match (every scenario but NoMatch).
    pub hit_at_1: Option<f64>,
    pub hit_at_k: Option<f64>,
    pub mrr: Option<f64>,
    /// Share of NoMatch cases that retrieved nothing.
    pub abstention_correctness: Option<f64>,
    /// Share of queries ranked identically by two independent builds.
    pub ranking_stability: f64,
    pub per_scenario: BTreeMap<Scenario, ScenarioScore>,
}

#[derive(Default)]
struct Tally {
    cases: usize,
    matched: usize,
    hit1: usize,
    hitk: usize,
    rr: f64,
    abstain_cases: usize,
    abstained: usize,
}

impl Tally {
    fn add(&mut self, case: &GoldRetrievalCase, ids: &[String]) {
        self.cases += 1;
        if case.must_abstain {
            self.abstain_cases += 1;
            self.abstained += ids.is_empty() as usize;
            return;
        }
        self.matched += 1;
        if ids.first().is_some_and(|id| case.expected_ids.contains(id)) {
            self.hit1 += 1;
        }
        if let Some(pos) = ids.iter().position(|id| case.expected_ids.contains(id)) {
            self.hitk += 1;
            self.rr += 1.0 / (pos + 1) as f64;
        }
    }

    fn ratio(n: usize, d: usize) -> Option<f64> {
        (d > 0).then(|| n as f64 / d as f64)
    }

    fn score(&self) -> ScenarioScore {
        ScenarioScore {
            cases: self.cases,
            hit_at_1: Self::ratio(self.hit1, self.matched),
            hit_at_k: Self::ratio(self.hitk, self.matched),
            mrr: (self.matched > 0).then(|| self.rr / self.matched as f64),
            abstention_correctness: Self::ratio(self.abstained, self.abstain_cases),
        }
    }
}

/// Scores retrieval over `entries` against a gold set. The index is built
/// twice, the second time from the entries in reverse order, and the two
/// rankings are compared query by query.
pub fn evaluate_retrieval(
    entries: &[KbEntry],
    embedder: &Embedder,
    gold: &[GoldRetrievalCase],
    k: usize,
    min_similarity: f64,
) -> Result<RetrievalScorecard> {
    if gold.is_empty() {
        return Err(Error::InvalidConfig("gold retrieval set is empty".into()));
    }
    for case in gold {
        case.validate()?;
    }
    let first = VectorIndex::build(entries.to_vec(), embedder)?;
    let second = VectorIndex::build(entries.iter().rev().cloned().collect(), embedder)?;

    let mut total = Tally::default();
    let mut by_scenario: BTreeMap<Scenario, Tally> = BTreeMap::new();
    let mut stable = 0;
    for case in gold {
        let ids: Vec<String> = first
            .query(embedder, &case.query_chunk, k, min_similarity)?
            .into_iter()
            .map(|r| r.entry.id)
            .collect();
        let again: Vec<String> = second
            .query(embedder, &case.query_chunk, k, min_similarity)?
            .into_iter()
            .map(|r| r.entry.id)
            .collect();
        stable += (ids == again) as usize;
        total.add(case, &ids);
        by_scenario.entry(case.scenario).or_default().add(case, &ids);
    }
    let overall = total.score();
    Ok(RetrievalScorecard {
        k,
        min_similarity,
        cases: gold.len(),
        hit_at_1: overall.hit_at_1,
        hit_at_k: overall.hit_at_k,
        mrr: overall.mrr,
        abstention_correctness: overall.abstention_correctness,
        ranking_stability: stable as f64 / gold.len() as f64,
        per_scenario: by_scenario.into_iter().map(|(s, t)| (s, t.score())).collect(),
    })
}
