//! Lexical similarity metrics: token recall, BLEU and chrF.

use std::collections::HashMap;
use std::hash::Hash;

use crate::lexer::{tokenize, Dialect, TokenKind};

pub const BLEU_MAX_ORDER: usize = 4;
pub const CHRF_MAX_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// Metric tokens: keywords upper-cased, everything else verbatim.
pub fn metric_tokens(text: &str) -> Vec<String> {
    tokenize(text, Dialect::PostgreSql)
        .tokens
        .iter()
        .map(|t| {
            if t.kind == TokenKind::Keyword {
                t.text.to_uppercase()
            } else {
                t.text.to_string()
            }
        })
        .collect()
}

fn counts<T: Hash + Eq + Clone>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

fn clipped_matches<T: Hash + Eq>(cand: &HashMap<T, usize>, reference: &HashMap<T, usize>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Share of reference tokens (as a multiset) found in the candidate.
pub fn token_recall(candidate: &str, reference: &str) -> f64 {
    let r = metric_tokens(reference);
    let c = metric_tokens(candidate);
    match (c.is_empty(), r.is_empty()) {
        (true, true) => 1.0,
        (false, true) => 0.0,
        _ => clipped_matches(&counts(c), &counts(r.iter().cloned())) as f64 / r.len() as f64,
    }
}

/// Sufficient statistics of BLEU for one or more segment pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; BLEU_MAX_ORDER],
    pub totals: [usize; BLEU_MAX_ORDER],
    pub cand_len: usize,
    pub ref_len: usize,
    /// Pairs where both sides are empty.
    pub empty_pairs: usize,
    pub pairs: usize,
}

impl BleuStats {
    pub fn from_tokens(cand: &[String], reference: &[String]) -> Self {
        let mut s = BleuStats {
            cand_len: cand.len(),
            ref_len: reference.len(),
            pairs: 1,
            empty_pairs: usize::from(cand.is_empty() && reference.is_empty()),
            ..Default::default()
        };
        for n in 1..=BLEU_MAX_ORDER {
            let c = counts(cand.windows(n));
            let r = counts(reference.windows(n));
            s.matches[n - 1] = clipped_matches(&c, &r);
            s.totals[n - 1] = cand.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn add(&mut self, o: &BleuStats) {
        for n in 0..BLEU_MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
        self.empty_pairs += o.empty_pairs;
        self.pairs += o.pairs;
    }

    /// Geometric mean of modified precisions times the brevity penalty.
    /// Order 1 is unsmoothed; orders 2-4 use add-one smoothing.
    pub fn score(&self) -> f64 {
        if self.pairs > 0 && self.empty_pairs == self.pairs {
            return 1.0;
        }
        if self.cand_len == 0 || self.ref_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = (self.matches[0] as f64 / self.totals[0] as f64).ln();
        for n in 1..BLEU_MAX_ORDER {
            log_sum += ((self.matches[n] + 1) as f64 / (self.totals[n] + 1) as f64).ln();
        }
        let bp = if self.cand_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        };
        (bp * (log_sum / BLEU_MAX_ORDER as f64).exp()).clamp(0.0, 1.0)
    }
}

pub fn bleu(candidate: &str, reference: &str) -> f64 {
    BleuStats::from_tokens(&metric_tokens(candidate), &metric_tokens(reference)).score()
}

/// Corpus BLEU: statistics are summed over pairs before scoring.
pub fn corpus_bleu<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> f64 {
    let mut total = BleuStats::default();
    for (c, r) in pairs {
        total.add(&BleuStats::from_tokens(&metric_tokens(c), &metric_tokens(r)));
    }
    total.score()
}

/// Lowercase is not applied; runs of whitespace become one space and the
/// ends are trimmed.
pub fn collapse_whitespace(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars());
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChrfStats {
    pub matches: [usize; CHRF_MAX_ORDER],
    pub cand_totals: [usize; CHRF_MAX_ORDER],
    pub ref_totals: [usize; CHRF_MAX_ORDER],
    pub empty_pairs: usize,
    pub pairs: usize,
}

impl ChrfStats {
    pub fn from_texts(candidate: &str, reference: &str) -> Self {
        let c = collapse_whitespace(candidate);
        let r = collapse_whitespace(reference);
        let mut s = ChrfStats {
            pairs: 1,
            empty_pairs: usize::from(c.is_empty() && r.is_empty()),
            ..Default::default()
        };
        for n in 1..=CHRF_MAX_ORDER {
            let cc = counts(c.windows(n));
            let rc = counts(r.windows(n));
            s.matches[n - 1] = clipped_matches(&cc, &rc);
            s.cand_totals[n - 1] = c.len().saturating_sub(n - 1);
            s.ref_totals[n - 1] = r.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn add(&mut self, o: &ChrfStats) {
        for n in 0..CHRF_MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.cand_totals[n] += o.cand_totals[n];
            self.ref_totals[n] += o.ref_totals[n];
        }
        self.empty_pairs += o.empty_pairs;
        self.pairs += o.pairs;
    }

    /// F-beta of precision and recall averaged over the orders where both
    /// sides have n-grams.
    pub fn score(&self) -> f64 {
        if self.pairs > 0 && self.empty_pairs == self.pairs {
            return 1.0;
        }
        let (mut p, mut r, mut orders) = (0.0, 0.0, 0usize);
        for n in 0..CHRF_MAX_ORDER {
            if self.cand_totals[n] == 0 || self.ref_totals[n] == 0 {
                continue;
            }
            p += self.matches[n] as f64 / self.cand_totals[n] as f64;
            r += self.matches[n] as f64 / self.ref_totals[n] as f64;
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        let (p, r) = (p / orders as f64, r / orders as f64);
        if p + r == 0.0 {
            return 0.0;
        }
        let b2 = CHRF_BETA * CHRF_BETA;
        ((1.0 + b2) * p * r / (b2 * p + r)).clamp(0.0, 1.0)
    }
}

pub fn chrf(candidate: &str, reference: &str) -> f64 {
    ChrfStats::from_texts(candidate, reference).score()
}

pub fn corpus_chrf<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> f64 {
    let mut total = ChrfStats::default();
    for (c, r) in pairs {
        total.add(&ChrfStats::from_texts(c, r));
    }
    total.score()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_are_case_folded() {
        assert_eq!(metric_tokens("select a From t"), ["SELECT", "a", "FROM", "t"]);
        assert_eq!(metric_tokens("SELECT 'Mixed' FROM \"T\""), ["SELECT", "'Mixed'", "FROM", "\"T\""]);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(token_recall("SELECT a FROM t", "SELECT a FROM t"), 1.0);
        assert_eq!(token_recall("x y", "SELECT a FROM t"), 0.0);
        assert_eq!(token_recall("SELECT a", "SELECT a FROM t"), 0.5);
        assert_eq!(token_recall("", ""), 1.0);
        assert_eq!(token_recall("a", ""), 0.0);
        assert_eq!(token_recall("", "a"), 0.0);
        // multiset: one candidate `a` matches only one of two reference `a`s
        assert_eq!(token_recall("a", "a a"), 0.5);
    }

    #[test]
    fn bleu_edges() {
        assert_eq!(bleu("SELECT a FROM t;", "SELECT a FROM t;"), 1.0);
        assert_eq!(bleu("", "SELECT a"), 0.0);
        assert_eq!(bleu("", ""), 1.0);
        assert_eq!(bleu("x y z", "SELECT a FROM t"), 0.0);
    }

    #[test]
    fn bleu_one_substitution_by_hand() {
        // ref  a b c d e ; cand a b X d e
        // p1 = 4/5, p2 = (2+1)/(4+1), p3 = (0+1)/(3+1), p4 = (0+1)/(2+1), BP = 1
        let got = bleu("a b x d e", "a b c d e");
        let want = (0.8f64 * 0.6 * 0.25 * (1.0 / 3.0)).powf(0.25);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn bleu_brevity_penalty() {
        // cand a b ; ref a b c d : p1 = 1, p2 = 2/2, p3 = 1/1, p4 = 1/1, BP = e^(1 - 2)
        let got = bleu("a b", "a b c d");
        assert!((got - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn chrf_edges() {
        assert_eq!(chrf("SELECT 1", "SELECT 1"), 1.0);
        assert_eq!(chrf("abc", "xyz"), 0.0);
        assert_eq!(chrf("", ""), 1.0);
        assert_eq!(chrf("", "x"), 0.0);
        assert_eq!(chrf("a  b\n", " a b"), 1.0);
        assert!(chrf("SELECT", "SELECT a FROM t") < chrf("SELECT a FROM t", "SELECT a FROM t"));
    }

    #[test]
    fn chrf_by_hand() {
        // cand "ab", ref "abc": n=1 P=2/2 R=2/3, n=2 P=1/1 R=1/2; n>=3 skipped (cand has none)
        let (p, r) = (1.0, (2.0 / 3.0 + 0.5) / 2.0);
        let want = 5.0 * p * r / (4.0 * p + r);
        assert!((chrf("ab", "abc") - want).abs() < 1e-12);
    }

    #[test]
    fn corpus_variants_sum_statistics() {
        let pairs = [("a b c", "a b c"), ("x y", "x z")];
        let b = corpus_bleu(pairs);
        let mut s = BleuStats::from_tokens(&metric_tokens("a b c"), &metric_tokens("a b c"));
        s.add(&BleuStats::from_tokens(&metric_tokens("x y"), &metric_tokens("x z")));
        assert_eq!(b, s.score());
        assert_eq!(corpus_chrf([("ab", "ab")]), 1.0);
    }
}
