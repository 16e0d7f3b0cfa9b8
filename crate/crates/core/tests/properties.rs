mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqlmig::chunker::{assemble, chunk_with, ChunkConfig};
use sqlmig::eval::{bleu, chrf, pearson, token_recall};
use sqlmig::gap::{assign_splits, gap_feature, DatasetSample, SampleKind, Split, SplitConfig};
use sqlmig::lexer::{tokenize, Dialect};
use sqlmig::manifest::fingerprint;
use sqlmig::profile::{profile, SizeClass, SourceScript};
use sqlmig::taxonomy::FeatureTaxonomy;

fn script_strategy() -> impl Strategy<Value = String> {
    (any::<u64>(), 1usize..25).prop_map(|(seed, pieces)| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        common::oracle_script(&mut r, pieces)
    })
}

fn sql_ish() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[A-Za-z0-9_ ,;()'\"=*/\n-]{0,80}").unwrap()
}

fn sample(id: usize, tags: Vec<String>) -> DatasetSample {
    DatasetSample {
        id: format!("s{id:04}"),
        kind: SampleKind::Pair,
        source: "gen".into(),
        oracle_text: String::new(),
        counterpart: String::new(),
        feature_tags: tags,
        feature_counts: BTreeMap::new(),
        split: Split::Test,
        size_class: SizeClass::S,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tokens_are_ordered_slices_of_the_source(text in sql_ish()) {
        let lexed = tokenize(&text, Dialect::Oracle);
        let mut last = 0;
        for t in &lexed.tokens {
            prop_assert!(t.start >= last && t.start < t.end && t.end <= text.len());
            prop_assert_eq!(t.text, &text[t.start..t.end]);
            last = t.end;
        }
    }

    #[test]
    fn chunks_tile_the_script(text in script_strategy(), max in 256usize..2048, per_stmt in any::<bool>()) {
        let tax = FeatureTaxonomy::default_for(Dialect::Oracle);
        let script = SourceScript::new("p.sql", Dialect::Oracle, text.clone());
        let chunks = chunk_with(&script, &tax, &ChunkConfig { max_chunk_bytes: max, statement_per_chunk: per_stmt });
        let mut pos = 0;
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.index, i);
            prop_assert_eq!(c.start, pos);
            prop_assert_eq!(&c.text, &text[c.start..c.end]);
            pos = c.end;
        }
        prop_assert_eq!(pos, text.len());
        // every generated piece ends in a newline, so reassembly is exact
        prop_assert_eq!(assemble(&chunks).unwrap(), text);
    }

    #[test]
    fn chunk_features_sum_to_the_file_profile(text in script_strategy(), max in 256usize..1024) {
        let tax = FeatureTaxonomy::default_for(Dialect::Oracle);
        let script = SourceScript::new("p.sql", Dialect::Oracle, text);
        let whole = profile(&script, &tax).unwrap();
        let chunks = chunk_with(&script, &tax, &ChunkConfig { max_chunk_bytes: max, statement_per_chunk: false });
        for class in tax.class_names() {
            let summed: u64 = chunks.iter().map(|c| c.features.count(class)).sum();
            prop_assert_eq!(summed, whole.count(class));
        }
        let hits: u64 = chunks.iter().map(|c| c.features.total_hits).sum();
        prop_assert_eq!(hits, whole.total_hits);
    }

    #[test]
    fn metrics_stay_in_unit_range(a in sql_ish(), b in sql_ish()) {
        for v in [token_recall(&a, &b), bleu(&a, &b), chrf(&a, &b)] {
            prop_assert!((0.0..=1.0).contains(&v), "{}", v);
        }
    }

    #[test]
    fn identical_texts_score_one(a in script_strategy()) {
        prop_assert_eq!(token_recall(&a, &a), 1.0);
        prop_assert_eq!(bleu(&a, &a), 1.0);
        prop_assert_eq!(chrf(&a, &a), 1.0);
    }

    #[test]
    fn gap_feature_stays_below_half(gq in 0.0f64..=1.0, gd in 0.0f64..=1.0, beta in 0.0f64..0.9) {
        let pct = gap_feature(gq, gd, beta).unwrap();
        let x = (1.0 + beta * beta) * (1.0 - gq) * (1.0 - gd);
        prop_assert!(pct <= 50.0 + 1e-9);
        prop_assert!((pct - (1.0 - 1.0 / (2.0 - x)) * 100.0).abs() < 1e-9);
    }

    #[test]
    fn splits_are_deterministic_and_follow_the_ratio(
        tags in proptest::collection::vec(0usize..4, 1..120),
        ratio in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let names = ["CORE_SQL", "PL_SQL", "SQL_PLUS", "RMAN"];
        let make = || -> Vec<DatasetSample> {
            tags.iter().enumerate().map(|(i, &t)| sample(i, vec![names[t].to_string()])).collect()
        };
        let cfg = SplitConfig { train_ratio: ratio, seed };
        let (mut a, mut b) = (make(), make());
        assign_splits(&mut a, &cfg).unwrap();
        assign_splits(&mut b, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for t in 0..4 {
            let group: Vec<&DatasetSample> = a.iter().filter(|s| s.feature_tags[0] == names[t]).collect();
            let train = group.iter().filter(|s| s.split == Split::Train).count();
            prop_assert_eq!(train, (group.len() as f64 * ratio).round() as usize);
        }
    }

    #[test]
    fn pearson_is_bounded(xs in proptest::collection::vec(-1e3f64..1e3, 2..40), shift in -5.0f64..5.0) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.5 + shift + (i % 3) as f64).collect();
        if let Some(r) = pearson(&xs, &ys) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r), "{}", r);
        }
        if let Some(r) = pearson(&xs, &xs) {
            prop_assert!((r - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fingerprints_depend_on_content_and_order(a in sql_ish(), b in sql_ish()) {
        let one = fingerprint([("a", a.as_bytes()), ("b", b.as_bytes())]);
        prop_assert_eq!(&one, &fingerprint([("a", a.as_bytes()), ("b", b.as_bytes())]));
        prop_assert_ne!(&one, &fingerprint([("a", a.as_bytes()), ("b", format!("{b}!").as_bytes())]));
        prop_assert_ne!(&one, &fingerprint([("b", b.as_bytes()), ("a", a.as_bytes())]));
    }
}
