use std::collections::HashSet;

use chrono::NaiveDate;
use headcheck_core::analysis::{mean_length, pos_profile, word_frequencies};
use headcheck_core::corpus::{build_dataset, temporal_split, BuildOptions, DatasetInputs, Era, Headline};
use headcheck_core::tagger::RuleTagger;
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "police", "charge", "man", "over", "crash", "council", "backs", "new", "plan", "to", "build", "homes", "in",
    "sydney", "fire", "crews", "battle", "blaze", "the", "rising", "quickly", "record", "20",
];

fn headline_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..10).prop_map(|w| w.join(" "))
}

fn texts() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(headline_text(), 1..40)
}

proptest! {
    #[test]
    fn temporal_split_is_a_partition(years in prop::collection::vec(2012i32..2020, 0..60)) {
        let hs: Vec<Headline> = years
            .iter()
            .enumerate()
            .map(|(i, y)| Headline::real(&format!("h {i}"), NaiveDate::from_ymd_opt(*y, 6, 1).unwrap()).unwrap())
            .collect();
        let split = temporal_split(hs.clone());
        prop_assert_eq!(split.defender.len() + split.attacker.len() + split.discarded, hs.len());
        prop_assert!(split.defender.iter().all(|h| h.year == 2015));
        prop_assert!(split.attacker.iter().all(|h| h.year == 2016 || h.year == 2017));
        let expected_discard = years.iter().filter(|y| !(2015..=2017).contains(*y)).count();
        prop_assert_eq!(split.discarded, expected_discard);
    }

    #[test]
    fn dataset_sizes_add_up_and_splits_are_disjoint(
        n_real in 1usize..60, n_gen in 1usize..60, n_att in 1usize..20, seed in any::<u64>(),
        ratio in prop::option::of(0.25f64..4.0),
    ) {
        let inputs = DatasetInputs {
            defender_real: (0..n_real).map(|i| Headline::real(&format!("dr {i}"), NaiveDate::from_ymd_opt(2015, 2, 1).unwrap()).unwrap()).collect(),
            defender_generated: (0..n_gen).map(|i| Headline::generated(&format!("dg {i}"), Era::Defender).unwrap()).collect(),
            attacker_real: (0..n_att).map(|i| Headline::real(&format!("ar {i}"), NaiveDate::from_ymd_opt(2017, 2, 1).unwrap()).unwrap()).collect(),
            attacker_generated: (0..n_att).map(|i| Headline::generated(&format!("ag {i}"), Era::Attacker).unwrap()).collect(),
        };
        let b = build_dataset(inputs, BuildOptions { seed, balance_ratio: ratio }).unwrap();
        let pool = b.train.len() + b.dev.len();
        let m = &b.metadata;
        prop_assert_eq!(pool + m.balanced_away.real + m.balanced_away.generated, n_real + n_gen);
        prop_assert_eq!(b.dev.len(), (pool as f64 * 0.2).round() as usize);
        prop_assert_eq!(b.test.len(), 2 * n_att);
        let train: HashSet<&str> = b.train.iter().map(|e| e.text.as_str()).collect();
        let dev: HashSet<&str> = b.dev.iter().map(|e| e.text.as_str()).collect();
        let test: HashSet<&str> = b.test.iter().map(|e| e.text.as_str()).collect();
        prop_assert!(train.is_disjoint(&dev) && train.is_disjoint(&test) && dev.is_disjoint(&test));
        prop_assert!(b.train.iter().chain(&b.dev).all(|e| e.year == 2015));
        prop_assert!(b.test.iter().all(|e| e.year >= 2016));
    }

    #[test]
    fn word_frequencies_ignore_order(mut hs in texts(), k in 1usize..10) {
        let a = word_frequencies(&hs, k).unwrap();
        hs.reverse();
        let b = word_frequencies(&hs, k).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pos_profile_sums_to_one(hs in texts()) {
        let p = pos_profile(&hs, &RuleTagger::default()).unwrap();
        let sum: f64 = p.tag_freq.values().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(p.tag_freq.values().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn mean_length_of_concatenation_is_weighted_mean(a in texts(), b in texts()) {
        let ma = mean_length(&a).unwrap();
        let mb = mean_length(&b).unwrap();
        let all: Vec<String> = a.iter().chain(&b).cloned().collect();
        let weighted = (ma * a.len() as f64 + mb * b.len() as f64) / all.len() as f64;
        prop_assert!((mean_length(&all).unwrap() - weighted).abs() < 1e-12);
    }
}
