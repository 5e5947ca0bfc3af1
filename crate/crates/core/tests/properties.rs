use std::time::Duration;

use inferbench_core::accuracy::{
    lcs_len, rouge_l, rouge_n, score_pairs, score_pairs_sequential, tokenize,
};
use inferbench_core::scenario::{nearest_rank, schedule_arrivals};
use inferbench_core::ScenarioConfig;
use proptest::prelude::*;

/// Sorted-index oracle: the smallest value with at least p% of the data at
/// or below it.
fn brute_percentile(values: &[u64], p: f64) -> u64 {
    let mut sorted = values.to_vec();
    sorted.sort();
    let n = sorted.len() as f64;
    for (i, v) in sorted.iter().enumerate() {
        if (i + 1) as f64 * 100.0 >= p * n {
            return *v;
        }
    }
    *sorted.last().unwrap()
}

/// LCS by enumerating every subsequence of `a`.
fn lcs_exhaustive(a: &[&str], b: &[&str]) -> usize {
    fn is_subseq(sub: &[&str], of: &[&str]) -> bool {
        let mut it = of.iter();
        sub.iter().all(|s| it.any(|o| o == s))
    }
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&str> = (0..a.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| a[i])
            .collect();
        if sub.len() > best && is_subseq(&sub, b) {
            best = sub.len();
        }
    }
    best
}

#[test]
fn lcs_matches_exhaustive_search_on_small_lists() {
    let alphabet = ["a", "b", "c"];
    let mut lists: Vec<Vec<&str>> = vec![vec![]];
    for len in 1..=4 {
        let mut idx = vec![0usize; len];
        loop {
            lists.push(idx.iter().map(|&i| alphabet[i]).collect());
            let mut k = 0;
            while k < len && idx[k] == 2 {
                idx[k] = 0;
                k += 1;
            }
            if k == len {
                break;
            }
            idx[k] += 1;
        }
    }
    for a in &lists {
        for b in &lists {
            assert_eq!(lcs_len(a, b), lcs_exhaustive(a, b), "{a:?} {b:?}");
        }
    }
}

fn token_list() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(
        prop_oneof![Just("a"), Just("b"), Just("c"), Just("d")],
        0..12,
    )
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn percentile_matches_oracle(
        values in proptest::collection::vec(0u64..1_000_000, 1..200),
        p in 0.0f64..=100.0,
    ) {
        let mut sorted = values.clone();
        sorted.sort();
        prop_assert_eq!(nearest_rank(&sorted, p), Some(brute_percentile(&values, p)));
    }

    #[test]
    fn percentile_is_a_member_and_monotone(
        values in proptest::collection::vec(0u64..1000, 1..100),
        p in 0.0f64..=100.0,
        q in 0.0f64..=100.0,
    ) {
        let mut sorted = values.clone();
        sorted.sort();
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let a = nearest_rank(&sorted, lo).unwrap();
        let b = nearest_rank(&sorted, hi).unwrap();
        prop_assert!(values.contains(&a));
        prop_assert!(a <= b);
    }

    #[test]
    fn rouge_scores_are_bounded_and_symmetric(a in token_list(), b in token_list()) {
        for n in 1..=2 {
            let s = rouge_n(&a, &b, n);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - rouge_n(&b, &a, n)).abs() < 1e-12);
        }
        let l = rouge_l(&a, &b);
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert!((l - rouge_l(&b, &a)).abs() < 1e-12);
        prop_assert!(lcs_len(&a, &b) <= a.len().min(b.len()));
    }

    #[test]
    fn identical_text_scores_one(a in proptest::collection::vec("[a-z]{1,5}", 2..10)) {
        prop_assert_eq!(rouge_n(&a, &a, 1), 1.0);
        prop_assert_eq!(rouge_n(&a, &a, 2), 1.0);
        prop_assert_eq!(rouge_l(&a, &a), 1.0);
    }

    #[test]
    fn parallel_scoring_matches_sequential(
        pairs in proptest::collection::vec(("[a-c ]{0,30}", "[a-c ]{0,30}"), 0..40),
    ) {
        prop_assert_eq!(score_pairs(&pairs), score_pairs_sequential(&pairs));
    }

    #[test]
    fn schedule_is_sorted_and_seeded(seed in any::<u64>(), qps in 0.5f64..500.0) {
        let mut c = ScenarioConfig::server(qps);
        c.rng_seed = seed;
        c.min_duration = Duration::ZERO;
        let a = schedule_arrivals(&c, 200).unwrap();
        prop_assert!(a.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(&a, &schedule_arrivals(&c, 200).unwrap());
    }
}

#[test]
fn rouge_fixtures() {
    let t = |s: &str| tokenize(s);
    assert!((rouge_n(&t("the cat sat"), &t("the cat"), 1) - 0.8).abs() < 1e-12);
    assert!((rouge_l(&t("the cat sat"), &t("the cat"),) - 0.8).abs() < 1e-12);
    assert!((rouge_n(&t("the cat sat"), &t("the cat"), 2) - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(rouge_n(&t(""), &t("the cat"), 1), 0.0);
    assert_eq!(rouge_n(&t("a"), &t("a"), 2), 0.0);
}
