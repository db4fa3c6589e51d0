//! Metric oracles and invariances.

mod common;

use common::lcs_oracle;
use lexguide_core::corpus::tokenize;
use lexguide_core::eval::{
    flesch_reading_ease, followup_diversity, groundedness, rouge_l_recall, semantic_relevance,
};
use lexguide_core::providers::stub::StubEmbedder;
use proptest::prelude::*;

fn text(max: usize) -> impl Strategy<Value = String> {
    // a small vocabulary so common subsequences are frequent
    proptest::collection::vec(prop_oneof!["the", "tax", "law", "union", "fish", "data", "rules", "a"], 1..max)
        .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rouge_l_matches_dp_oracle(g in text(25), r in text(25)) {
        let (gt, rt) = (tokenize(&g), tokenize(&r));
        let want = lcs_oracle(&gt, &rt) as f64 / rt.len() as f64;
        prop_assert_eq!(rouge_l_recall(&g, &r).unwrap(), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn groundedness_is_monotone_in_theta(resp in text(30), frag in text(30), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let frags = [frag.as_str()];
        prop_assert!(groundedness(&resp, &frags, lo) >= groundedness(&resp, &frags, hi));
    }

    #[test]
    fn verbatim_responses_are_fully_grounded(frag in text(30)) {
        prop_assert_eq!(groundedness(&frag, &[frag.as_str()], 1.0), 1.0);
    }

    #[test]
    fn diversity_is_permutation_invariant(texts in proptest::collection::vec(text(8), 2..6), rot in 0usize..6) {
        let e = StubEmbedder::new(1);
        let mut shuffled = texts.clone();
        shuffled.rotate_left(rot % texts.len());
        shuffled.reverse();
        let a = followup_diversity(&e, &texts).unwrap();
        let b = followup_diversity(&e, &shuffled).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn fre_is_invariant_to_repetition(t in text(20)) {
        // capitalized, so the repeat starts a new sentence
        let mut s = format!("{t}.");
        s[..1].make_ascii_uppercase();
        let twice = format!("{s} {s}");
        let a = flesch_reading_ease(&s).unwrap();
        let b = flesch_reading_ease(&twice).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn fixed_values() {
    assert!((flesch_reading_ease("The cat sat on the mat.").unwrap() - 116.145).abs() < 0.01);
    let e = StubEmbedder::new(0);
    let same = vec!["Shall we look at quotas?".to_string(); 4];
    assert_eq!(followup_diversity(&e, &same).unwrap(), 0.0);
    assert!(rouge_l_recall("", "gold").is_err() || rouge_l_recall("", "gold").unwrap() == 0.0);
    assert!(rouge_l_recall("text", "").is_err());
}

#[test]
fn disjoint_texts_have_low_relevance() {
    let mut total = 0.0;
    for seed in 0..100 {
        let e = StubEmbedder::new(seed);
        let r = semantic_relevance(&e, "fishing quotas vessels harbours", "roaming tariffs phones operators").unwrap();
        total += r.abs();
    }
    assert!(total / 100.0 < 0.2, "mean |relevance| {}", total / 100.0);
    let e = StubEmbedder::new(0);
    let same = semantic_relevance(&e, "fishing quotas", "quotas fishing").unwrap();
    assert!((same - 1.0).abs() < 1e-12);
}
