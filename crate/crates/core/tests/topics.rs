//! Clustering against a from-scratch average-linkage oracle, and topic tree
//! invariants on random inputs.

use std::collections::HashSet;

use lexguide_core::corpus::Fragment;
use lexguide_core::providers::EmbeddingVector;
use lexguide_core::retrieval::cosine_similarity;
use lexguide_core::topics::cluster::{average_linkage, cluster_fragments, OUTLIER};
use lexguide_core::topics::{build_topic_tree, AverageLinkageGapCut, TopicParams, TopicTree};
use lexguide_core::Execution;
use proptest::prelude::*;

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

/// Merge sequence recomputing every cluster distance as the mean of all
/// pairwise point distances. Returns (smaller min member, larger, distance).
fn naive_average_linkage(points: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let d = |a: usize, b: usize| 1.0 - cosine_similarity(&ev(&points[a]), &ev(&points[b])).unwrap();
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &x in &clusters[a] {
                    for &y in &clusters[b] {
                        s += d(x, y);
                    }
                }
                let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                if best.is_none_or(|(bd, _, _)| avg < bd - 1e-12) {
                    best = Some((avg, a, b));
                }
            }
        }
        let (dist, a, b) = best.unwrap();
        let absorbed = clusters.remove(b);
        out.push((clusters[a][0], absorbed[0], dist));
        clusters[a].extend(absorbed);
        clusters[a].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }
    out
}

fn points(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 2..=max)
        .prop_filter("non-zero", |ps| ps.iter().all(|p| p.iter().any(|x| x.abs() > 1e-3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn average_linkage_matches_naive_oracle(ps in points(12)) {
        let vs: Vec<EmbeddingVector> = ps.iter().map(|p| ev(p)).collect();
        let refs: Vec<&EmbeddingVector> = vs.iter().collect();
        let got = average_linkage(&refs, Execution::Parallel);
        let want = naive_average_linkage(&ps);
        prop_assert_eq!(got.len(), want.len());
        for (g, (a, b, d)) in got.iter().zip(want) {
            prop_assert_eq!((g.kept, g.absorbed), (a, b));
            prop_assert!((g.distance - d).abs() < 1e-9);
        }
    }

    #[test]
    fn sequential_and_parallel_clusterings_agree(ps in points(30)) {
        let vs: Vec<EmbeddingVector> = ps.iter().map(|p| ev(p)).collect();
        let refs: Vec<&EmbeddingVector> = vs.iter().collect();
        prop_assert_eq!(
            cluster_fragments(&refs, 3, Execution::Sequential),
            cluster_fragments(&refs, 3, Execution::Parallel)
        );
    }

    #[test]
    fn tree_invariants(ps in points(40), min in 2usize..5, levels in 1usize..4) {
        let (frags, vecs) = corpus(&ps);
        let params = TopicParams { min_cluster_size: min, levels, top_words: 5 };
        let tree = build_topic_tree(&frags, &vecs, params, &AverageLinkageGapCut, Execution::Parallel).unwrap();
        check_invariants(&tree, &frags, &vecs, min, levels)?;
        let again = build_topic_tree(&frags, &vecs, params, &AverageLinkageGapCut, Execution::Sequential).unwrap();
        prop_assert_eq!(tree.snapshot(), again.snapshot());
    }
}

fn corpus(ps: &[Vec<f64>]) -> (Vec<Fragment>, Vec<EmbeddingVector>) {
    let frags = (0..ps.len())
        .map(|i| Fragment {
            id: format!("d:{i:04}"),
            doc_id: "d".into(),
            position: i,
            text: format!("term{} term{} shared", i % 5, i % 3),
            source_url: None,
        })
        .collect();
    (frags, ps.iter().map(|p| ev(p)).collect())
}

fn check_invariants(
    tree: &TopicTree,
    frags: &[Fragment],
    vecs: &[EmbeddingVector],
    min: usize,
    levels: usize,
) -> Result<(), TestCaseError> {
    let root = tree.root();
    prop_assert_eq!(root.fragment_ids.len(), frags.len());
    prop_assert!(tree.depth() <= levels + 1);
    for node in tree.nodes() {
        // centroid is the mean of its members
        let members: Vec<&EmbeddingVector> = node
            .fragment_ids
            .iter()
            .map(|id| &vecs[id[2..].parse::<usize>().unwrap()])
            .collect();
        let mean = EmbeddingVector::mean(members).unwrap();
        for (a, b) in mean.values().iter().zip(node.centroid.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        if node.children.is_empty() {
            continue;
        }
        // children partition the parent
        let mut union: Vec<&String> = Vec::new();
        for c in &node.children {
            let child = tree.node(c).unwrap();
            prop_assert_eq!(child.parent.as_deref(), Some(node.id.as_str()));
            prop_assert_eq!(child.level, node.level + 1);
            prop_assert!(child.fragment_ids.iter().all(|f| node.fragment_ids.contains(f)));
            union.extend(&child.fragment_ids);
        }
        let set: HashSet<&String> = union.iter().copied().collect();
        prop_assert_eq!(set.len(), union.len());
        prop_assert_eq!(set.len(), node.fragment_ids.len());
        // only the root may carry an outlier child
        let outliers = node.children.iter().filter(|c| tree.is_outlier(c)).count();
        prop_assert!(outliers <= usize::from(node.parent.is_none()));
    }
    let leaves = tree.nodes().iter().filter(|n| n.is_leaf()).count();
    prop_assert!(leaves <= frags.len() / min + 1);
    Ok(())
}

#[test]
fn two_separated_groups() {
    let ps: Vec<Vec<f64>> = [
        [1.0, 0.05, 0.0],
        [1.0, 0.0, 0.05],
        [0.95, 0.05, 0.05],
        [0.0, 1.0, 0.05],
        [0.05, 1.0, 0.0],
        [0.05, 0.95, 0.05],
    ]
    .iter()
    .map(|p| p.to_vec())
    .collect();
    let vs: Vec<EmbeddingVector> = ps.iter().map(|p| ev(p)).collect();
    let refs: Vec<&EmbeddingVector> = vs.iter().collect();
    assert_eq!(cluster_fragments(&refs, 2, Execution::Sequential), vec![0, 0, 0, 1, 1, 1]);
    // a size floor above the group size turns everything into noise
    assert_eq!(cluster_fragments(&refs, 4, Execution::Sequential), vec![OUTLIER; 6]);

    let (frags, vecs) = corpus(&ps);
    let params = TopicParams { min_cluster_size: 2, levels: 2, top_words: 3 };
    let tree = build_topic_tree(&frags, &vecs, params, &AverageLinkageGapCut, Execution::Parallel).unwrap();
    let ids: Vec<&str> = tree.level_order();
    assert_eq!(ids, vec!["t0", "t1.0", "t1.1"]);
    assert_eq!(tree.node("t1.0").unwrap().fragment_ids, vec!["d:0000", "d:0001", "d:0002"]);
}

#[test]
fn snapshot_round_trip_through_json() {
    let ps: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 4) as f64 + 0.1, (i / 4) as f64 * 0.3 + 0.2, 1.0]).collect();
    let (frags, vecs) = corpus(&ps);
    let tree = build_topic_tree(&frags, &vecs, TopicParams::default(), &AverageLinkageGapCut, Execution::Parallel)
        .unwrap();
    let json = serde_json::to_string(&tree.snapshot()).unwrap();
    let back = TopicTree::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back.snapshot(), tree.snapshot());
    assert_eq!(back.level_order(), tree.level_order());
}
