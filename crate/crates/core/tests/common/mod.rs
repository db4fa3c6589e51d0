//! Shared builders for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use lexguide_core::corpus::{
    fragment_corpus, ingest_documents, DocumentRecord, Metadata, Section, DEFAULT_MAX_FRAGMENT_TOKENS,
};
use lexguide_core::dataset::{build_dialogue, split_eprs_utterance, BuildOptions, Role, ANSWER_MARKER, FOLLOWUP_MARKER};
use lexguide_core::engine::FixedClock;
use lexguide_core::navigator::{
    check_termination, next_node, route_query, NavigationState, RoutingDecision, RoutingKind, Signal, Strategy,
    TerminationReason,
};
use lexguide_core::providers::stub::{StubChat, StubEmbedder};
use lexguide_core::providers::EmbeddingVector;
use lexguide_core::retrieval::{cosine_or_zero, cosine_similarity, ScoredFragment, VectorIndex};
use lexguide_core::topics::{SnapshotNode, TopicTree, TreeSnapshot};
use lexguide_core::{Engine, KnowledgeBase};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    // works from any crate of the workspace
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

/// Stub-backed engine over the 12-fragment fixture corpus.
pub fn fixture_engine(seed: u64) -> Engine {
    let docs = ingest_documents(&fixture("corpus12.json")).unwrap().documents;
    let fragments = fragment_corpus(&docs, DEFAULT_MAX_FRAGMENT_TOKENS).unwrap();
    assert_eq!(fragments.len(), 12);
    let embedder = Arc::new(StubEmbedder::new(seed));
    let kb = KnowledgeBase::embed(fragments, embedder.as_ref()).unwrap();
    Engine::new(Arc::new(kb), embedder, Arc::new(StubChat::new(seed))).with_clock(Arc::new(FixedClock::default()))
}

fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// Random rooted tree with `n` nodes: node `i` hangs under a random earlier
/// node, some leaf children of the root are outliers, centroids are random.
pub fn random_tree(seed: u64, n: usize, dim: usize) -> TopicTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |i: usize| format!("n{i:03}");
    let mut parent = vec![None; n];
    let mut level = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        let p = below(&mut rng, i);
        parent[i] = Some(p);
        level[i] = level[p] + 1;
        children[p].push(i);
    }
    let mut nodes = BTreeMap::new();
    for i in 0..n {
        let centroid: Vec<f64> = (0..dim).map(|_| (rng.next_u64() % 2001) as f64 / 1000.0 - 1.0).collect();
        let outlier = parent[i] == Some(0) && children[i].is_empty() && below(&mut rng, 4) == 0;
        nodes.insert(
            id(i),
            SnapshotNode {
                parent: parent[i].map(id),
                children: children[i].iter().map(|&c| id(c)).collect(),
                words: Vec::new(),
                fragment_ids: vec![format!("f:{i:04}")],
                centroid: EmbeddingVector::new(centroid).unwrap_or_else(|_| EmbeddingVector::new(vec![1.0; dim]).unwrap()),
                level: level[i],
                outlier,
            },
        );
    }
    let depth = level.iter().max().unwrap() + 1;
    TopicTree::from_snapshot(&TreeSnapshot { root_id: id(0), depth, nodes }).unwrap()
}

/// Accept every proposal until none is left. Returns the visit sequence
/// (root first) and the final termination reason.
pub fn walk_acknowledging(tree: &TopicTree, strategy: Strategy) -> (Vec<String>, Option<TerminationReason>) {
    let mut state = NavigationState::new(tree, strategy);
    let mut order = vec![state.current.clone()];
    loop {
        let status = check_termination(&state, tree, Signal::None);
        if status.terminated {
            return (order, status.reason);
        }
        let Some(next) = next_node(&state, tree) else {
            return (order, None);
        };
        state.move_to(tree, &next).unwrap();
        order.push(next);
    }
}

pub fn expected_order(tree: &TopicTree, strategy: Strategy) -> Vec<String> {
    let order = match strategy {
        Strategy::Dfs => tree.preorder(),
        _ => tree.level_order(),
    };
    order.into_iter().filter(|id| !tree.is_outlier(id)).map(str::to_string).collect()
}

/// Exhaustive routing oracle: scan every node, bucket by priority and take
/// the best similarity per bucket (ties: smaller id).
pub fn routing_oracle(state: &NavigationState, tree: &TopicTree, q: &EmbeddingVector, tau: f64) -> RoutingDecision {
    let mut buckets: [Option<(String, f64)>; 3] = [None, None, None];
    let mut all: Vec<(String, f64)> = tree
        .nodes()
        .iter()
        .map(|n| (n.id.clone(), cosine_or_zero(q, &n.centroid)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (id, s) in &all {
        let slots = [
            state.visited.contains(id),
            state.unexplored_children.contains(id),
            true,
        ];
        for (b, hit) in slots.iter().enumerate() {
            if *hit && buckets[b].is_none() {
                buckets[b] = Some((id.clone(), *s));
            }
        }
    }
    let kinds = [RoutingKind::RevisitVisited, RoutingKind::DescendUnexplored, RoutingKind::GlobalJump];
    for (b, kind) in kinds.into_iter().enumerate() {
        if let Some((id, s)) = &buckets[b] {
            if *s >= tau {
                return RoutingDecision { kind, target: Some(id.clone()), similarity: *s };
            }
        }
    }
    RoutingDecision {
        kind: RoutingKind::RebuildTree,
        target: None,
        similarity: all.first().map_or(0.0, |a| a.1),
    }
}

/// Index over `vectors` with zero-padded ids `f00`, `f01`, ...
pub fn index_of(vectors: &[Vec<f64>]) -> VectorIndex {
    let ids = (0..vectors.len()).map(|i| format!("f{i:02}")).collect();
    let vecs = vectors.iter().map(|v| EmbeddingVector::new(v.clone()).unwrap()).collect();
    VectorIndex::build(ids, vecs).unwrap()
}

pub fn hit_positions(hits: &[ScoredFragment]) -> Vec<usize> {
    hits.iter().map(|h| h.fragment_id[1..].parse().unwrap()).collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    cosine_similarity(&EmbeddingVector::new(a.to_vec()).unwrap(), &EmbeddingVector::new(b.to_vec()).unwrap()).unwrap()
}

/// Textbook greedy MMR, recomputing every max from scratch.
pub fn mmr_oracle(docs: &[Vec<f64>], q: &[f64], k: usize, lambda: f64) -> Vec<usize> {
    let mut selected: Vec<usize> = Vec::new();
    while selected.len() < k.min(docs.len()) {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..docs.len()).filter(|i| !selected.contains(i)) {
            let score = if selected.is_empty() {
                cos(&docs[i], q)
            } else {
                let red = selected.iter().map(|&s| cos(&docs[i], &docs[s])).fold(f64::NEG_INFINITY, f64::max);
                lambda * cos(&docs[i], q) - (1.0 - lambda) * red
            };
            // ids are zero-padded, so index order is id order
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        selected.push(best.unwrap().0);
    }
    selected
}

/// Full-table LCS.
pub fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

/// Document with `k` headed sections.
pub fn sectioned_doc(k: usize) -> DocumentRecord {
    DocumentRecord {
        id: format!("doc-{k}"),
        question: "What does the union do about plastic waste?".into(),
        sections: (0..k)
            .map(|j| Section {
                header: format!("Header {j}:"),
                content: format!("Section {j} explains one measure on plastic waste. It also lists deadline {j}."),
                links: Vec::new(),
            })
            .collect(),
        metadata: Metadata::default(),
    }
}

/// A `k`-section document yields 2k alternating turns, one expert turn per
/// section carrying its header, each but the last proposing a follow-up.
pub fn check_turn_count_law(k: usize) -> Result<(), String> {
    let d = build_dialogue(&sectioned_doc(k), &StubChat::new(0), BuildOptions::default()).map_err(|e| e.to_string())?;
    let fail = |what: String| Err(format!("k={k}: {what}"));
    if d.turns.len() != 2 * k {
        return fail(format!("{} turns", d.turns.len()));
    }
    if !d.roles_alternate() || d.turns[0].role != Role::Citizen {
        return fail("roles do not alternate from a citizen turn".into());
    }
    let eprs: Vec<_> = d.turns.iter().filter(|t| t.role == Role::Eprs).collect();
    if eprs.len() != k || d.n_turn_pairs() != k {
        return fail(format!("{} expert turns", eprs.len()));
    }
    for (j, t) in eprs.iter().enumerate() {
        if t.section.as_deref() != Some(format!("Header {j}:").as_str()) {
            return fail(format!("turn {j} tagged {:?}", t.section));
        }
        if !t.utterance.starts_with(ANSWER_MARKER) {
            return fail(format!("turn {j} lacks the answer marker"));
        }
        let (_, followup) = split_eprs_utterance(&t.utterance);
        if followup.is_some() != (j + 1 < k) {
            return fail(format!("turn {j} follow-up presence {}", followup.is_some()));
        }
        if followup.is_some_and(|f| !f.ends_with('?') || !t.utterance.contains(FOLLOWUP_MARKER)) {
            return fail(format!("turn {j} follow-up is not a marked question"));
        }
    }
    Ok(())
}

/// Root with three children whose centroids are stub embeddings of a topic
/// word each; a second-level node under the first child.
pub fn word_tree(e: &StubEmbedder) -> TopicTree {
    let spec = [
        ("t0", None, vec!["t1.0", "t1.1", "t1.2"], "union", 0),
        ("t1.0", Some("t0"), vec!["t2.0"], "fisheries", 1),
        ("t1.1", Some("t0"), vec![], "roaming", 1),
        ("t1.2", Some("t0"), vec![], "passengers", 1),
        ("t2.0", Some("t1.0"), vec![], "quotas", 2),
    ];
    let nodes = spec
        .iter()
        .map(|(id, parent, children, word, level)| {
            (
                id.to_string(),
                SnapshotNode {
                    parent: parent.map(str::to_string),
                    children: children.iter().map(|c| c.to_string()).collect(),
                    words: Vec::new(),
                    fragment_ids: vec![format!("{id}:0000")],
                    centroid: e.embed_text(word),
                    level: *level,
                    outlier: false,
                },
            )
        })
        .collect();
    TopicTree::from_snapshot(&TreeSnapshot { root_id: "t0".into(), depth: 3, nodes }).unwrap()
}

/// Routing on [`word_tree`] at tau 0.5 from t1.0 with t1.1 visited: each
/// query lands in the expected priority bucket and agrees with the oracle.
pub fn check_routing_priority() -> Result<(), String> {
    let e = StubEmbedder::new(11);
    let tree = word_tree(&e);
    let mut state = NavigationState::new(&tree, Strategy::Bfs);
    state.move_to(&tree, "t1.1").unwrap();
    state.move_to(&tree, "t1.0").unwrap();
    let tau = 0.5;
    let cases = [
        ("roaming", RoutingKind::RevisitVisited, Some("t1.1")),
        ("quotas", RoutingKind::DescendUnexplored, Some("t2.0")),
        ("passengers", RoutingKind::GlobalJump, Some("t1.2")),
        ("fisheries", RoutingKind::GlobalJump, Some("t1.0")),
        ("astronomy telescopes", RoutingKind::RebuildTree, None),
    ];
    for (text, kind, target) in cases {
        let q = e.embed_text(text);
        let got = route_query(&state, &tree, &q, tau, false);
        if got != routing_oracle(&state, &tree, &q, tau) {
            return Err(format!("{text:?}: {got:?} disagrees with the oracle"));
        }
        if got.kind != kind || got.target.as_deref() != target {
            return Err(format!("{text:?}: routed {:?} to {:?}", got.kind, got.target));
        }
        let above = got.similarity >= tau;
        if above != (kind != RoutingKind::RebuildTree) {
            return Err(format!("{text:?}: similarity {} on the wrong side of tau", got.similarity));
        }
    }
    // a visited match wins even when an unexplored child is more similar
    let q = e.embed_text("roaming quotas quotas");
    let got = route_query(&state, &tree, &q, 0.3, false);
    if got != routing_oracle(&state, &tree, &q, 0.3) || got.kind != RoutingKind::RevisitVisited {
        return Err(format!("mixed query routed {got:?}"));
    }
    // interactive sessions ask instead of rebuilding
    let q = e.embed_text("astronomy telescopes");
    if route_query(&state, &tree, &q, tau, true).kind != RoutingKind::Clarify {
        return Err("interactive out-of-scope query did not clarify".into());
    }
    Ok(())
}
