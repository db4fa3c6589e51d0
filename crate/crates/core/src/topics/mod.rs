//! Topic tree over retrieved fragments.
//!
//! Every node carries its representative words, its centroid (mean member
//! embedding) and its member fragment ids. The root holds all fragments;
//! each level below partitions its parent, with an optional outlier child
//! absorbing fragments that did not fall into a large enough cluster.

pub mod cluster;
mod words;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::Fragment;
use crate::parallel::Execution;
use crate::providers::EmbeddingVector;
use crate::retrieval::cosine_or_zero;
pub use cluster::{cluster_fragments, AverageLinkageGapCut, Clusterer, OUTLIER};
pub use words::{extract_topic_words, TopicWord};

pub const ROOT_ID: &str = "t0";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TopicError {
    #[error("cannot build a topic tree from zero fragments")]
    EmptyInput,
    #[error("{0} fragments but {1} vectors")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicParams {
    pub min_cluster_size: usize,
    /// Levels below the root.
    pub levels: usize,
    /// Representative words kept per node.
    pub top_words: usize,
}

impl Default for TopicParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 3,
            levels: 2,
            top_words: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicNode {
    pub id: String,
    pub level: usize,
    pub words: Vec<TopicWord>,
    pub centroid: EmbeddingVector,
    pub fragment_ids: Vec<String>,
    pub parent: Option<String>,
    pub children: Vec<String>,
    /// The miscellaneous node collecting cluster noise.
    #[serde(default)]
    pub outlier: bool,
}

impl TopicNode {
    pub fn word_terms(&self, l: usize) -> Vec<&str> {
        self.words.iter().take(l).map(|w| w.term.as_str()).collect()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicTree {
    nodes: Vec<TopicNode>,
    by_id: HashMap<String, usize>,
    depth: usize,
}

/// Serialized tree: `{root_id, depth, nodes: {id: node}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub root_id: String,
    pub depth: usize,
    pub nodes: BTreeMap<String, SnapshotNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub words: Vec<TopicWord>,
    pub fragment_ids: Vec<String>,
    pub centroid: EmbeddingVector,
    pub level: usize,
    pub outlier: bool,
}

impl TopicTree {
    fn from_nodes(nodes: Vec<TopicNode>) -> Self {
        let by_id = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let depth = nodes.iter().map(|n| n.level).max().unwrap_or(0) + 1;
        Self { nodes, by_id, depth }
    }

    pub fn root(&self) -> &TopicNode {
        &self.nodes[0]
    }

    pub fn root_id(&self) -> &str {
        &self.nodes[0].id
    }

    /// Number of levels including the root.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&TopicNode> {
        self.by_id.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Nodes in level order (creation order).
    pub fn nodes(&self) -> &[TopicNode] {
        &self.nodes
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        self.node(id)?.parent.as_deref()
    }

    pub fn children(&self, id: &str) -> &[String] {
        self.node(id).map_or(&[], |n| n.children.as_slice())
    }

    pub fn is_outlier(&self, id: &str) -> bool {
        self.node(id).is_some_and(|n| n.outlier)
    }

    pub fn level(&self, id: &str) -> Option<usize> {
        self.node(id).map(|n| n.level)
    }

    /// Node ids in breadth-first order.
    pub fn level_order(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root_id()]);
        while let Some(id) = queue.pop_front() {
            out.push(id);
            queue.extend(self.children(id).iter().map(String::as_str));
        }
        out
    }

    /// Node ids of the subtree at `id` in preorder.
    pub fn preorder_from(&self, id: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = match self.node(id) {
            Some(n) => vec![n.id.as_str()],
            None => return out,
        };
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.children(id).iter().rev().map(String::as_str));
        }
        out
    }

    pub fn preorder(&self) -> Vec<&str> {
        self.preorder_from(self.root_id())
    }

    /// Ids eligible as follow-up targets: everything except outlier nodes.
    pub fn targetable(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter(|n| !n.outlier).map(|n| n.id.as_str())
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        TreeSnapshot {
            root_id: self.root_id().to_string(),
            depth: self.depth,
            nodes: self
                .nodes
                .iter()
                .map(|n| {
                    (
                        n.id.clone(),
                        SnapshotNode {
                            parent: n.parent.clone(),
                            children: n.children.clone(),
                            words: n.words.clone(),
                            fragment_ids: n.fragment_ids.clone(),
                            centroid: n.centroid.clone(),
                            level: n.level,
                            outlier: n.outlier,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Rebuild a tree from its snapshot (level order is recomputed).
    pub fn from_snapshot(s: &TreeSnapshot) -> Option<Self> {
        let mut nodes = Vec::with_capacity(s.nodes.len());
        let mut queue = VecDeque::from([s.root_id.clone()]);
        let mut seen = HashSet::new();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id.clone()) {
                return None;
            }
            let n = s.nodes.get(&id)?;
            queue.extend(n.children.iter().cloned());
            nodes.push(TopicNode {
                id,
                level: n.level,
                words: n.words.clone(),
                centroid: n.centroid.clone(),
                fragment_ids: n.fragment_ids.clone(),
                parent: n.parent.clone(),
                children: n.children.clone(),
                outlier: n.outlier,
            });
        }
        (nodes.len() == s.nodes.len()).then(|| Self::from_nodes(nodes))
    }

    /// A tree with only a root; used when there is nothing to cluster.
    pub fn single_node(fragment_ids: Vec<String>, centroid: EmbeddingVector) -> Self {
        Self::from_nodes(vec![TopicNode {
            id: ROOT_ID.into(),
            level: 0,
            words: Vec::new(),
            centroid,
            fragment_ids,
            parent: None,
            children: Vec::new(),
            outlier: false,
        }])
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [TopicNode] {
        &mut self.nodes
    }
}

struct Pending {
    node: usize,
    members: Vec<usize>,
}

/// Build the topic tree for aligned `fragments` and `vectors`, then fill in
/// representative words.
///
/// Root-level noise becomes a single outlier child of the root. Below the
/// root, noise fragments join the subcluster with the closest centroid so
/// children still partition their parent.
pub fn build_topic_tree(
    fragments: &[Fragment],
    vectors: &[EmbeddingVector],
    params: TopicParams,
    clusterer: &dyn Clusterer,
    exec: Execution,
) -> Result<TopicTree, TopicError> {
    if fragments.is_empty() {
        return Err(TopicError::EmptyInput);
    }
    if fragments.len() != vectors.len() {
        return Err(TopicError::LengthMismatch(fragments.len(), vectors.len()));
    }
    let min_size = params.min_cluster_size.max(2);
    let centroid = |members: &[usize]| {
        EmbeddingVector::mean(members.iter().map(|&i| &vectors[i])).expect("non-empty members")
    };
    let ids = |members: &[usize]| members.iter().map(|&i| fragments[i].id.clone()).collect::<Vec<_>>();

    let all: Vec<usize> = (0..fragments.len()).collect();
    let mut nodes = vec![TopicNode {
        id: ROOT_ID.into(),
        level: 0,
        words: Vec::new(),
        centroid: centroid(&all),
        fragment_ids: ids(&all),
        parent: None,
        children: Vec::new(),
        outlier: false,
    }];
    let mut ordinals: Vec<usize> = vec![0; params.levels + 1];
    let mut queue = VecDeque::from([Pending { node: 0, members: all }]);

    while let Some(Pending { node, members }) = queue.pop_front() {
        let level = nodes[node].level + 1;
        if level > params.levels {
            continue;
        }
        // the root is always split; deeper nodes only when two clusters could fit
        if node != 0 && members.len() < 2 * min_size {
            continue;
        }
        let member_vecs: Vec<&EmbeddingVector> = members.iter().map(|&i| &vectors[i]).collect();
        let labels = clusterer.cluster(&member_vecs, min_size, exec);
        let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        if n_clusters < 2 {
            continue;
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
        let mut noise = Vec::new();
        for (&m, &label) in members.iter().zip(&labels) {
            if label == OUTLIER {
                noise.push(m);
            } else {
                groups[label as usize].push(m);
            }
        }
        if node != 0 && !noise.is_empty() {
            // partition must hold below the root: noise joins its nearest subcluster
            let cents: Vec<EmbeddingVector> = groups.iter().map(|g| centroid(g)).collect();
            for m in std::mem::take(&mut noise) {
                let best = (0..cents.len())
                    .max_by(|&a, &b| {
                        cosine_or_zero(&vectors[m], &cents[a])
                            .total_cmp(&cosine_or_zero(&vectors[m], &cents[b]))
                            .then(b.cmp(&a))
                    })
                    .expect("at least two groups");
                groups[best].push(m);
            }
            groups.iter_mut().for_each(|g| g.sort_unstable());
        }
        let parent_id = nodes[node].id.clone();
        let mut push_child = |members: Vec<usize>, outlier: bool, nodes: &mut Vec<TopicNode>| {
            let id = format!("t{level}.{}", ordinals[level]);
            ordinals[level] += 1;
            nodes.push(TopicNode {
                id: id.clone(),
                level,
                words: Vec::new(),
                centroid: centroid(&members),
                fragment_ids: ids(&members),
                parent: Some(parent_id.clone()),
                children: Vec::new(),
                outlier,
            });
            let idx = nodes.len() - 1;
            nodes[node].children.push(id);
            (idx, members)
        };
        for g in groups {
            let (idx, members) = push_child(g, false, &mut nodes);
            queue.push_back(Pending { node: idx, members });
        }
        if !noise.is_empty() {
            push_child(noise, true, &mut nodes);
        }
    }

    let mut tree = TopicTree::from_nodes(nodes);
    let texts: HashMap<&str, &str> = fragments.iter().map(|f| (f.id.as_str(), f.text.as_str())).collect();
    extract_topic_words(&mut tree, |id| texts.get(id).copied(), params.top_words);
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag(i: usize, text: &str) -> Fragment {
        Fragment {
            id: format!("d:{i:04}"),
            doc_id: "d".into(),
            position: i,
            text: text.into(),
            source_url: None,
        }
    }

    fn basis(dim: usize, axis: usize, jitter: f64) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v[(axis + 1) % dim] += jitter;
        EmbeddingVector::new(v).unwrap()
    }

    #[test]
    fn one_fragment_single_node() {
        let t = build_topic_tree(
            &[frag(0, "only")],
            &[basis(4, 0, 0.0)],
            TopicParams::default(),
            &AverageLinkageGapCut,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.root().fragment_ids, vec!["d:0000"]);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(
            build_topic_tree(&[], &[], TopicParams::default(), &AverageLinkageGapCut, Execution::Sequential),
            Err(TopicError::EmptyInput)
        );
    }

    #[test]
    fn identical_vectors_single_node() {
        let frags: Vec<Fragment> = (0..8).map(|i| frag(i, "same words")).collect();
        let vecs = vec![basis(4, 0, 0.0); 8];
        let t = build_topic_tree(&frags, &vecs, TopicParams::default(), &AverageLinkageGapCut, Execution::Parallel)
            .unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn traversal_orders() {
        let frags: Vec<Fragment> = (0..12).map(|i| frag(i, "x")).collect();
        // two tight pairs of sub-groups per axis cluster
        let vecs: Vec<EmbeddingVector> = (0..12)
            .map(|i| if i < 6 { basis(8, 0, 0.01 * (i % 3) as f64) } else { basis(8, 4, 0.01 * (i % 3) as f64) })
            .collect();
        let params = TopicParams { min_cluster_size: 3, levels: 1, top_words: 5 };
        let t = build_topic_tree(&frags, &vecs, params, &AverageLinkageGapCut, Execution::Sequential).unwrap();
        assert_eq!(t.level_order(), vec!["t0", "t1.0", "t1.1"]);
        assert_eq!(t.preorder(), vec!["t0", "t1.0", "t1.1"]);
        let snap = t.snapshot();
        assert_eq!(TopicTree::from_snapshot(&snap).unwrap(), t);
    }
}
