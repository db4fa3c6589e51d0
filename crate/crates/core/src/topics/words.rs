//! tf-idf topic words. Each node's member texts form one pseudo-document;
//! document frequencies are counted over leaf pseudo-documents only.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::TopicTree;
use crate::corpus::text::{is_stopword, tokenize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWord {
    pub term: String,
    pub score: f64,
}

fn term_counts<'a>(fragment_ids: &[String], text_of: &impl Fn(&str) -> Option<&'a str>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for id in fragment_ids {
        for tok in tokenize(text_of(id).unwrap_or("")) {
            if !is_stopword(&tok) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Populate `words` on every node with the top `l` terms by tf·idf
/// (descending score, then term). Terms scoring ≤ 0 are dropped.
pub fn extract_topic_words<'a>(tree: &mut TopicTree, text_of: impl Fn(&str) -> Option<&'a str>, l: usize) {
    let counts: Vec<BTreeMap<String, usize>> =
        tree.nodes().iter().map(|n| term_counts(&n.fragment_ids, &text_of)).collect();

    let leaves: Vec<usize> = (0..tree.len()).filter(|&i| tree.nodes()[i].is_leaf()).collect();
    let n_leaves = leaves.len() as f64;
    let mut df: HashMap<&str, usize> = HashMap::new();
    for &i in &leaves {
        for term in counts[i].keys() {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    let idf = |term: &str| df.get(term).map_or(0.0, |&d| (n_leaves / d as f64).ln());

    let words: Vec<Vec<TopicWord>> = counts
        .iter()
        .map(|c| {
            let total: usize = c.values().sum();
            let mut scored: Vec<TopicWord> = c
                .iter()
                .map(|(term, &n)| TopicWord {
                    term: term.clone(),
                    score: n as f64 / total as f64 * idf(term),
                })
                .filter(|w| w.score > 0.0)
                .collect();
            scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
            scored.truncate(l);
            scored
        })
        .collect();

    for (node, w) in tree.nodes_mut().iter_mut().zip(words) {
        node.words = w;
    }
}
