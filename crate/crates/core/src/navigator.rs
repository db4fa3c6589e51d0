//! Navigation state over a topic tree: traversal strategies, explicit
//! operations, acknowledgment detection, query routing and termination.

use serde::{Deserialize, Serialize};

use crate::corpus::text::tokenize;
use crate::providers::EmbeddingVector;
use crate::retrieval::cosine_or_zero;
use crate::topics::TopicTree;

pub const DEFAULT_TAU: f64 = 0.5;

const ACK_LEXICON: &[&[&str]] = &[
    &["yes", "please"],
    &["tell", "me", "more"],
    &["go", "ahead"],
    &["please", "do"],
    &["yes"],
    &["sure"],
    &["ok"],
    &["okay"],
];

const WH_WORDS: &[&str] = &["what", "which", "who", "whom", "whose", "when", "where", "why", "how"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Bfs,
    Dfs,
    /// Moves only on explicit operations; proposals fall back to BFS order.
    UserDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub user: String,
    pub response: String,
    pub followup: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationState {
    pub visited: Vec<String>,
    pub current: String,
    #[serde(rename = "unexplored")]
    pub unexplored_children: Vec<String>,
    pub strategy: Strategy,
    pub path: Vec<String>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "operation", content = "target", rename_all = "kebab-case")]
pub enum Operation {
    Descend(String),
    Lateral(String),
    Ascend,
    Jump(String),
    Backtrack(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NavError {
    #[error("current node has no parent")]
    NoParent,
    #[error("unknown or unreachable node: {0}")]
    UnknownNode(String),
    #[error("cannot backtrack {steps} steps along a path of length {path_len}")]
    BadBacktrack { steps: usize, path_len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingKind {
    RevisitVisited,
    DescendUnexplored,
    GlobalJump,
    RebuildTree,
    Clarify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub kind: RoutingKind,
    pub target: Option<String>,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    CompleteCoverage,
    UserSatisfied,
    Abandoned,
    /// Retrieval returned nothing on the first turn.
    NoResults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminationStatus {
    pub terminated: bool,
    pub reason: Option<TerminationReason>,
}

impl TerminationStatus {
    pub const ACTIVE: Self = Self {
        terminated: false,
        reason: None,
    };

    pub fn ended(reason: TerminationReason) -> Self {
        Self {
            terminated: true,
            reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Signal {
    #[default]
    None,
    UserSatisfied,
    TimeoutOrQuit,
}

impl NavigationState {
    /// Fresh state at the root.
    pub fn new(tree: &TopicTree, strategy: Strategy) -> Self {
        let root = tree.root_id().to_string();
        let mut s = Self {
            visited: Vec::new(),
            current: root.clone(),
            unexplored_children: Vec::new(),
            strategy,
            path: vec![root],
            history: Vec::new(),
        };
        s.refresh_unexplored(tree);
        s
    }

    /// Neither visited nor current.
    pub fn is_unvisited(&self, id: &str) -> bool {
        id != self.current && !self.visited.iter().any(|v| v == id)
    }

    fn refresh_unexplored(&mut self, tree: &TopicTree) {
        self.unexplored_children = tree
            .children(&self.current)
            .iter()
            .filter(|c| !tree.is_outlier(c) && !self.visited.contains(c))
            .cloned()
            .collect();
    }

    fn mark_visited(&mut self, id: &str) {
        if !self.visited.iter().any(|v| v == id) {
            self.visited.push(id.to_string());
        }
    }

    /// Make `target` current: the old current becomes visited and `target` is
    /// appended to the path.
    pub fn move_to(&mut self, tree: &TopicTree, target: &str) -> Result<(), NavError> {
        if !tree.contains(target) {
            return Err(NavError::UnknownNode(target.to_string()));
        }
        let prev = std::mem::replace(&mut self.current, target.to_string());
        self.mark_visited(&prev);
        self.path.push(target.to_string());
        self.refresh_unexplored(tree);
        Ok(())
    }

    pub fn push_history(&mut self, entry: HistoryEntry) {
        self.history.push(entry);
    }

    /// Every node visited or current.
    pub fn seen(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.visited.iter().map(String::as_str).collect();
        if !out.contains(&self.current.as_str()) {
            out.push(&self.current);
        }
        out
    }
}

/// Next follow-up target under the state's strategy, skipping outlier nodes.
pub fn next_node(state: &NavigationState, tree: &TopicTree) -> Option<String> {
    let candidate = |id: &&&str| state.is_unvisited(id) && !tree.is_outlier(id);
    match state.strategy {
        Strategy::Bfs | Strategy::UserDriven => {
            let order = tree.level_order();
            let level = tree.level(&state.current).unwrap_or(0);
            order
                .iter()
                .filter(|id| tree.level(id).unwrap_or(0) >= level)
                .find(candidate)
                .or_else(|| order.iter().find(|id| candidate(id)))
                .map(|s| s.to_string())
        }
        Strategy::Dfs => {
            let mut anchor = Some(state.current.as_str());
            while let Some(a) = anchor {
                if let Some(id) = tree.preorder_from(a).iter().find(|id| candidate(id)) {
                    return Some(id.to_string());
                }
                anchor = tree.parent(a);
            }
            tree.preorder().iter().find(|id| candidate(id)).map(|s| s.to_string())
        }
    }
}

pub fn apply_operation(state: &mut NavigationState, tree: &TopicTree, op: &Operation) -> Result<(), NavError> {
    match op {
        Operation::Descend(child) => {
            if !tree.children(&state.current).contains(child) {
                return Err(NavError::UnknownNode(child.clone()));
            }
            state.move_to(tree, child)
        }
        Operation::Lateral(sibling) => {
            let parent = tree.parent(&state.current);
            if parent.is_none() || *sibling == state.current || tree.parent(sibling) != parent {
                return Err(NavError::UnknownNode(sibling.clone()));
            }
            state.move_to(tree, sibling)
        }
        Operation::Ascend => {
            let parent = tree.parent(&state.current).ok_or(NavError::NoParent)?.to_string();
            state.move_to(tree, &parent)
        }
        Operation::Jump(target) => state.move_to(tree, target),
        Operation::Backtrack(n) => {
            let len = state.path.len();
            if *n >= len {
                return Err(NavError::BadBacktrack { steps: *n, path_len: len });
            }
            state.path.truncate(len - n);
            let target = state.path.last().expect("non-empty path").clone();
            let prev = std::mem::replace(&mut state.current, target);
            if *n > 0 {
                state.mark_visited(&prev);
            }
            state.refresh_unexplored(tree);
            Ok(())
        }
    }
}

fn lexicon_only(tokens: &[String]) -> bool {
    let mut rest = tokens;
    while !rest.is_empty() {
        let m = ACK_LEXICON.iter().find(|phrase| {
            phrase.len() <= rest.len() && phrase.iter().zip(rest).all(|(p, t)| p == t)
        });
        match m {
            Some(phrase) => rest = &rest[phrase.len()..],
            None => return false,
        }
    }
    true
}

/// Whether the user accepted the proposed follow-up: an exact (normalized)
/// repeat, or a first clause made only of affirmative phrases with no
/// question anywhere in the utterance.
pub fn is_acknowledgment(utterance: &str, proposed_followup: &str) -> bool {
    let said = tokenize(utterance);
    if said.is_empty() {
        return false;
    }
    if said == tokenize(proposed_followup) {
        return true;
    }
    if utterance.contains('?') {
        return false;
    }
    let (first, rest) = match utterance.find([',', '.', ';', '!', ':']) {
        Some(i) => utterance.split_at(i),
        None => (utterance, ""),
    };
    let first = tokenize(first);
    !first.is_empty() && lexicon_only(&first) && !tokenize(rest).iter().any(|t| WH_WORDS.contains(&t.as_str()))
}

fn best_among<'a>(
    ids: impl Iterator<Item = &'a str>,
    tree: &TopicTree,
    query: &EmbeddingVector,
) -> Option<(&'a str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for id in ids {
        let Some(n) = tree.node(id) else { continue };
        let s = cosine_or_zero(query, &n.centroid);
        best = match best {
            Some((bid, bs)) if bs > s || (bs == s && bid <= id) => Some((bid, bs)),
            _ => Some((id, s)),
        };
    }
    best
}

/// Decide where a free-form query lands: a visited node, an unexplored child
/// of the current node, anywhere in the tree, or nowhere (rebuild/clarify).
pub fn route_query(
    state: &NavigationState,
    tree: &TopicTree,
    query: &EmbeddingVector,
    tau: f64,
    interactive: bool,
) -> RoutingDecision {
    let hit = |kind, best: Option<(&str, f64)>| {
        best.filter(|&(_, s)| s >= tau).map(|(id, s)| RoutingDecision {
            kind,
            target: Some(id.to_string()),
            similarity: s,
        })
    };
    let visited = best_among(state.visited.iter().map(String::as_str), tree, query);
    if let Some(d) = hit(RoutingKind::RevisitVisited, visited) {
        return d;
    }
    let children = best_among(state.unexplored_children.iter().map(String::as_str), tree, query);
    if let Some(d) = hit(RoutingKind::DescendUnexplored, children) {
        return d;
    }
    let global = best_among(tree.nodes().iter().map(|n| n.id.as_str()), tree, query);
    if let Some(d) = hit(RoutingKind::GlobalJump, global) {
        return d;
    }
    RoutingDecision {
        kind: if interactive {
            RoutingKind::Clarify
        } else {
            RoutingKind::RebuildTree
        },
        target: None,
        similarity: global.map_or(0.0, |(_, s)| s),
    }
}

pub fn check_termination(state: &NavigationState, tree: &TopicTree, signal: Signal) -> TerminationStatus {
    match signal {
        Signal::UserSatisfied => return TerminationStatus::ended(TerminationReason::UserSatisfied),
        Signal::TimeoutOrQuit => return TerminationStatus::ended(TerminationReason::Abandoned),
        Signal::None => {}
    }
    let seen = state.seen();
    if tree.targetable().all(|id| seen.contains(&id)) {
        TerminationStatus::ended(TerminationReason::CompleteCoverage)
    } else {
        TerminationStatus::ACTIVE
    }
}
