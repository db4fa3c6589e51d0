//! Dialogue orchestration: session lifecycle, first-turn tree construction,
//! per-turn routing, response and follow-up generation, and baselines.

mod clock;
mod transcript;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use clock::{Clock, FixedClock, SystemClock};
pub use transcript::{read_transcript, write_transcript, SessionSnapshot, TranscriptLine, SESSION_FORMAT};

use crate::corpus::text::{is_stopword, normalize_whitespace, tokenize};
use crate::corpus::{CorpusError, Fragment};
use crate::navigator::{
    apply_operation, check_termination, is_acknowledgment, next_node, route_query, HistoryEntry, NavError,
    NavigationState, Operation, RoutingKind, Signal, Strategy, TerminationReason, TerminationStatus, DEFAULT_TAU,
};
use crate::parallel::Execution;
use crate::prompts::{template, TemplateKind};
use crate::providers::{ChatModel, ChatRequest, Embedder, EmbeddingVector, ProviderError, DEFAULT_TEMPERATURE};
use crate::retrieval::{
    cosine_or_zero, RetrievalError, ScoredFragment, VectorIndex, DEFAULT_K_ANSWER, DEFAULT_K_TOPIC, DEFAULT_LAMBDA,
};
use crate::topics::{build_topic_tree, AverageLinkageGapCut, Clusterer, TopicError, TopicParams, TopicTree};

pub const NO_RESULTS_RESPONSE: &str = "No relevant information found";
pub const NO_CONTEXT_RESPONSE: &str = "I could not find information about this in the available documents.";
pub const CLARIFY_RESPONSE: &str =
    "This question seems to fall outside the topics discussed so far. Would you like to start a new topic on it?";
pub const HISTORY_WINDOW: usize = 3;
const EMBED_BATCH: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("session has terminated")]
    SessionTerminated,
    #[error("session has no topic tree (mode {0})")]
    NoTree(Mode),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Navigation(#[from] NavError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid session snapshot: {0}")]
    Snapshot(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Lexguide,
    RagBasic,
    RagMmr,
    ConvRag,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::RagBasic, Mode::RagMmr, Mode::ConvRag, Mode::Lexguide];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lexguide => "lexguide",
            Mode::RagBasic => "rag-basic",
            Mode::RagMmr => "rag-mmr",
            Mode::ConvRag => "conv-rag",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected lexguide, rag-basic, rag-mmr or conv-rag)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: Mode,
    pub k_topic: usize,
    pub k_answer: usize,
    pub lambda: f64,
    pub tau: f64,
    pub strategy: Strategy,
    pub l_topic_words: usize,
    pub temperature: f64,
    pub min_cluster_size: usize,
    pub levels: usize,
    /// Ask before rebuilding the tree on out-of-scope queries.
    pub interactive: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let topics = TopicParams::default();
        Self {
            mode: Mode::Lexguide,
            k_topic: DEFAULT_K_TOPIC,
            k_answer: DEFAULT_K_ANSWER,
            lambda: DEFAULT_LAMBDA,
            tau: DEFAULT_TAU,
            strategy: Strategy::Bfs,
            l_topic_words: topics.top_words,
            temperature: DEFAULT_TEMPERATURE,
            min_cluster_size: topics.min_cluster_size,
            levels: topics.levels,
            interactive: false,
        }
    }
}

impl SessionConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.k_answer == 0 || self.k_topic == 0 {
            return bad("k_topic and k_answer must be positive".into());
        }
        if self.k_answer > self.k_topic {
            return bad(format!("k_answer {} exceeds k_topic {}", self.k_answer, self.k_topic));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (0, 1)", self.tau));
        }
        if self.l_topic_words == 0 {
            return bad("l_topic_words must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.min_cluster_size < 2 {
            return bad("min_cluster_size must be at least 2".into());
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        Ok(())
    }

    pub fn topic_params(&self) -> TopicParams {
        TopicParams {
            min_cluster_size: self.min_cluster_size,
            levels: self.levels,
            top_words: self.l_topic_words,
        }
    }
}

/// Fragments plus their embedding index.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    fragments: Vec<Fragment>,
    by_id: HashMap<String, usize>,
    index: VectorIndex,
}

impl KnowledgeBase {
    /// Every indexed id must name a fragment.
    pub fn new(fragments: Vec<Fragment>, index: VectorIndex) -> Result<Self, EngineError> {
        let by_id: HashMap<String, usize> = fragments.iter().enumerate().map(|(i, f)| (f.id.clone(), i)).collect();
        if let Some(e) = index.entries().iter().find(|e| !by_id.contains_key(&e.fragment_id)) {
            return Err(EngineError::Snapshot(format!(
                "index entry {} has no matching fragment",
                e.fragment_id
            )));
        }
        Ok(Self { fragments, by_id, index })
    }

    /// Embed `fragments` in batches and index them.
    pub fn embed(fragments: Vec<Fragment>, embedder: &dyn Embedder) -> Result<Self, EngineError> {
        let mut vectors = Vec::with_capacity(fragments.len());
        for chunk in fragments.chunks(EMBED_BATCH) {
            let texts: Vec<String> = chunk.iter().map(|f| f.text.clone()).collect();
            vectors.extend(embedder.embed_texts(&texts)?);
        }
        let index = VectorIndex::from_fragments(&fragments, vectors)?;
        Self::new(fragments, index)
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), VectorIndex::build(Vec::new(), Vec::new()).expect("empty index")).expect("empty kb")
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn fragment(&self, id: &str) -> Option<&Fragment> {
        self.by_id.get(id).map(|&i| &self.fragments[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub user_at: DateTime<Utc>,
    pub response_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    #[serde(rename = "user")]
    pub user_utterance: String,
    pub response: String,
    pub followup: Option<String>,
    pub node_id: Option<String>,
    pub supporting_fragment_ids: Vec<String>,
    pub timestamps: Timestamps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    /// Label of the gold dialogue a batch run replays, if any.
    pub dialogue_id: Option<String>,
    pub config: SessionConfig,
    pub tree: Option<TopicTree>,
    pub state: Option<NavigationState>,
    pub transcript: Vec<DialogueTurn>,
    pub status: TerminationStatus,
    /// Node the last follow-up proposed.
    pub proposed_node: Option<String>,
    /// Query awaiting confirmation after a clarify turn.
    pub pending_query: Option<String>,
}

impl Session {
    pub fn is_active(&self) -> bool {
        !self.status.terminated
    }

    pub fn last_followup(&self) -> Option<&str> {
        self.transcript.last().and_then(|t| t.followup.as_deref())
    }

    /// Breadcrumb of the navigation path, e.g. `t0 > t1.0 > t2.1`.
    pub fn breadcrumb(&self) -> String {
        self.state.as_ref().map(|s| s.path.join(" > ")).unwrap_or_default()
    }
}

/// Runs sessions against a shared knowledge base and providers.
pub struct Engine {
    kb: Arc<KnowledgeBase>,
    embedder: Arc<dyn Embedder>,
    chat: Arc<dyn ChatModel>,
    clock: Arc<dyn Clock>,
    clusterer: Arc<dyn Clusterer>,
    exec: Execution,
    counter: AtomicU64,
}

struct Answer {
    response: String,
    fragment_ids: Vec<String>,
}

fn postprocess_followup(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let core = line.trim_end_matches(['.', '!', ' ']);
    if core.is_empty() {
        return None;
    }
    Some(if core.ends_with('?') {
        core.to_string()
    } else {
        format!("{core}?")
    })
}

/// Up to `n` non-stopword terms of `text` absent from `exclude`, most
/// frequent first (ties by first appearance).
fn keywords(text: &str, exclude: &str, n: usize) -> Vec<String> {
    let excluded: Vec<String> = tokenize(exclude);
    let mut counts: Vec<(String, usize)> = Vec::new();
    for t in tokenize(text) {
        if is_stopword(&t) || excluded.contains(&t) || t.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        match counts.iter_mut().find(|(w, _)| *w == t) {
            Some((_, c)) => *c += 1,
            None => counts.push((t, 1)),
        }
    }
    // stable sort keeps first-appearance order among equal counts
    counts.sort_by_key(|c| std::cmp::Reverse(c.1));
    counts.into_iter().take(n).map(|(w, _)| w).collect()
}

impl Engine {
    pub fn new(kb: Arc<KnowledgeBase>, embedder: Arc<dyn Embedder>, chat: Arc<dyn ChatModel>) -> Self {
        Self {
            kb,
            embedder,
            chat,
            clock: Arc::new(SystemClock),
            clusterer: Arc::new(AverageLinkageGapCut),
            exec: Execution::default(),
            counter: AtomicU64::new(0),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_clusterer(mut self, clusterer: Arc<dyn Clusterer>) -> Self {
        self.clusterer = clusterer;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    fn next_session_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        format!("sess-{n:06}")
    }

    /// Open a session and answer its first query.
    pub fn start_session(&self, query: &str, config: SessionConfig) -> Result<Session, EngineError> {
        config.validate()?;
        let query = query.trim();
        if query.is_empty() {
            return Err(EngineError::EmptyQuery);
        }
        let mut session = Session {
            id: String::new(),
            dialogue_id: None,
            config,
            tree: None,
            state: None,
            transcript: Vec::new(),
            status: TerminationStatus::ACTIVE,
            proposed_node: None,
            pending_query: None,
        };
        let user_at = self.clock.now();
        match session.config.mode {
            Mode::Lexguide => self.rebuild_and_answer(&mut session, query, query, user_at)?,
            _ => self.baseline_turn(&mut session, query, user_at)?,
        }
        // only consume an id once the session exists
        session.id = self.next_session_id();
        Ok(session)
    }

    /// Process one user utterance. The session is left untouched on error.
    pub fn take_turn(&self, session: &mut Session, utterance: &str) -> Result<DialogueTurn, EngineError> {
        if !session.is_active() {
            return Err(EngineError::SessionTerminated);
        }
        let utterance = utterance.trim();
        if utterance.is_empty() {
            return Err(EngineError::EmptyQuery);
        }
        let mut work = session.clone();
        let user_at = self.clock.now();
        match work.config.mode {
            Mode::Lexguide => self.lexguide_turn(&mut work, utterance, user_at)?,
            _ => self.baseline_turn(&mut work, utterance, user_at)?,
        }
        *session = work;
        Ok(session.transcript.last().expect("turn appended").clone())
    }

    /// Apply an explicit navigation operation without generating a response.
    pub fn apply_navigation<'s>(
        &self,
        session: &'s mut Session,
        op: &Operation,
    ) -> Result<&'s NavigationState, EngineError> {
        if !session.is_active() {
            return Err(EngineError::SessionTerminated);
        }
        let mode = session.config.mode;
        let (Some(tree), Some(state)) = (session.tree.as_ref(), session.state.as_mut()) else {
            return Err(EngineError::NoTree(mode));
        };
        apply_operation(state, tree, op)?;
        Ok(state)
    }

    /// End a session on an explicit signal (user satisfaction or quit).
    pub fn end_session(&self, session: &mut Session, signal: Signal) {
        if !session.is_active() {
            return;
        }
        session.status = match signal {
            Signal::None => return,
            Signal::UserSatisfied => TerminationStatus::ended(TerminationReason::UserSatisfied),
            Signal::TimeoutOrQuit => TerminationStatus::ended(TerminationReason::Abandoned),
        };
    }

    /// Start with `query`, then accept every proposed follow-up until the
    /// session ends or `max_turns` responses were produced.
    pub fn simulate_acknowledging(
        &self,
        query: &str,
        config: SessionConfig,
        max_turns: usize,
    ) -> Result<Session, EngineError> {
        let mut s = self.start_session(query, config)?;
        while s.is_active() && s.transcript.len() < max_turns {
            let Some(f) = s.last_followup().map(str::to_string) else { break };
            self.take_turn(&mut s, &f)?;
        }
        Ok(s)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EngineError> {
        Ok(self.embedder.embed_one(text)?)
    }

    fn push_turn(
        &self,
        session: &mut Session,
        user: &str,
        answer: Answer,
        followup: Option<String>,
        user_at: DateTime<Utc>,
    ) {
        let node_id = session.state.as_ref().map(|s| s.current.clone());
        if let Some(state) = session.state.as_mut() {
            state.push_history(HistoryEntry {
                user: user.to_string(),
                response: answer.response.clone(),
                followup: followup.clone(),
            });
        }
        session.transcript.push(DialogueTurn {
            user_utterance: user.to_string(),
            response: answer.response,
            followup,
            node_id,
            supporting_fragment_ids: answer.fragment_ids,
            timestamps: Timestamps {
                user_at,
                response_at: self.clock.now(),
            },
        });
    }

    fn no_results(&self, session: &mut Session, user: &str, user_at: DateTime<Utc>) {
        let answer = Answer {
            response: NO_RESULTS_RESPONSE.into(),
            fragment_ids: Vec::new(),
        };
        session.proposed_node = None;
        self.push_turn(session, user, answer, None, user_at);
        session.status = TerminationStatus::ended(TerminationReason::NoResults);
    }

    /// Retrieve for `query`, build a fresh tree, reset navigation (history and
    /// strategy survive) and answer from the new root.
    fn rebuild_and_answer(
        &self,
        session: &mut Session,
        user: &str,
        query: &str,
        user_at: DateTime<Utc>,
    ) -> Result<(), EngineError> {
        session.pending_query = None;
        if self.kb.is_empty() {
            self.no_results(session, user, user_at);
            return Ok(());
        }
        let q = self.embed(query)?;
        let cfg = &session.config;
        let hits = self.kb.index.mmr_retrieve(&q, cfg.k_topic, cfg.lambda, self.exec)?;
        if hits.is_empty() {
            self.no_results(session, user, user_at);
            return Ok(());
        }
        let fragments: Vec<Fragment> = hits.iter().map(|h| self.fragment(&h.fragment_id).clone()).collect();
        let vectors: Vec<EmbeddingVector> = hits.iter().map(|h| self.vector(&h.fragment_id).clone()).collect();
        let tree = build_topic_tree(&fragments, &vectors, cfg.topic_params(), self.clusterer.as_ref(), self.exec)?;

        let (strategy, history) = match session.state.take() {
            Some(old) => (old.strategy, old.history),
            None => (cfg.strategy, Vec::new()),
        };
        let mut state = NavigationState::new(&tree, strategy);
        state.history = history;
        session.tree = Some(tree);
        session.state = Some(state);
        self.answer_at_current(session, user, query, &q, user_at)
    }

    fn fragment(&self, id: &str) -> &Fragment {
        self.kb.fragment(id).expect("indexed fragment exists")
    }

    fn vector(&self, id: &str) -> &EmbeddingVector {
        self.kb.index.vector(id).expect("indexed vector exists")
    }

    fn lexguide_turn(&self, session: &mut Session, user: &str, user_at: DateTime<Utc>) -> Result<(), EngineError> {
        if let Some(pending) = session.pending_query.take() {
            if is_acknowledgment(user, CLARIFY_RESPONSE) {
                return self.rebuild_and_answer(session, user, &pending, user_at);
            }
        }
        let (tree, state) = match (session.tree.as_ref(), session.state.as_ref()) {
            (Some(t), Some(s)) => (t, s),
            _ => return self.rebuild_and_answer(session, user, user, user_at),
        };

        let ack_target = match (session.last_followup(), session.proposed_node.as_deref()) {
            (Some(f), Some(proposed)) if is_acknowledgment(user, f) => {
                let target = if state.is_unvisited(proposed) {
                    Some(proposed.to_string())
                } else {
                    next_node(state, tree)
                };
                target.map(|t| (t, f.to_string()))
            }
            _ => None,
        };

        if let Some((target, followup)) = ack_target {
            let q = self.embed(&followup)?;
            let (tree, state) = (session.tree.as_ref().unwrap(), session.state.as_mut().unwrap());
            state.move_to(tree, &target)?;
            return self.answer_at_current(session, user, &followup, &q, user_at);
        }

        let q = self.embed(user)?;
        let decision = route_query(state, tree, &q, session.config.tau, session.config.interactive);
        match decision.kind {
            RoutingKind::RevisitVisited | RoutingKind::DescendUnexplored | RoutingKind::GlobalJump => {
                let target = decision.target.expect("in-tree decisions carry a target");
                let (tree, state) = (session.tree.as_ref().unwrap(), session.state.as_mut().unwrap());
                if target != state.current {
                    state.move_to(tree, &target)?;
                }
                self.answer_at_current(session, user, user, &q, user_at)
            }
            RoutingKind::RebuildTree => self.rebuild_and_answer(session, user, user, user_at),
            RoutingKind::Clarify => {
                session.pending_query = Some(user.to_string());
                session.proposed_node = None;
                let answer = Answer {
                    response: CLARIFY_RESPONSE.into(),
                    fragment_ids: Vec::new(),
                };
                self.push_turn(session, user, answer, None, user_at);
                Ok(())
            }
        }
    }

    /// Answer from the current node's fragments, propose the next node and
    /// check for complete coverage.
    fn answer_at_current(
        &self,
        session: &mut Session,
        user: &str,
        query: &str,
        q: &EmbeddingVector,
        user_at: DateTime<Utc>,
    ) -> Result<(), EngineError> {
        let (tree, state) = (session.tree.as_ref().unwrap(), session.state.as_ref().unwrap());
        let node = tree.node(&state.current).expect("current node in tree");
        let mut ranked: Vec<(&str, f64)> = node
            .fragment_ids
            .iter()
            .map(|id| (id.as_str(), cosine_or_zero(q, self.vector(id))))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let ids: Vec<&str> = ranked.iter().take(session.config.k_answer).map(|(id, _)| *id).collect();
        let answer = self.generate_response(query, &ids, session.config.temperature)?;

        let target = next_node(state, tree);
        let followup = match &target {
            Some(t) => {
                let words = self.node_words(tree, t, session.config.l_topic_words);
                let recent = recent_exchanges(&session.transcript, user, &answer.response);
                Some(self.generate_followup(&words, &recent, session.config.temperature)?)
            }
            None => None,
        };
        session.proposed_node = target;
        self.push_turn(session, user, answer, followup, user_at);
        let (tree, state) = (session.tree.as_ref().unwrap(), session.state.as_ref().unwrap());
        session.status = check_termination(state, tree, Signal::None);
        Ok(())
    }

    /// The node's topic words, or its most frequent content terms when
    /// tf-idf produced none.
    fn node_words(&self, tree: &TopicTree, id: &str, l: usize) -> Vec<String> {
        let node = tree.node(id).expect("target in tree");
        if !node.words.is_empty() {
            return node.word_terms(l).into_iter().map(str::to_string).collect();
        }
        let text: Vec<&str> = node.fragment_ids.iter().map(|f| self.fragment(f).text.as_str()).collect();
        let words = keywords(&text.join(" "), "", l);
        if words.is_empty() {
            vec!["related topics".into()]
        } else {
            words
        }
    }

    fn baseline_turn(&self, session: &mut Session, user: &str, user_at: DateTime<Utc>) -> Result<(), EngineError> {
        let cfg = session.config.clone();
        let query = match session.last_followup() {
            Some(f) if cfg.mode == Mode::ConvRag && is_acknowledgment(user, f) => f.to_string(),
            _ => user.to_string(),
        };
        if self.kb.is_empty() {
            self.no_results(session, user, user_at);
            return Ok(());
        }
        let q = self.embed(&query)?;
        let hits: Vec<ScoredFragment> = match cfg.mode {
            Mode::RagMmr => self.kb.index.mmr_retrieve(&q, cfg.k_answer, cfg.lambda, self.exec)?,
            _ => self.kb.index.top_k(&q, cfg.k_answer, self.exec)?,
        };
        if hits.is_empty() {
            self.no_results(session, user, user_at);
            return Ok(());
        }
        let ids: Vec<&str> = hits.iter().map(|h| h.fragment_id.as_str()).collect();
        let answer = self.generate_response(&query, &ids, cfg.temperature)?;
        let followup = if cfg.mode == Mode::ConvRag {
            let words = keywords(&answer.response, user, HISTORY_WINDOW);
            if words.is_empty() {
                None
            } else {
                let recent = recent_exchanges(&session.transcript, user, &answer.response);
                Some(self.generate_followup(&words, &recent, cfg.temperature)?)
            }
        } else {
            None
        };
        self.push_turn(session, user, answer, followup, user_at);
        Ok(())
    }

    /// One chat call with the answer template over the given fragments.
    fn generate_response(&self, query: &str, fragment_ids: &[&str], temperature: f64) -> Result<Answer, EngineError> {
        if fragment_ids.is_empty() {
            return Ok(Answer {
                response: NO_CONTEXT_RESPONSE.into(),
                fragment_ids: Vec::new(),
            });
        }
        let context: Vec<String> = fragment_ids
            .iter()
            .map(|id| format!("[{id}] {}", normalize_whitespace(&self.fragment(id).text)))
            .collect();
        let (system, user) = template(TemplateKind::Answer)
            .render(&[("context", &context.join("\n")), ("question", &normalize_whitespace(query))]);
        let text = self
            .chat
            .chat_complete(&ChatRequest::new(system, user).with_temperature(temperature))?;
        Ok(Answer {
            response: text.trim().to_string(),
            fragment_ids: fragment_ids.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// One chat call with the follow-up template; the result is forced into a
    /// single question.
    fn generate_followup(
        &self,
        words: &[String],
        recent: &[(String, String)],
        temperature: f64,
    ) -> Result<String, EngineError> {
        let history: String = if recent.is_empty() {
            String::new()
        } else {
            let mut h = String::from("Conversation so far:\n");
            for (u, r) in recent {
                h.push_str(&format!("Citizen: {}\nAssistant: {}\n", normalize_whitespace(u), normalize_whitespace(r)));
            }
            h.push('\n');
            h
        };
        let (system, user) = template(TemplateKind::Followup).render(&[("history", &history), ("words", &words.join(", "))]);
        let raw = self
            .chat
            .chat_complete(&ChatRequest::new(system, user).with_temperature(temperature))?;
        postprocess_followup(&raw).ok_or(EngineError::Provider(ProviderError::EmptyCompletion))
    }
}

/// The last exchanges (at most [`HISTORY_WINDOW`]) including the one being
/// answered now.
fn recent_exchanges(transcript: &[DialogueTurn], user: &str, response: &str) -> Vec<(String, String)> {
    let mut all: Vec<(String, String)> = transcript
        .iter()
        .map(|t| (t.user_utterance.clone(), t.response.clone()))
        .collect();
    all.push((user.to_string(), response.to_string()));
    let skip = all.len().saturating_sub(HISTORY_WINDOW);
    all.split_off(skip)
}
