//! Metric suite over session transcripts and gold dialogues.

mod metrics;
mod readability;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{
    coverage, followup_diversity, groundedness, rouge_l_recall, semantic_relevance, temporal_consistency,
    topic_coverage, FlowTurn, GoldSection, TopicCoverage, DEFAULT_TAU_COV, DEFAULT_THETA,
};
pub use readability::{flesch_reading_ease, syllables};

use crate::dataset::{split_eprs_utterance, EudialDialogue, Role};
use crate::engine::{KnowledgeBase, Mode, Session, SESSION_FORMAT};
use crate::parallel::Execution;
use crate::providers::{Embedder, ProviderError};

/// Known departures of this metric suite from the usual definitions,
/// recorded in every report.
pub const DEVIATIONS: &[&str] = &[
    "semantic_relevance is the cosine of whole-text embeddings, approximating a token-level matching score",
    "temporal_consistency is the mean cosine between each follow-up and the next user utterance plus response",
    "topic_coverage_word compares gold sections with the joined topic words of visited nodes of the final tree",
    "topic_coverage_content compares gold sections with the system responses",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("text has no words")]
    EmptyText,
    #[error("gold text is empty")]
    EmptyGold,
    #[error("word-based coverage needs a topic tree")]
    NoTree,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no evaluable runs: {0}")]
    NoRuns(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub theta: f64,
    pub tau_cov: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            tau_cov: DEFAULT_TAU_COV,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueMetrics {
    pub dialogue_id: String,
    pub session_id: String,
    pub mode: Mode,
    pub n_turns: usize,
    pub groundedness: f64,
    #[serde(rename = "completeness_rougeL")]
    pub completeness_rouge_l: f64,
    pub relevance: f64,
    pub readability_fre: f64,
    pub followup_diversity: f64,
    pub temporal_consistency: f64,
    pub topic_coverage_word: Option<f64>,
    pub topic_coverage_content: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_dialogues: usize,
    pub groundedness: f64,
    #[serde(rename = "completeness_rougeL")]
    pub completeness_rouge_l: f64,
    pub relevance: f64,
    pub readability_fre: f64,
    pub followup_diversity: f64,
    pub temporal_consistency: f64,
    /// Mean over dialogues that have a tree; absent when none do.
    pub topic_coverage_word: Option<f64>,
    pub topic_coverage_content: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(flatten)]
    pub eval: EvalConfig,
    pub modes: Vec<Mode>,
    pub n_sessions: usize,
    pub unmatched_sessions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ReportConfig,
    pub per_dialogue: Vec<DialogueMetrics>,
    /// Keyed by engine mode.
    pub aggregates: BTreeMap<Mode, Aggregates>,
    pub deviations: Vec<String>,
}

/// Expert answers of a gold dialogue as coverage targets.
pub fn gold_sections(gold: &EudialDialogue) -> Vec<GoldSection> {
    gold.turns
        .iter()
        .filter(|t| t.role == Role::Eprs)
        .map(|t| GoldSection {
            header: t.section.clone().unwrap_or_default(),
            content: split_eprs_utterance(&t.utterance).0,
        })
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// All metrics for one replayed session against its gold dialogue.
pub fn evaluate_session(
    session: &Session,
    gold: &EudialDialogue,
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    cfg: EvalConfig,
) -> Result<DialogueMetrics, EvalError> {
    let responses: Vec<String> = session.transcript.iter().map(|t| t.response.clone()).collect();
    let joined = responses.join(" ");
    let sections = gold_sections(gold);
    let gold_text = sections.iter().map(|s| s.content.as_str()).collect::<Vec<_>>().join(" ");

    let ground = mean(session.transcript.iter().map(|t| {
        let texts: Vec<&str> = t
            .supporting_fragment_ids
            .iter()
            .filter_map(|id| kb.fragment(id).map(|f| f.text.as_str()))
            .collect();
        groundedness(&t.response, &texts, cfg.theta)
    }));
    let followups: Vec<String> = session.transcript.iter().filter_map(|t| t.followup.clone()).collect();
    let flow: Vec<FlowTurn<'_>> = session
        .transcript
        .iter()
        .map(|t| FlowTurn {
            user: &t.user_utterance,
            response: &t.response,
            followup: t.followup.as_deref(),
        })
        .collect();
    let node_words: Option<Vec<Vec<String>>> = match (&session.tree, &session.state) {
        (Some(tree), Some(state)) => Some(
            state
                .seen()
                .into_iter()
                .filter_map(|id| tree.node(id))
                .map(|n| n.words.iter().map(|w| w.term.clone()).collect())
                .collect(),
        ),
        _ => None,
    };
    let cov = topic_coverage(embedder, &sections, node_words.as_deref(), &responses, cfg.tau_cov, false)?;

    Ok(DialogueMetrics {
        dialogue_id: gold.id.clone(),
        session_id: session.id.clone(),
        mode: session.config.mode,
        n_turns: session.transcript.len(),
        groundedness: ground,
        completeness_rouge_l: rouge_l_recall(&joined, &gold_text)?,
        relevance: semantic_relevance(embedder, &joined, &gold_text)?,
        readability_fre: flesch_reading_ease(&joined)?,
        followup_diversity: followup_diversity(embedder, &followups)?,
        temporal_consistency: temporal_consistency(embedder, &flow)?,
        topic_coverage_word: cov.word_based,
        topic_coverage_content: cov.content_based,
    })
}

fn aggregate(rows: &[&DialogueMetrics]) -> Aggregates {
    let avg = |f: fn(&DialogueMetrics) -> f64| mean(rows.iter().map(|r| f(r)));
    let words: Vec<f64> = rows.iter().filter_map(|r| r.topic_coverage_word).collect();
    Aggregates {
        n_dialogues: rows.len(),
        groundedness: avg(|r| r.groundedness),
        completeness_rouge_l: avg(|r| r.completeness_rouge_l),
        relevance: avg(|r| r.relevance),
        readability_fre: avg(|r| r.readability_fre),
        followup_diversity: avg(|r| r.followup_diversity),
        temporal_consistency: avg(|r| r.temporal_consistency),
        topic_coverage_word: (!words.is_empty()).then(|| mean(words)),
        topic_coverage_content: avg(|r| r.topic_coverage_content),
    }
}

fn find_gold<'g>(session: &Session, gold: &'g [EudialDialogue]) -> Option<&'g EudialDialogue> {
    if let Some(id) = &session.dialogue_id {
        return gold.iter().find(|g| &g.id == id);
    }
    let first = session.transcript.first()?.user_utterance.trim();
    gold.iter()
        .find(|g| g.turns.first().is_some_and(|t| t.role == Role::Citizen && t.utterance.trim() == first))
}

/// Evaluate every session that matches a gold dialogue (by dialogue id, else
/// by its first utterance). Aggregates are per-mode means.
pub fn evaluate_runs(
    sessions: &[Session],
    gold: &[EudialDialogue],
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    cfg: EvalConfig,
    exec: Execution,
) -> Result<MetricsReport, EvalError> {
    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for s in sessions {
        match find_gold(s, gold) {
            Some(g) if !s.transcript.is_empty() => matched.push((s, g)),
            _ => unmatched.push(s.id.clone()),
        }
    }
    if matched.is_empty() {
        return Err(EvalError::NoRuns(format!("{} sessions, none matched a gold dialogue", sessions.len())));
    }
    let per_dialogue = exec
        .map(&matched, |(s, g)| evaluate_session(s, g, kb, embedder, cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut modes: Vec<Mode> = per_dialogue.iter().map(|r| r.mode).collect();
    modes.sort();
    modes.dedup();
    let aggregates = modes
        .iter()
        .map(|&m| {
            let rows: Vec<&DialogueMetrics> = per_dialogue.iter().filter(|r| r.mode == m).collect();
            (m, aggregate(&rows))
        })
        .collect();
    Ok(MetricsReport {
        config: ReportConfig {
            eval: cfg,
            modes,
            n_sessions: sessions.len(),
            unmatched_sessions: unmatched,
        },
        per_dialogue,
        aggregates,
        deviations: DEVIATIONS.iter().map(|s| s.to_string()).collect(),
    })
}

/// Load every session snapshot (`*.json` with the session format) in `dir`,
/// in file-name order.
pub fn load_runs(dir: &Path) -> Result<Vec<Session>, EvalError> {
    let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", dir.display()));
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(io)?;
        if !text.contains(SESSION_FORMAT) {
            continue;
        }
        out.push(Session::load_snapshot(&p).map_err(|e| EvalError::Io(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_report_json(report: &MetricsReport, path: &Path) -> Result<(), EvalError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, json + "\n").map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

/// One row per mode, one column per metric.
pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from(
        "mode,n_dialogues,groundedness,completeness_rougeL,relevance,readability_fre,followup_diversity,temporal_consistency,topic_coverage_word,topic_coverage_content\n",
    );
    for (mode, a) in &report.aggregates {
        out.push_str(&format!(
            "{mode},{},{:.4},{:.4},{:.4},{:.2},{:.4},{:.4},{},{:.4}\n",
            a.n_dialogues,
            a.groundedness,
            a.completeness_rouge_l,
            a.relevance,
            a.readability_fre,
            a.followup_diversity,
            a.temporal_consistency,
            a.topic_coverage_word.map_or(String::new(), |v| format!("{v:.4}")),
            a.topic_coverage_content,
        ));
    }
    out
}
