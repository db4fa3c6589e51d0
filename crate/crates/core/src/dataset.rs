//! Multi-turn dialogue construction from single-turn QA documents, plus
//! dataset statistics and the EUDial file format.
//!
//! A document with `k` sections becomes `2k` turns: the citizen question,
//! then one expert turn per section separated by citizen acknowledgments of
//! the previous follow-up.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::text::{normalize_whitespace, split_sentences, word_count};
use crate::corpus::DocumentRecord;
use crate::eval::flesch_reading_ease;
use crate::parallel::Execution;
use crate::prompts::{template, TemplateKind};
use crate::providers::{ChatModel, ChatRequest, ProviderError};

pub const EUDIAL_SCHEMA: &str = "eudial/1";
pub const ANSWER_MARKER: &str = "[ANSWER]";
pub const FOLLOWUP_MARKER: &str = "[FOLLOWUP QUESTION]";
pub const SUMMARY_WORD_CAP: usize = 60;
pub const MAX_SECTIONS: usize = 9;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no question could be inferred for {0:?}")]
    NoQuestionInferred(String),
    #[error("document {0} has no sections")]
    NoSections(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("malformed EUDial file: {0}")]
    Malformed(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Citizen,
    Eprs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EudialTurn {
    pub role: Role,
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<String>,
}

impl EudialTurn {
    pub fn citizen(utterance: impl Into<String>) -> Self {
        Self {
            role: Role::Citizen,
            utterance: utterance.into(),
            section: None,
        }
    }

    pub fn eprs(utterance: impl Into<String>, section: impl Into<String>) -> Self {
        Self {
            role: Role::Eprs,
            utterance: utterance.into(),
            section: Some(section.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EudialDialogue {
    pub schema_version: String,
    pub id: String,
    pub source_doc_id: String,
    pub turns: Vec<EudialTurn>,
}

impl EudialDialogue {
    /// Consecutive citizen → expert turn pairs.
    pub fn turn_pairs(&self) -> impl Iterator<Item = (&EudialTurn, &EudialTurn)> {
        self.turns
            .windows(2)
            .filter(|w| w[0].role == Role::Citizen && w[1].role == Role::Eprs)
            .map(|w| (&w[0], &w[1]))
    }

    pub fn n_turn_pairs(&self) -> usize {
        self.turn_pairs().count()
    }

    pub fn roles_alternate(&self) -> bool {
        self.turns.first().is_some_and(|t| t.role == Role::Citizen) && self.turns.windows(2).all(|w| w[0].role != w[1].role)
    }
}

/// Split an expert utterance into its answer and optional follow-up.
pub fn split_eprs_utterance(utterance: &str) -> (String, Option<String>) {
    let body = utterance.trim();
    let body = body.strip_prefix(ANSWER_MARKER).unwrap_or(body);
    match body.split_once(FOLLOWUP_MARKER) {
        Some((a, f)) => (a.trim().to_string(), Some(f.trim().to_string()).filter(|f| !f.is_empty())),
        None => (body.trim().to_string(), None),
    }
}

/// Expert utterance text without markers.
pub fn strip_markers(utterance: &str) -> String {
    let (a, f) = split_eprs_utterance(utterance);
    match f {
        Some(f) => format!("{a} {f}"),
        None => a,
    }
}

/// Keep whole leading sentences up to `cap` words; a first sentence that is
/// already longer is cut at `cap` words.
pub fn cap_words(text: &str, cap: usize) -> String {
    let text = normalize_whitespace(text);
    let mut out: Vec<String> = Vec::new();
    let mut words = 0;
    for s in split_sentences(&text) {
        let n = s.split_whitespace().count();
        if words + n > cap {
            if out.is_empty() {
                out.push(s.split_whitespace().take(cap).collect::<Vec<_>>().join(" "));
            }
            break;
        }
        words += n;
        out.push(s);
    }
    out.join(" ")
}

fn complete(chat: &dyn ChatModel, kind: TemplateKind, vars: &[(&str, &str)]) -> Result<String, ProviderError> {
    let (system, user) = template(kind).render(vars);
    chat.chat_complete(&ChatRequest::new(system, user))
}

/// Infer the citizen's question from a title and an introductory paragraph.
pub fn normalize_question(chat: &dyn ChatModel, title: &str, paragraph: &str) -> Result<String, DatasetError> {
    let title_n = normalize_whitespace(title);
    if title_n.is_empty() {
        return Err(DatasetError::NoQuestionInferred(title.to_string()));
    }
    let out = complete(
        chat,
        TemplateKind::Question,
        &[("title", &title_n), ("paragraph", &normalize_whitespace(paragraph))],
    )?;
    let out = out.trim();
    if out.trim_end_matches('.').eq_ignore_ascii_case("n/a") {
        return Err(DatasetError::NoQuestionInferred(title.to_string()));
    }
    Ok(out.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    /// Re-infer each question from its text and first section.
    pub normalize_questions: bool,
}

fn as_question(text: &str) -> String {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let core = line.trim_end_matches(['.', '!', ' ']);
    if core.ends_with('?') {
        core.to_string()
    } else {
        format!("{core}?")
    }
}

fn acknowledgment(next_header: &str) -> String {
    let topic = next_header.trim().trim_end_matches(['?', '.', '!', ':', ';']);
    format!("Yes, tell me about {topic}.")
}

/// Turn one document into a proactive dialogue.
pub fn build_dialogue(doc: &DocumentRecord, chat: &dyn ChatModel, opts: BuildOptions) -> Result<EudialDialogue, DatasetError> {
    let k = doc.sections.len();
    if k == 0 {
        return Err(DatasetError::NoSections(doc.id.clone()));
    }
    let question = if opts.normalize_questions {
        normalize_question(chat, &doc.question, &doc.sections[0].content)?
    } else {
        normalize_whitespace(&doc.question)
    };
    let mut turns = vec![EudialTurn::citizen(question.clone())];
    for (j, section) in doc.sections.iter().enumerate() {
        let header = normalize_whitespace(&section.header);
        let summary = complete(
            chat,
            TemplateKind::Summary,
            &[
                ("question", &question),
                ("header", &header),
                ("content", &normalize_whitespace(&section.content)),
            ],
        )?;
        let answer = cap_words(&summary, SUMMARY_WORD_CAP);
        match doc.sections.get(j + 1) {
            Some(next) => {
                let next_header = normalize_whitespace(&next.header);
                let f = complete(
                    chat,
                    TemplateKind::SectionFollowup,
                    &[("question", &question), ("header", &next_header)],
                )?;
                turns.push(EudialTurn::eprs(
                    format!("{ANSWER_MARKER} {answer} {FOLLOWUP_MARKER} {}", as_question(&f)),
                    header,
                ));
                turns.push(EudialTurn::citizen(acknowledgment(&next_header)));
            }
            None => turns.push(EudialTurn::eprs(format!("{ANSWER_MARKER} {answer}"), header)),
        }
    }
    Ok(EudialDialogue {
        schema_version: EUDIAL_SCHEMA.into(),
        id: format!("eudial-{}", doc.id),
        source_doc_id: doc.id.clone(),
        turns,
    })
}

/// Build every dialogue; documents are processed independently.
pub fn build_dataset(
    docs: &[DocumentRecord],
    chat: &dyn ChatModel,
    opts: BuildOptions,
    exec: Execution,
) -> Result<Vec<EudialDialogue>, DatasetError> {
    exec.map(docs, |d| build_dialogue(d, chat, opts)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_dialogues: usize,
    pub n_turn_pairs: usize,
    pub mean_turn_pairs: f64,
    pub min_turn_pairs: usize,
    pub max_turn_pairs: usize,
    pub mean_citizen_words: f64,
    pub mean_eprs_words: f64,
    /// Mean over pairs of citizen words / expert words.
    pub qa_ratio_per_pair: f64,
    /// Mean over dialogues of total citizen words / total expert words.
    pub qa_ratio_per_dialogue: f64,
    pub fre_per_turn: f64,
    pub fre_per_dialogue: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn compute_dataset_stats(dialogues: &[EudialDialogue]) -> Result<DatasetStats, DatasetError> {
    if dialogues.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let pairs: Vec<usize> = dialogues.iter().map(EudialDialogue::n_turn_pairs).collect();
    let turns = || dialogues.iter().flat_map(|d| d.turns.iter());
    let eprs_text = |t: &EudialTurn| strip_markers(&t.utterance);
    let citizen_words: Vec<f64> = turns()
        .filter(|t| t.role == Role::Citizen)
        .map(|t| word_count(&t.utterance) as f64)
        .collect();
    let eprs_words: Vec<f64> = turns()
        .filter(|t| t.role == Role::Eprs)
        .map(|t| word_count(&eprs_text(t)) as f64)
        .collect();
    let pair_ratios = dialogues.iter().flat_map(|d| d.turn_pairs()).filter_map(|(c, e)| {
        let a = word_count(&eprs_text(e));
        (a > 0).then(|| word_count(&c.utterance) as f64 / a as f64)
    });
    let dialogue_ratios = dialogues.iter().filter_map(|d| {
        let (mut q, mut a) = (0usize, 0usize);
        for t in &d.turns {
            match t.role {
                Role::Citizen => q += word_count(&t.utterance),
                Role::Eprs => a += word_count(&eprs_text(t)),
            }
        }
        (a > 0).then(|| q as f64 / a as f64)
    });
    let fre_turns = turns()
        .filter(|t| t.role == Role::Eprs)
        .filter_map(|t| flesch_reading_ease(&eprs_text(t)).ok());
    let fre_dialogues = dialogues.iter().filter_map(|d| {
        let text: Vec<String> = d.turns.iter().filter(|t| t.role == Role::Eprs).map(eprs_text).collect();
        flesch_reading_ease(&text.join(" ")).ok()
    });
    Ok(DatasetStats {
        n_dialogues: dialogues.len(),
        n_turn_pairs: pairs.iter().sum(),
        mean_turn_pairs: mean(pairs.iter().map(|&p| p as f64)),
        min_turn_pairs: pairs.iter().copied().min().unwrap_or(0),
        max_turn_pairs: pairs.iter().copied().max().unwrap_or(0),
        mean_citizen_words: mean(citizen_words),
        mean_eprs_words: mean(eprs_words),
        qa_ratio_per_pair: mean(pair_ratios),
        qa_ratio_per_dialogue: mean(dialogue_ratios),
        fre_per_turn: mean(fre_turns),
        fre_per_dialogue: mean(fre_dialogues),
    })
}

pub fn export_eudial(dialogues: &[EudialDialogue], path: &Path) -> Result<(), DatasetError> {
    let json = if dialogues.is_empty() {
        "[]".to_string()
    } else {
        serde_json::to_string_pretty(dialogues).expect("dialogues serialize")
    };
    fs::write(path, json + "\n").map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_role(v: &Value) -> Option<Role> {
    match v.as_str()?.to_ascii_lowercase().as_str() {
        "citizen" | "user" => Some(Role::Citizen),
        "eprs" | "assistant" | "system" => Some(Role::Eprs),
        _ => None,
    }
}

fn parse_turns(v: &Value, at: &str) -> Result<Vec<EudialTurn>, DatasetError> {
    let arr = v
        .as_array()
        .ok_or_else(|| DatasetError::Malformed(format!("{at}: turns must be an array")))?;
    arr.iter()
        .enumerate()
        .map(|(i, t)| {
            let bad = |m: &str| DatasetError::Malformed(format!("{at} turn {i}: {m}"));
            let role = t.get("role").and_then(parse_role).ok_or_else(|| bad("unknown role"))?;
            let utterance = t
                .get("utterance")
                .or_else(|| t.get("text"))
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing utterance"))?
                .to_string();
            let section = t.get("section").and_then(Value::as_str).map(str::to_string);
            Ok(EudialTurn { role, utterance, section })
        })
        .collect()
}

/// Parse an EUDial file. Accepts dialogue objects with `turns` (or
/// `dialogue`) arrays and bare turn arrays; missing ids are numbered.
pub fn parse_eudial(json: &str) -> Result<Vec<EudialDialogue>, DatasetError> {
    let root: Value = serde_json::from_str(json).map_err(|e| DatasetError::Malformed(e.to_string()))?;
    let items = match &root {
        Value::Array(a) => a.as_slice(),
        Value::Object(o) => match o.get("dialogues").and_then(Value::as_array) {
            Some(a) => a.as_slice(),
            None => return Err(DatasetError::Malformed("expected an array of dialogues".into())),
        },
        _ => return Err(DatasetError::Malformed("expected an array of dialogues".into())),
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let fallback_id = format!("dialogue-{i}");
            let (id, source, turns) = match item {
                Value::Array(_) => (fallback_id.clone(), fallback_id.clone(), parse_turns(item, &fallback_id)?),
                Value::Object(o) => {
                    let id = o
                        .get("id")
                        .or_else(|| o.get("dialogue_id"))
                        .and_then(|v| v.as_str().map(str::to_string).or_else(|| v.as_u64().map(|n| n.to_string())))
                        .unwrap_or(fallback_id);
                    let turns_v = o
                        .get("turns")
                        .or_else(|| o.get("dialogue"))
                        .ok_or_else(|| DatasetError::Malformed(format!("dialogue {id}: missing turns")))?;
                    let source = o.get("source_doc_id").and_then(Value::as_str).unwrap_or(&id).to_string();
                    let turns = parse_turns(turns_v, &id)?;
                    (id, source, turns)
                }
                _ => return Err(DatasetError::Malformed(format!("item {i} is not a dialogue"))),
            };
            Ok(EudialDialogue {
                schema_version: EUDIAL_SCHEMA.into(),
                id,
                source_doc_id: source,
                turns,
            })
        })
        .collect()
}

pub fn import_eudial(path: &Path) -> Result<Vec<EudialDialogue>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_eudial(&text)
}
