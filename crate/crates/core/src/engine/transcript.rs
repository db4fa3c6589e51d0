//! Transcript JSONL and session snapshots.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DialogueTurn, EngineError, Session, SessionConfig, Timestamps};
use crate::navigator::{NavigationState, TerminationStatus};
use crate::topics::{TopicTree, TreeSnapshot};

pub const SESSION_FORMAT: &str = "lexguide-session/1";

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub session_id: String,
    pub turn_index: usize,
    pub user: String,
    pub response: String,
    pub followup: Option<String>,
    pub node_id: Option<String>,
    pub supporting_fragment_ids: Vec<String>,
    pub timestamps: Timestamps,
}

impl TranscriptLine {
    pub fn new(session_id: &str, turn_index: usize, turn: &DialogueTurn) -> Self {
        Self {
            session_id: session_id.to_string(),
            turn_index,
            user: turn.user_utterance.clone(),
            response: turn.response.clone(),
            followup: turn.followup.clone(),
            node_id: turn.node_id.clone(),
            supporting_fragment_ids: turn.supporting_fragment_ids.clone(),
            timestamps: turn.timestamps.clone(),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_transcript(session: &Session, path: &Path) -> Result<(), EngineError> {
    let io = io_err(path);
    let mut w = BufWriter::new(fs::File::create(path).map_err(&io)?);
    for (i, turn) in session.transcript.iter().enumerate() {
        let line = serde_json::to_string(&TranscriptLine::new(&session.id, i, turn)).expect("line serializes");
        writeln!(w, "{line}").map_err(&io)?;
    }
    w.flush().map_err(&io)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptLine>, EngineError> {
    let io = io_err(path);
    let reader = BufReader::new(fs::File::open(path).map_err(&io)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(&io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EngineError::Snapshot(format!("{} line {}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Full serializable session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub format: String,
    pub id: String,
    #[serde(default)]
    pub dialogue_id: Option<String>,
    pub config: SessionConfig,
    pub status: TerminationStatus,
    pub tree: Option<TreeSnapshot>,
    pub state: Option<NavigationState>,
    #[serde(default)]
    pub proposed_node: Option<String>,
    #[serde(default)]
    pub pending_query: Option<String>,
    pub transcript: Vec<DialogueTurn>,
}

impl Session {
    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            format: SESSION_FORMAT.into(),
            id: self.id.clone(),
            dialogue_id: self.dialogue_id.clone(),
            config: self.config.clone(),
            status: self.status,
            tree: self.tree.as_ref().map(TopicTree::snapshot),
            state: self.state.clone(),
            proposed_node: self.proposed_node.clone(),
            pending_query: self.pending_query.clone(),
            transcript: self.transcript.clone(),
        }
    }

    pub fn from_snapshot(s: SessionSnapshot) -> Result<Self, EngineError> {
        if s.format != SESSION_FORMAT {
            return Err(EngineError::Snapshot(format!("expected format {SESSION_FORMAT}, got {}", s.format)));
        }
        let tree = match &s.tree {
            Some(t) => Some(TopicTree::from_snapshot(t).ok_or_else(|| EngineError::Snapshot("inconsistent tree".into()))?),
            None => None,
        };
        if let (Some(tree), Some(state)) = (&tree, &s.state) {
            let known = |id: &String| tree.contains(id);
            if !known(&state.current) || !state.path.iter().all(known) || state.path.last() != Some(&state.current) {
                return Err(EngineError::Snapshot("navigation state does not match tree".into()));
            }
        }
        Ok(Self {
            id: s.id,
            dialogue_id: s.dialogue_id,
            config: s.config,
            tree,
            state: s.state,
            transcript: s.transcript,
            status: s.status,
            proposed_node: s.proposed_node,
            pending_query: s.pending_query,
        })
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), EngineError> {
        let json = serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes");
        fs::write(path, json + "\n").map_err(io_err(path))
    }

    pub fn load_snapshot(path: &Path) -> Result<Self, EngineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let snap: SessionSnapshot =
            serde_json::from_str(&text).map_err(|e| EngineError::Snapshot(format!("{}: {e}", path.display())))?;
        Self::from_snapshot(snap)
    }
}
