//! Line-driven dialogue loop and gold-dialogue replay.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use lexguide_core::dataset::{EudialDialogue, Role};
use lexguide_core::engine::{DialogueTurn, EngineError};
use lexguide_core::navigator::{Operation, Signal, TerminationReason};
use lexguide_core::{Engine, Mode, Session, SessionConfig};
use serde::{Deserialize, Serialize};

use crate::{stdout_err as write_err, CliError};

pub const RUNS_MANIFEST: &str = "manifest.json";
const RUNS_FORMAT: &str = "lexguide-runs/1";
pub const COVERAGE_MESSAGE: &str = "All relevant topics explored";
pub const QUIT_MESSAGE: &str = "Dialogue terminated by user";

#[derive(Debug, Serialize, Deserialize)]
struct RunsManifest {
    format: String,
    index: PathBuf,
    modes: Vec<Mode>,
    sessions: Vec<String>,
}

fn print_turn(out: &mut impl Write, n: usize, turn: &DialogueTurn, session: &Session) -> Result<(), CliError> {
    let node = turn.node_id.as_deref().unwrap_or("-");
    let path = session.breadcrumb();
    let path = if path.is_empty() { "-".to_string() } else { path };
    writeln!(out, "turn {n} | node {node} | path {path}").map_err(write_err)?;
    writeln!(out, "answer: {}", turn.response).map_err(write_err)?;
    if let Some(f) = &turn.followup {
        writeln!(out, "follow-up: {f}").map_err(write_err)?;
    }
    writeln!(out).map_err(write_err)
}

fn termination_message(reason: TerminationReason) -> &'static str {
    match reason {
        TerminationReason::CompleteCoverage => COVERAGE_MESSAGE,
        TerminationReason::UserSatisfied => "Dialogue ended: user satisfied",
        TerminationReason::Abandoned => QUIT_MESSAGE,
        TerminationReason::NoResults => "Dialogue ended: nothing relevant was found",
    }
}

fn parse_meta(line: &str) -> Result<Option<Operation>, String> {
    let mut parts = line.split_whitespace();
    let cmd = parts.next().unwrap_or("");
    let arg = parts.next();
    let need = |what: &str| arg.map(str::to_string).ok_or_else(|| format!("{cmd} needs {what}"));
    Ok(Some(match cmd {
        ":quit" => return Ok(None),
        ":ascend" => Operation::Ascend,
        ":jump" => Operation::Jump(need("a node id")?),
        ":descend" => Operation::Descend(need("a node id")?),
        ":back" => {
            let n = need("a step count")?;
            Operation::Backtrack(n.parse().map_err(|_| format!(":back needs a step count, got {n:?}"))?)
        }
        _ => return Err(format!("unknown command {cmd} (try :ascend, :jump <id>, :back <n>, :quit)")),
    }))
}

/// Run one dialogue from input lines: the first utterance opens the session,
/// `:`-prefixed lines are navigation commands. Navigation mistakes are
/// reported and skipped; engine failures abort.
pub fn run_dialogue(
    engine: &Engine,
    config: SessionConfig,
    input: impl BufRead,
    out: &mut impl Write,
    prompt: bool,
) -> Result<Option<Session>, CliError> {
    let mut session: Option<Session> = None;
    let mut lines = input.lines();
    loop {
        if prompt {
            eprint!("> ");
        }
        let Some(line) = lines.next() else { break };
        let line = line.map_err(|e| CliError::Data(format!("input: {e}")))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with(':') {
            match parse_meta(line) {
                Ok(None) => {
                    if let Some(s) = session.as_mut() {
                        engine.end_session(s, Signal::TimeoutOrQuit);
                    }
                    writeln!(out, "{QUIT_MESSAGE}").map_err(write_err)?;
                    break;
                }
                Ok(Some(op)) => match session.as_mut() {
                    None => eprintln!("error: no session yet; type a question first"),
                    Some(s) => match engine.apply_navigation(s, &op) {
                        Ok(state) => {
                            writeln!(out, "moved to {} | path {}\n", state.current, state.path.join(" > "))
                                .map_err(write_err)?;
                        }
                        Err(e) => eprintln!("error: {e}"),
                    },
                },
                Err(msg) => eprintln!("error: {msg}"),
            }
            continue;
        }
        let turn = match session.as_mut() {
            None => engine.start_session(line, config.clone()).map(|s| {
                session = Some(s);
                session.as_ref().and_then(|s| s.transcript.last().cloned()).expect("first turn")
            }),
            Some(s) => engine.take_turn(s, line),
        };
        let turn = match turn {
            Ok(t) => t,
            Err(e @ (EngineError::EmptyQuery | EngineError::Navigation(_))) => {
                eprintln!("error: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let s = session.as_ref().expect("session exists after a turn");
        print_turn(out, s.transcript.len(), &turn, s)?;
        if let Some(reason) = s.status.reason {
            writeln!(out, "{}", termination_message(reason)).map_err(write_err)?;
            break;
        }
    }
    Ok(session)
}

/// Replay the citizen turns of each gold dialogue in each mode and save one
/// session snapshot per run to `out_dir`.
pub fn replay_gold(
    engine: &Engine,
    dialogues: &[EudialDialogue],
    modes: &[Mode],
    base: &SessionConfig,
    index: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Data(format!("{}: {e}", p.display()));
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let mut names = Vec::new();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "dialogue\tmode\tturns\tstatus").map_err(write_err)?;
    for gold in dialogues {
        let utterances: Vec<&str> = gold
            .turns
            .iter()
            .filter(|t| t.role == Role::Citizen)
            .map(|t| t.utterance.as_str())
            .collect();
        let Some((first, rest)) = utterances.split_first() else {
            eprintln!("warning: dialogue {} has no citizen turns; skipped", gold.id);
            continue;
        };
        for &mode in modes {
            let config = SessionConfig {
                mode,
                interactive: false,
                ..base.clone()
            };
            let mut session = engine.start_session(first, config)?;
            session.dialogue_id = Some(gold.id.clone());
            for u in rest {
                if !session.is_active() {
                    break;
                }
                engine.take_turn(&mut session, u)?;
            }
            let name = format!("{}.{}.json", sanitize(&gold.id), mode);
            session.save_snapshot(&out_dir.join(&name))?;
            let status = session.status.reason.map_or("active".to_string(), |r| format!("{r:?}"));
            writeln!(out, "{}\t{mode}\t{}\t{status}", gold.id, session.transcript.len()).map_err(write_err)?;
            names.push(name);
        }
    }
    let index = fs::canonicalize(index).unwrap_or_else(|_| index.to_path_buf());
    let manifest = RunsManifest {
        format: RUNS_FORMAT.into(),
        index,
        modes: modes.to_vec(),
        sessions: names,
    };
    let path = out_dir.join(RUNS_MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")
        .map_err(|e| io(&path, e))?;
    eprintln!("wrote {} sessions to {}", manifest.sessions.len(), out_dir.display());
    Ok(())
}

/// Index directory recorded by a replay run.
pub fn manifest_index(runs: &Path) -> Result<PathBuf, CliError> {
    let path = runs.join(RUNS_MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("--index not given and {} unreadable: {e}", path.display())))?;
    let m: RunsManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(m.index)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
