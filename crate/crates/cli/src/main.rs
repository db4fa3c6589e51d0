//! `lexguide`: corpus preparation, indexing, chat, serving, dataset building,
//! statistics and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.
//! Data goes to stdout, diagnostics to stderr.

mod chat;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lexguide_core::corpus::{CorpusError, DEFAULT_MAX_FRAGMENT_TOKENS};
use lexguide_core::dataset::DatasetError;
use lexguide_core::engine::EngineError;
use lexguide_core::eval::EvalError;
use lexguide_core::providers::{ProviderError, ProviderKind};
use lexguide_core::retrieval::RetrievalError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("provider error: {0}")]
    Provider(String),
    /// The reader of stdout went away; not an error for a pipeline.
    #[error("stdout closed")]
    StdoutClosed,
}

/// Map a failed write to stdout.
pub fn stdout_err(e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        CliError::StdoutClosed
    } else {
        CliError::Data(format!("stdout: {e}"))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::StdoutClosed => 0,
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Config(_) => CliError::Data(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Provider(p) => p.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Provider(p) => p.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Provider(p) => p.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "lexguide", version, about = "Topic-guided proactive dialogue over legal corpora")]
pub struct Cli {
    /// TOML config with [providers.embedding], [providers.chat], [session] and [service] sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the stub providers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Provider kind for both embedding and chat.
    #[arg(long, global = true, value_parser = parse_provider)]
    pub provider: Option<ProviderKind>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a QA-JSON corpus and write its fragments as JSONL.
    Ingest {
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        #[arg(long, value_name = "FRAGMENTS")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_FRAGMENT_TOKENS)]
        max_fragment_tokens: usize,
    },
    /// Embed fragments into an index directory.
    Index {
        #[arg(long = "in", value_name = "FRAGMENTS")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Converse over an index, or replay gold dialogues with --gold.
    Chat(ChatArgs),
    /// Serve the HTTP API over an index.
    Serve {
        #[arg(long, value_name = "DIR")]
        index: PathBuf,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Turn a QA-JSON corpus into multi-turn EUDial dialogues.
    BuildDataset {
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        #[arg(long, value_name = "EUDIAL")]
        out: PathBuf,
        /// Re-infer each question from its text and first section.
        #[arg(long)]
        normalize_questions: bool,
    },
    /// Statistics of a QA-JSON corpus or an EUDial file (detected).
    Stats {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
    },
    /// Score replayed sessions against gold dialogues.
    Eval {
        #[arg(long, value_name = "EUDIAL")]
        gold: PathBuf,
        /// Directory of session snapshots written by `chat --gold`.
        #[arg(long, value_name = "DIR")]
        transcripts: PathBuf,
        /// Index the runs used; defaults to the one recorded in the runs manifest.
        #[arg(long, value_name = "DIR")]
        index: Option<PathBuf>,
        /// Report JSON path; stdout when absent.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Also write per-mode aggregates as CSV.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        tau_cov: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long, value_name = "DIR")]
    pub index: PathBuf,
    /// lexguide, rag-basic, rag-mmr or conv-rag; `all` is accepted with --gold.
    #[arg(long)]
    pub mode: Option<String>,
    /// bfs, dfs or user-driven.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Read utterances from this file instead of stdin; the first line is the query.
    #[arg(long, value_name = "PATH")]
    pub script: Option<PathBuf>,
    /// Write the session transcript as JSONL.
    #[arg(long, value_name = "PATH")]
    pub transcript: Option<PathBuf>,
    /// Ask before rebuilding the topic tree on out-of-scope queries.
    #[arg(long)]
    pub interactive: bool,
    /// Replay the citizen turns of these gold dialogues instead of reading input.
    #[arg(long, value_name = "EUDIAL", requires = "out_dir")]
    pub gold: Option<PathBuf>,
    /// Where replayed session snapshots go.
    #[arg(long, value_name = "DIR", requires = "gold")]
    pub out_dir: Option<PathBuf>,
    /// Replay at most this many gold dialogues.
    #[arg(long)]
    pub limit: Option<usize>,
}

fn parse_provider(s: &str) -> Result<ProviderKind, String> {
    match s {
        "stub" => Ok(ProviderKind::Stub),
        "http" => Ok(ProviderKind::Http),
        _ => Err(format!("unknown provider {s:?} (expected stub or http)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) | Err(CliError::StdoutClosed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `lexguide --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
