//! Subcommand implementations.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lexguide_core::corpus::{
    compute_corpus_stats, fragment_corpus, ingest_documents, parse_documents, read_fragments, write_fragments,
    MIN_FRAGMENT_TOKENS,
};
use lexguide_core::dataset::{build_dataset, compute_dataset_stats, export_eudial, import_eudial, parse_eudial, BuildOptions};
use lexguide_core::engine::{FixedClock, SystemClock};
use lexguide_core::eval::{evaluate_runs, load_runs, report_csv, write_report_json, EvalConfig};
use lexguide_core::navigator::Strategy;
use lexguide_core::providers::{build_chat, build_embedder, ProviderConfig};
use lexguide_core::retrieval::VectorIndex;
use lexguide_core::{Engine, Execution, KnowledgeBase, Mode, SessionConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chat::{replay_gold, run_dialogue};
use crate::config::FileConfig;
use crate::{stdout_err, ChatArgs, Cli, CliError, Command};

pub const INDEX_FILE: &str = "index.json";
pub const FRAGMENTS_FILE: &str = "fragments.jsonl";
pub const INDEX_META_FILE: &str = "meta.json";
const INDEX_FORMAT: &str = "lexguide-index/1";

/// Which embedder produced an index; queries must use the same one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexMeta {
    format: String,
    embedder: ProviderConfig,
    dim: usize,
    n_fragments: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    cfg.apply_overrides(cli.provider, cli.seed);
    match cli.command {
        Command::Ingest {
            input,
            out,
            max_fragment_tokens,
        } => ingest(&input, &out, max_fragment_tokens),
        Command::Index { input, out } => index(&cfg, &input, &out),
        Command::Chat(args) => chat(&cfg, args),
        Command::Serve { index, host, port } => serve(cfg, &index, host, port),
        Command::BuildDataset {
            input,
            out,
            normalize_questions,
        } => build(&cfg, &input, &out, normalize_questions),
        Command::Stats { input } => stats(&input),
        Command::Eval {
            gold,
            transcripts,
            index,
            out,
            csv,
            theta,
            tau_cov,
        } => {
            let mut eval_cfg = EvalConfig::default();
            eval_cfg.theta = theta.unwrap_or(eval_cfg.theta);
            eval_cfg.tau_cov = tau_cov.unwrap_or(eval_cfg.tau_cov);
            eval(&cfg, &gold, &transcripts, index, out.as_deref(), csv.as_deref(), eval_cfg)
        }
    }
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    let mut out = io::stdout().lock();
    writeln!(out, "{text}").map_err(stdout_err)
}

fn ingest(input: &Path, out: &Path, max_tokens: usize) -> Result<(), CliError> {
    if max_tokens < MIN_FRAGMENT_TOKENS {
        return Err(CliError::Usage(format!("--max-fragment-tokens must be at least {MIN_FRAGMENT_TOKENS}")));
    }
    let ingested = ingest_documents(input)?;
    for w in &ingested.warnings {
        let section = w.section.as_deref().map(|s| format!(" section {s:?}")).unwrap_or_default();
        eprintln!("warning: record {} ({}){section}: {}", w.record_index, w.doc_id, w.reason);
    }
    let fragments = fragment_corpus(&ingested.documents, max_tokens)?;
    write_fragments(&fragments, out)?;
    eprintln!("wrote {} fragments to {}", fragments.len(), out.display());
    print_json(&json!({"documents": ingested.documents.len(), "fragments": fragments.len()}))
}

fn index(cfg: &FileConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let fragments = read_fragments(input)?;
    let embedder = build_embedder(&cfg.providers.embedding)?;
    let kb = KnowledgeBase::embed(fragments, embedder.as_ref())?;
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    kb.index().save(&out.join(INDEX_FILE))?;
    write_fragments(kb.fragments(), &out.join(FRAGMENTS_FILE))?;
    let meta = IndexMeta {
        format: INDEX_FORMAT.into(),
        embedder: cfg.providers.embedding.clone(),
        dim: kb.index().dim(),
        n_fragments: kb.len(),
    };
    let meta_path = out.join(INDEX_META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")
        .map_err(|e| CliError::Data(format!("{}: {e}", meta_path.display())))?;
    eprintln!("indexed {} fragments (dim {}) into {}", meta.n_fragments, meta.dim, out.display());
    print_json(&json!({"fragments": meta.n_fragments, "dim": meta.dim}))
}

pub fn load_knowledge_base(cfg: &FileConfig, dir: &Path) -> Result<KnowledgeBase, CliError> {
    let fragments = read_fragments(&dir.join(FRAGMENTS_FILE))?;
    let index = VectorIndex::load(&dir.join(INDEX_FILE))?;
    if let Ok(text) = fs::read_to_string(dir.join(INDEX_META_FILE)) {
        if let Ok(meta) = serde_json::from_str::<IndexMeta>(&text) {
            let (a, b) = (&meta.embedder, &cfg.providers.embedding);
            if (a.kind, &a.model_name, a.seed) != (b.kind, &b.model_name, b.seed) {
                eprintln!("warning: index was embedded with a different embedding provider configuration");
            }
        }
    }
    Ok(KnowledgeBase::new(fragments, index)?)
}

fn build_engine(cfg: &FileConfig, dir: &Path) -> Result<Engine, CliError> {
    let kb = load_knowledge_base(cfg, dir)?;
    let embedder = build_embedder(&cfg.providers.embedding)?;
    let chat = build_chat(&cfg.providers.chat)?;
    let engine = Engine::new(Arc::new(kb), embedder, chat);
    Ok(if cfg.all_stub() {
        engine.with_clock(Arc::new(FixedClock::default()))
    } else {
        engine.with_clock(Arc::new(SystemClock))
    })
}

fn parse_strategy(s: &str) -> Result<Strategy, CliError> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| CliError::Usage(format!("unknown strategy {s:?} (expected bfs, dfs or user-driven)")))
}

fn parse_modes(s: Option<&str>, base: Mode, allow_all: bool) -> Result<Vec<Mode>, CliError> {
    match s {
        None => Ok(vec![base]),
        Some("all") if allow_all => Ok(Mode::ALL.to_vec()),
        Some(m) => Ok(vec![m.parse().map_err(CliError::Usage)?]),
    }
}

fn session_config(cfg: &FileConfig, args: &ChatArgs) -> Result<SessionConfig, CliError> {
    let mut s = cfg.session.clone();
    if let Some(st) = &args.strategy {
        s.strategy = parse_strategy(st)?;
    }
    s.interactive |= args.interactive;
    s.validate()?;
    Ok(s)
}

fn chat(cfg: &FileConfig, args: ChatArgs) -> Result<(), CliError> {
    let base = session_config(cfg, &args)?;
    let modes = parse_modes(args.mode.as_deref(), base.mode, args.gold.is_some())?;
    let engine = build_engine(cfg, &args.index)?;
    if let (Some(gold), Some(out_dir)) = (&args.gold, &args.out_dir) {
        let dialogues = import_eudial(gold)?;
        let limit = args.limit.unwrap_or(dialogues.len());
        return replay_gold(&engine, &dialogues[..limit.min(dialogues.len())], &modes, &base, &args.index, out_dir);
    }
    let config = SessionConfig { mode: modes[0], ..base };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let session = match &args.script {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            run_dialogue(&engine, config, BufReader::new(file), &mut out, false)?
        }
        None => {
            let stdin = io::stdin();
            let prompt = std::io::IsTerminal::is_terminal(&stdin);
            run_dialogue(&engine, config, stdin.lock(), &mut out, prompt)?
        }
    };
    if let (Some(path), Some(session)) = (&args.transcript, &session) {
        lexguide_core::engine::write_transcript(session, path)?;
        eprintln!("wrote {} turns to {}", session.transcript.len(), path.display());
    }
    Ok(())
}

fn serve(mut cfg: FileConfig, index: &Path, host: Option<String>, port: Option<u16>) -> Result<(), CliError> {
    let engine = Arc::new(build_engine(&cfg, index)?);
    let mut service = std::mem::take(&mut cfg.service).with_env_overrides().map_err(CliError::Data)?;
    if let Some(h) = host {
        service.host = h;
    }
    if let Some(p) = port {
        service.port = p;
    }
    cfg.session.validate()?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(format!("runtime: {e}")))?;
    runtime
        .block_on(lexguide_service::serve(engine, cfg.session, service))
        .map_err(|e| CliError::Data(format!("serve: {e}")))
}

fn build(cfg: &FileConfig, input: &Path, out: &Path, normalize_questions: bool) -> Result<(), CliError> {
    let docs = ingest_documents(input)?.documents;
    let chat = build_chat(&cfg.providers.chat)?;
    let dialogues = build_dataset(&docs, chat.as_ref(), BuildOptions { normalize_questions }, Execution::default())?;
    export_eudial(&dialogues, out)?;
    eprintln!("wrote {} dialogues to {}", dialogues.len(), out.display());
    print_json(&compute_dataset_stats(&dialogues)?)
}

fn stats(input: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let qa_err = match parse_documents(&text) {
        Ok(ingested) => {
            let n_fragments = fragment_corpus(&ingested.documents, lexguide_core::corpus::DEFAULT_MAX_FRAGMENT_TOKENS)?.len();
            let stats = compute_corpus_stats(&ingested.documents, n_fragments);
            return print_json(&json!({"kind": "qa-corpus", "stats": stats}));
        }
        Err(e) => e,
    };
    match parse_eudial(&text) {
        Ok(dialogues) => print_json(&json!({"kind": "eudial", "stats": compute_dataset_stats(&dialogues)?})),
        Err(eudial_err) => Err(CliError::Data(format!(
            "{} is neither a QA corpus ({qa_err}) nor an EUDial file ({eudial_err})",
            input.display()
        ))),
    }
}

fn eval(
    cfg: &FileConfig,
    gold: &Path,
    runs: &Path,
    index: Option<PathBuf>,
    out: Option<&Path>,
    csv: Option<&Path>,
    eval_cfg: EvalConfig,
) -> Result<(), CliError> {
    let index = match index {
        Some(i) => i,
        None => crate::chat::manifest_index(runs)?,
    };
    let kb = load_knowledge_base(cfg, &index)?;
    let embedder = build_embedder(&cfg.providers.embedding)?;
    let gold = import_eudial(gold)?;
    let sessions = load_runs(runs)?;
    let report = evaluate_runs(&sessions, &gold, &kb, embedder.as_ref(), eval_cfg, Execution::default())?;
    if !report.config.unmatched_sessions.is_empty() {
        eprintln!("warning: {} sessions matched no gold dialogue", report.config.unmatched_sessions.len());
    }
    if let Some(path) = csv {
        fs::write(path, report_csv(&report)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    match out {
        Some(path) => {
            write_report_json(&report, path)?;
            eprintln!("wrote report for {} dialogues to {}", report.per_dialogue.len(), path.display());
            write!(io::stdout().lock(), "{}", report_csv(&report)).map_err(stdout_err)
        }
        None => print_json(&report),
    }
}
