use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use expertrank_core::corpus::{self, Section, StopWordSet};
use expertrank_core::feedback::EvaluationRequest;
use expertrank_core::metrics::{export_report, PositionDelta, SessionReport};
use expertrank_core::ranker::{RankError, RetrievalMode, SectionFlags};
use expertrank_core::{Engine, EngineError, SearchOutcome, Settings};
use expertrank_service::ApiConfig;
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "expertrank",
    version,
    about = "Search engine tuned by expert relevance feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus (JSON Lines file or directory) into a new store
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        /// JSON file with section weights, alpha, users and retrieval mode
        #[arg(long)]
        settings: Option<PathBuf>,
        /// Replace an existing store, discarding its logs and learned weights
        #[arg(long)]
        force: bool,
    },
    /// Run a query against the store and log it
    Search {
        #[arg(long)]
        store: PathBuf,
        query: String,
        /// Comma-separated subset of folder,name,body
        #[arg(long, default_value = "folder,name,body")]
        sections: String,
        #[arg(long)]
        mode: Option<RetrievalMode>,
        #[arg(long, default_value = "cli")]
        user: String,
    },
    /// Replay a JSON Lines script of searches and evaluations
    Simulate {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        script: PathBuf,
        /// Abort on the first rejected row instead of continuing
        #[arg(long)]
        strict: bool,
    },
    /// Write the per-evaluation position-change CSV
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API
    Serve {
        /// JSON configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
}

/// Exit code 1: I/O or configuration problems. Exit code 2: query problems.
enum Failure {
    Io(anyhow::Error),
    Query(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest {
            corpus,
            stopwords,
            store,
            settings,
            force,
        } => ingest(
            &corpus,
            stopwords.as_deref(),
            &store,
            settings.as_deref(),
            force,
        ),
        Command::Search {
            store,
            query,
            sections,
            mode,
            user,
        } => search(&store, &query, &sections, mode, &user),
        Command::Simulate {
            store,
            script,
            strict,
        } => simulate(&store, &script, strict),
        Command::Report { store, out } => report(&store, &out),
        Command::Serve {
            config,
            store,
            corpus,
            stopwords,
            listen,
        } => serve(config, store, corpus, stopwords, listen),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Query(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// Joins the error chain, skipping causes already spelled out by an outer
/// message.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn ingest(
    corpus_path: &Path,
    stopwords: Option<&Path>,
    store: &Path,
    settings: Option<&Path>,
    force: bool,
) -> Result<(), Failure> {
    let corpus = corpus::ingest(corpus_path)?;
    let stopwords = match stopwords {
        Some(p) => StopWordSet::load(p)?,
        None => StopWordSet::new(),
    };
    let settings: Settings = match settings {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| p.display().to_string())?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("{}: invalid settings", p.display()))?
        }
        None => Settings::default(),
    };
    if force && Engine::is_initialized(store) {
        for file in [
            "corpus.jsonl",
            "stopwords.txt",
            "settings.json",
            "vocabulary.tsv",
            "queries.jsonl",
            "evaluations.jsonl",
        ] {
            let path = store.join(file);
            if path.exists() {
                fs::remove_file(&path).with_context(|| path.display().to_string())?;
            }
        }
    }
    let (documents, tokens) = (corpus.len(), corpus.token_count());
    Engine::init(store, corpus, stopwords, settings)?;
    println!("{documents} documents, {tokens} tokens");
    Ok(())
}

fn parse_sections(list: &str) -> Result<SectionFlags, Failure> {
    let mut flags = SectionFlags::none();
    for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let section: Section = part
            .parse()
            .map_err(|e: String| Failure::Query(anyhow!(e)))?;
        flags.set(section, true);
    }
    if !flags.any() {
        return Err(Failure::Query(anyhow!(
            "at least one of folder,name,body must be enabled"
        )));
    }
    Ok(flags)
}

fn query_failure(e: EngineError) -> Failure {
    match e {
        EngineError::Rank(RankError::EmptyQuery | RankError::NoSectionsEnabled) => {
            Failure::Query(e.into())
        }
        other => Failure::Io(other.into()),
    }
}

fn search(
    store: &Path,
    query: &str,
    sections: &str,
    mode: Option<RetrievalMode>,
    user: &str,
) -> Result<(), Failure> {
    let flags = parse_sections(sections)?;
    let engine = Engine::open(store)?;
    let out = engine
        .search(query, flags, mode, user)
        .map_err(query_failure)?;
    print_results(&engine, &out);
    Ok(())
}

fn print_results(engine: &Engine, out: &SearchOutcome) {
    let eligibility = if out.eligible_for_evaluation {
        "evaluation eligible"
    } else {
        "single-word query, not evaluable"
    };
    println!(
        "# query {} ({eligibility}), {} results",
        out.query_id,
        out.results.len()
    );
    for r in &out.results {
        let name = engine
            .document(r.doc_id)
            .map(|d| d.doc_name.as_str())
            .unwrap_or("");
        println!("{}\t{}\t{}\t{}", r.position, r.doc_id, r.score, name);
    }
}

#[derive(Debug, Default, Deserialize)]
struct ScriptSections {
    folder: Option<bool>,
    name: Option<bool>,
    body: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
enum Action {
    Search {
        q: String,
        #[serde(default)]
        sections: ScriptSections,
        #[serde(default = "default_user")]
        user: String,
        label: String,
        #[serde(default)]
        mode: Option<RetrievalMode>,
    },
    Evaluate {
        label: String,
        position: usize,
        #[serde(default = "default_user")]
        user: String,
    },
}

fn default_user() -> String {
    "simulated".to_string()
}

fn simulate(store: &Path, script: &Path, strict: bool) -> Result<(), Failure> {
    let engine = Engine::open(store)?;
    let file = fs::File::open(script).with_context(|| script.display().to_string())?;
    let mut actions = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| script.display().to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let action: Action = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", script.display(), i + 1))?;
        actions.push((i + 1, action));
    }

    let mut searches: HashMap<String, SearchOutcome> = HashMap::new();
    let mut deltas = Vec::new();
    for (line, action) in actions {
        let row: Result<(), String> = match action {
            Action::Search {
                q,
                sections,
                user,
                label,
                mode,
            } => {
                let flags = SectionFlags {
                    folder: sections.folder.unwrap_or(true),
                    name: sections.name.unwrap_or(true),
                    body: sections.body.unwrap_or(true),
                };
                match engine.search(&q, flags, mode, &user) {
                    Ok(out) => {
                        println!(
                            "search {label}: query {} with {} results{}",
                            out.query_id,
                            out.results.len(),
                            if out.eligible_for_evaluation {
                                ""
                            } else {
                                " (not evaluable)"
                            }
                        );
                        searches.insert(label, out);
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::Evaluate {
                label,
                position,
                user,
            } => match searches.get(&label) {
                None => Err(format!("no search labelled '{label}'")),
                Some(out) => {
                    let doc_id = position
                        .checked_sub(1)
                        .and_then(|i| out.results.get(i))
                        .map(|r| r.doc_id);
                    match doc_id {
                        None => Err(format!(
                            "search '{label}' has no result at position {position}"
                        )),
                        Some(doc_id) => {
                            let req = EvaluationRequest {
                                query_id: out.query_id,
                                doc_id,
                                position,
                                user_id: user,
                            };
                            match engine.evaluate(&req) {
                                Ok(rec) => {
                                    println!(
                                        "evaluate {label}: evaluation {} doc {} p_before={} p_after={} delta={}",
                                        rec.evaluation_id, rec.doc_id, rec.p_before, rec.p_after, rec.delta
                                    );
                                    deltas.push(PositionDelta::from(&rec));
                                    Ok(())
                                }
                                Err(e) => Err(e.to_string()),
                            }
                        }
                    }
                }
            },
        };
        if let Err(msg) = row {
            println!("rejected line {line}: {msg}");
            if strict {
                return Err(Failure::Query(anyhow!("line {line}: {msg}")));
            }
        }
    }

    let report = SessionReport::from_deltas(deltas);
    println!(
        "total_delta={} count={} mean_improvement={}",
        report.total, report.count, report.mean_improvement
    );
    Ok(())
}

fn report(store: &Path, out: &Path) -> Result<(), Failure> {
    let engine = Engine::open(store)?;
    let records = engine.evaluations();
    export_report(&records, out)?;
    let report = engine.report();
    println!(
        "{} rows written to {}; total_delta={} mean_improvement={}",
        records.len(),
        out.display(),
        report.total,
        report.mean_improvement
    );
    Ok(())
}

fn serve(
    config: Option<PathBuf>,
    store: Option<PathBuf>,
    corpus: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    listen: Option<String>,
) -> Result<(), Failure> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let mut config = match config {
        Some(path) => ApiConfig::load(&path)?,
        None => ApiConfig::default(),
    };
    if store.is_some() {
        config.store = store;
    }
    if corpus.is_some() {
        config.corpus = corpus;
    }
    if stopwords.is_some() {
        config.stopwords = stopwords;
    }
    if let Some(listen) = listen {
        config.listen = listen;
    }
    let config = config.with_env();
    let engine = Arc::new(expertrank_service::build_engine(&config)?);
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime
        .block_on(expertrank_service::serve(&config, engine))
        .with_context(|| format!("serving on {}", config.listen))?;
    Ok(())
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Io(e.into())
    }
}

impl From<corpus::CorpusError> for Failure {
    fn from(e: corpus::CorpusError) -> Self {
        Failure::Io(e.into())
    }
}

impl From<expertrank_core::metrics::ReportError> for Failure {
    fn from(e: expertrank_core::metrics::ReportError) -> Self {
        Failure::Io(e.into())
    }
}

impl From<expertrank_service::ConfigError> for Failure {
    fn from(e: expertrank_service::ConfigError) -> Self {
        Failure::Io(e.into())
    }
}
