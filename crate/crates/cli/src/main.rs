//! `sowgen`: ingest a clause corpus, draft and validate Statements of Work,
//! search clauses, run ablations and serve the HTTP API.
//!
//! Exit codes: 0 success, 1 validation failure, 2 transport, internal or
//! usage error.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sowgen_core::backends::BackendKind;
use sowgen_core::ingest::{ingest_documents, read_manifest, IngestError};
use sowgen_core::orchestrator::{ablation_csv, AblationRow};
use sowgen_core::validation::{decide, ValidationAgent};
use sowgen_core::{
    AppConfig, ClauseIndex, ClauseStore, IngestInput, Module, Orchestrator, RequirementSpec, RunStatus, SowDraft,
    Stage, SystemClock, ValidationReport, Verdict,
};
use sowgen_gateway::{AppState, SearchResult};

#[derive(Debug, Parser)]
#[command(name = "sowgen", version, about = "Statement of Work drafting pipeline")]
struct Cli {
    /// TOML configuration file. Without one, built-in defaults and stub backends are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendChoice {
    Stub,
    Http,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest the documents listed in a JSONL manifest into the clause index.
    Ingest { manifest: PathBuf },
    /// Draft a SOW from a requirement spec.
    Draft {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use this backend kind for all three roles.
        #[arg(long, value_enum)]
        backend: Option<BackendChoice>,
        #[arg(long, default_value = "sow-cli")]
        sow_id: String,
        /// Also write the full run (reports and audit trail) as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the rendered Markdown document.
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Validate a draft JSON file and print the report.
    Validate {
        draft: PathBuf,
        /// Requirement spec used for the completeness check.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Search the clause index.
    Search {
        query: String,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        min_score: Option<f64>,
    },
    /// Compare completeness with modules disabled. Prints CSV.
    Ablate {
        #[arg(long, value_delimiter = ',', required = true)]
        disable: Vec<Module>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

/// Failure with the exit code it maps to.
struct Failure(u8);

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("SOWGEN_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Failure(code))) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig> {
    let mut config = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(dir) = &cli.data_dir {
        config.paths.data_dir = Some(dir.clone());
    }
    Ok(config)
}

fn open_store(config: &AppConfig) -> Result<ClauseStore> {
    let index = config.index_path();
    let alpha = config.pipeline.feedback_alpha;
    if index.exists() {
        let store = ClauseStore::load(&index, config.pipeline.embedding_dim)
            .with_context(|| format!("loading {}", index.display()))?;
        Ok(store.with_feedback_alpha(alpha))
    } else {
        Ok(ClauseStore::new(config.pipeline.embedding_dim).with_feedback_alpha(alpha))
    }
}

fn orchestrator(config: &AppConfig) -> Result<Orchestrator> {
    let template = config.template()?;
    let orch = Orchestrator::with_template(config.pipeline.clone(), config.backends()?, Arc::new(SystemClock), template)?;
    Ok(orch.with_lexicon(config.lexicon()?))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) {
    print_out(&format!("{}\n", serde_json::to_string_pretty(value).expect("value serializes")));
}

/// Write to stdout, stopping quietly if the reader has gone away.
fn print_out(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn run(cli: Cli) -> Result<Option<Failure>> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { manifest } => {
            let entries = match read_manifest(&manifest) {
                Ok(e) => e,
                Err(e @ (IngestError::Manifest { .. } | IngestError::DuplicateDocId(_))) => {
                    eprintln!("invalid manifest: {e}");
                    return Ok(Some(Failure(1)));
                }
                Err(e) => return Err(e.into()),
            };
            let inputs = entries.iter().map(IngestInput::from_manifest).collect::<Result<Vec<_>, _>>()?;
            let backends = config.backends()?;
            let mut store = open_store(&config)?;
            let sidecars = config.data_dir().join("maps");
            let summary =
                ingest_documents(&inputs, &mut store, backends.embedder.as_ref(), &SystemClock, Some(&sidecars))?;
            let index = config.index_path();
            store.save(&index).with_context(|| format!("saving {}", index.display()))?;
            print_json(&summary);
            Ok(None)
        }
        Command::Draft { input, out, backend, sow_id, report, markdown } => {
            if let Some(choice) = backend {
                let kind = match choice {
                    BackendChoice::Stub => BackendKind::Stub,
                    BackendChoice::Http => BackendKind::Http,
                };
                for roles in [&mut config.backends, &mut config.pipeline.backends] {
                    for d in [&mut roles.generation, &mut roles.classification, &mut roles.embedding] {
                        d.kind = kind;
                    }
                }
                config.pipeline.validate()?;
            }
            let spec: RequirementSpec = read_json(&input)?;
            let orch = orchestrator(&config)?;
            let store = open_store(&config)?;
            let run = orch.run_pipeline(&spec, &sow_id, &store);
            if let Some(path) = &report {
                write_file(path, &serde_json::to_string_pretty(&run)?)?;
            }
            let summary = serde_json::json!({
                "sow_id": run.sow_id,
                "status": run.status,
                "verdict": run.verdict(),
                "iteration": run.iteration,
                "generation_calls": run.generation_calls,
                "stages": run.audit.stages(),
                "failure": run.failure,
            });
            print_json(&summary);
            match (&run.status, &run.draft) {
                (RunStatus::Complete, Some(draft)) => {
                    write_file(&out, &draft.to_json())?;
                    if let (Some(path), Some(doc)) = (&markdown, &run.rendered) {
                        write_file(path, &doc.content)?;
                    }
                    Ok(None)
                }
                _ => {
                    let stage = run.failure.as_ref().map(|f| f.stage);
                    let code = match stage {
                        Some(Stage::ValidateInput | Stage::FormatValidate) => 1,
                        _ => 2,
                    };
                    if let Some(f) = &run.failure {
                        eprintln!("pipeline failed at {}: {}", f.stage, f.message);
                    }
                    Ok(Some(Failure(code)))
                }
            }
        }
        Command::Validate { draft, spec } => {
            let text = std::fs::read_to_string(&draft).with_context(|| format!("reading {}", draft.display()))?;
            let parsed = match sowgen_core::draft::parse_model_output(&text) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("{}: not a valid draft: {e}", draft.display());
                    return Ok(Some(Failure(1)));
                }
            };
            let spec: RequirementSpec = match spec {
                Some(path) => read_json(&path)?,
                None => RequirementSpec::default(),
            };
            let report = validate_draft(&config, &parsed, &spec)?;
            print_json(&report);
            Ok((report.verdict == Verdict::Reject).then_some(Failure(1)))
        }
        Command::Search { query, k, min_score } => {
            if query.trim().is_empty() {
                eprintln!("query must not be empty");
                return Ok(Some(Failure(1)));
            }
            let params = config.pipeline.retrieval_params();
            let backends = config.backends()?;
            let store = open_store(&config)?;
            let q = backends.embedder.embed_one(&query)?;
            let hits = store.search_records(&q, k.unwrap_or(params.k), min_score.unwrap_or(params.min_score))?;
            let results: Vec<SearchResult> = hits
                .into_iter()
                .map(|(h, r)| SearchResult {
                    clause_id: h.clause_id,
                    text: r.text,
                    raw_score: h.raw_score,
                    adjusted_score: h.adjusted_score,
                })
                .collect();
            print_json(&results);
            Ok(None)
        }
        Command::Ablate { disable, input, out } => {
            let spec: RequirementSpec = read_json(&input)?;
            if let Err(errors) = sowgen_core::draft::validate_input(&spec) {
                print_json(&errors);
                return Ok(Some(Failure(1)));
            }
            let store = open_store(&config)?;
            let listed: BTreeSet<Module> = disable.into_iter().collect();
            let mut sets: Vec<BTreeSet<Module>> = vec![BTreeSet::new()];
            sets.extend(listed.iter().map(|m| BTreeSet::from([*m])));
            if listed.len() > 1 {
                sets.push(listed.clone());
            }
            let mut rows = Vec::new();
            for (n, set) in sets.iter().enumerate() {
                // Fresh orchestrator per run so every run sees the same clock readings.
                let orch = orchestrator(&config)?;
                let run_id = format!("ablation-{n}");
                let result = orch.ablation_run(&spec, &run_id, &store, set)?;
                rows.push(AblationRow::new(run_id, set, &result));
            }
            let csv = ablation_csv(&rows);
            match out {
                Some(path) => write_file(&path, &csv)?,
                None => print_out(&csv),
            }
            Ok(None)
        }
        Command::Serve { port, host } => {
            let state = Arc::new(AppState::from_config(&config)?);
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            eprintln!("listening on http://{addr}");
            rt.block_on(sowgen_gateway::serve(state, addr)).with_context(|| format!("serving on {addr}"))?;
            Ok(None)
        }
    }
}

fn validate_draft(config: &AppConfig, draft: &SowDraft, spec: &RequirementSpec) -> Result<ValidationReport> {
    let backends = config.backends()?;
    let agent = ValidationAgent {
        required_keys: config.pipeline.required_keys.clone(),
        completeness_threshold: config.pipeline.completeness_min,
        expected_dim: config.pipeline.embedding_dim,
    };
    let issues = agent.validate(draft, spec, backends.embedder.as_ref())?;
    let verdict = decide(None, &issues, 1, 1).verdict();
    Ok(ValidationReport { issues, fixes_applied: Vec::new(), verdict })
}

