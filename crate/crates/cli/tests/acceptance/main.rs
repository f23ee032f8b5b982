//! Acceptance criteria. Each criterion prints one PASS or FAIL line; the test
//! fails if any criterion fails. Run with `--nocapture` to see the lines.

mod compliance;
mod feedback;
mod gateway;
mod latency;
mod pipeline;
mod validation;

use std::path::PathBuf;
use std::sync::Arc;

use sowgen_core::backends::Backends;
use sowgen_core::clock::SteppingClock;
use sowgen_core::config::AppConfig;
use sowgen_core::ingest::{ingest_documents, read_manifest, IngestInput};
use sowgen_core::orchestrator::{Orchestrator, PipelineConfig};
use sowgen_core::vecstore::ClauseStore;
use sowgen_core::RequirementSpec;

/// Detail on success, reason on failure.
pub type Outcome = Result<String, String>;

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn sample_spec() -> RequirementSpec {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("sample_spec.json")).unwrap()).unwrap()
}

pub fn stub_config() -> PipelineConfig {
    AppConfig::load(fixtures().join("stub.toml")).unwrap().pipeline
}

pub fn corpus_inputs() -> Vec<IngestInput> {
    read_manifest(fixtures().join("manifest.jsonl")).unwrap().iter().map(|e| IngestInput::from_manifest(e).unwrap()).collect()
}

pub fn seeded_store(config: &PipelineConfig) -> ClauseStore {
    let backends = Backends::stub(config.embedding_dim);
    let mut store = ClauseStore::new(config.embedding_dim).with_feedback_alpha(config.feedback_alpha);
    ingest_documents(&corpus_inputs(), &mut store, backends.embedder.as_ref(), &SteppingClock::default(), None).unwrap();
    store
}

pub fn stub_orchestrator(config: &PipelineConfig) -> Orchestrator {
    Orchestrator::new(config.clone(), Backends::stub(config.embedding_dim), Arc::new(SteppingClock::default())).unwrap()
}

type Criterion = (u32, &'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        (1, "end-to-end latency and generation-call bound", latency::criterion),
        (2, "retrieval exactness", retrieval::criterion),
        (3, "compliance detection", compliance::clause_criterion),
        (4, "lint rules", compliance::lint_criterion),
        (5, "validation suite", validation::criterion),
        (6, "ablation ordering", pipeline::ablation_criterion),
        (7, "feedback re-ranking", feedback::criterion),
        (8, "determinism", pipeline::determinism_criterion),
        (9, "gateway contract", gateway::criterion),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(reason) => {
                println!("criterion {n} ({name}): FAIL - {reason}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
