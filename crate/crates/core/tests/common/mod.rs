#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use sowgen_core::backends::Backends;
use sowgen_core::clock::SteppingClock;
use sowgen_core::config::AppConfig;
use sowgen_core::draft::RequirementSpec;
use sowgen_core::ingest::{ingest_documents, read_manifest, IngestInput};
use sowgen_core::orchestrator::{Orchestrator, PipelineConfig};
use sowgen_core::vecstore::ClauseStore;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn sample_spec() -> RequirementSpec {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("sample_spec.json")).unwrap()).unwrap()
}

pub fn stub_config() -> PipelineConfig {
    AppConfig::load(fixtures().join("stub.toml")).unwrap().pipeline
}

pub fn seeded_store(config: &PipelineConfig) -> ClauseStore {
    let inputs: Vec<IngestInput> = read_manifest(fixtures().join("manifest.jsonl"))
        .unwrap()
        .iter()
        .map(|e| IngestInput::from_manifest(e).unwrap())
        .collect();
    let backends = Backends::stub(config.embedding_dim);
    let mut store = ClauseStore::new(config.embedding_dim).with_feedback_alpha(config.feedback_alpha);
    ingest_documents(&inputs, &mut store, backends.embedder.as_ref(), &SteppingClock::default(), None).unwrap();
    store
}

pub fn orchestrator(config: PipelineConfig, backends: Backends) -> Orchestrator {
    Orchestrator::new(config, backends, Arc::new(SteppingClock::default())).unwrap()
}
