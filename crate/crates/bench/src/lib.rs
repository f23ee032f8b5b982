//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sowgen_core::backends::Backends;
use sowgen_core::clock::{Clock, SteppingClock};
use sowgen_core::config::AppConfig;
use sowgen_core::ingest::{ingest_documents, read_manifest, IngestInput};
use sowgen_core::orchestrator::PipelineConfig;
use sowgen_core::vecstore::{ClauseRecord, ClauseStore, Embedding};
use sowgen_core::RequirementSpec;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    Embedding::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite, non-empty")
}

/// `n` uniformly random clauses of dimension `dim`, plus the generator for
/// drawing queries from the same stream.
pub fn random_store(n: usize, dim: usize, seed: u64) -> (ClauseStore, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clock = SteppingClock::default();
    let mut store = ClauseStore::new(dim);
    for i in 0..n {
        store
            .upsert(ClauseRecord {
                clause_id: format!("c{i:06}"),
                text: String::new(),
                canonical_key: None,
                source_doc_id: "bench".into(),
                embedding: random_vector(&mut rng, dim),
                feedback_avg: 0.0,
                created_at: clock.now(),
            })
            .expect("dimension matches");
    }
    (store, rng)
}

pub fn stub_config() -> PipelineConfig {
    AppConfig::load(fixtures().join("stub.toml")).expect("fixture config").pipeline
}

pub fn sample_spec() -> RequirementSpec {
    let text = std::fs::read_to_string(fixtures().join("sample_spec.json")).expect("fixture spec");
    serde_json::from_str(&text).expect("fixture spec parses")
}

pub fn corpus() -> Vec<IngestInput> {
    read_manifest(fixtures().join("manifest.jsonl"))
        .expect("fixture manifest")
        .iter()
        .map(|e| IngestInput::from_manifest(e).expect("fixture document"))
        .collect()
}

pub fn seeded_store(config: &PipelineConfig) -> ClauseStore {
    let backends = Backends::stub(config.embedding_dim);
    let mut store = ClauseStore::new(config.embedding_dim).with_feedback_alpha(config.feedback_alpha);
    ingest_documents(&corpus(), &mut store, backends.embedder.as_ref(), &SteppingClock::default(), None)
        .expect("fixture ingests");
    store
}
