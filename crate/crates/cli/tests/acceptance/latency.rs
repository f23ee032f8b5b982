use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use sowgen_core::backends::{BackendDescriptor, Backends, GenerationRequest, Generator, HttpGenerator, StubGenerator};
use sowgen_core::clock::SteppingClock;
use sowgen_core::orchestrator::Orchestrator;
use sowgen_core::RunStatus;

use crate::{ensure, fixtures, sample_spec, seeded_store, stub_config, Outcome};

#[derive(Clone)]
struct Mock {
    calls: Arc<AtomicUsize>,
    /// Replace the termination clause with text that never satisfies review.
    sabotage: bool,
}

async fn chat(State(mock): State<Mock>, Json(body): Json<Value>) -> Json<Value> {
    mock.calls.fetch_add(1, Ordering::SeqCst);
    let system = body["messages"][0]["content"].as_str().unwrap_or_default();
    let user = body["messages"][1]["content"].as_str().unwrap_or_default();
    let mut text = StubGenerator::new().generate(&GenerationRequest::new(system, user)).unwrap();
    if mock.sabotage {
        let mut draft: Value = serde_json::from_str(&text).unwrap();
        for s in draft["sections"].as_array_mut().unwrap() {
            if s["key"] == "termination" {
                s["body"] = json!("Work proceeds according to the plan.");
            }
        }
        text = draft.to_string();
    }
    Json(json!({"choices": [{"message": {"role": "assistant", "content": text}}]}))
}

/// A chat-completion endpoint on a local port, backed by the stub generator.
struct MockServer {
    url: String,
    calls: Arc<AtomicUsize>,
    _rt: tokio::runtime::Runtime,
}

impl MockServer {
    fn start(sabotage: bool) -> Self {
        let rt = tokio::runtime::Runtime::new().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(Mock { calls: calls.clone(), sabotage });
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self { url: format!("http://{addr}/v1/chat/completions"), calls, _rt: rt }
    }
}

fn sowgen(data_dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sowgen"))
        .arg("--config")
        .arg(fixtures().join("stub.toml"))
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .output()
        .unwrap()
}

pub fn criterion() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixtures().join("manifest.jsonl");
    let ingest = sowgen(dir.path(), &["ingest", manifest.to_str().unwrap()]);
    ensure!(ingest.status.success(), "ingest failed: {}", String::from_utf8_lossy(&ingest.stderr));
    let out = dir.path().join("draft.json");
    let spec = fixtures().join("sample_spec.json");
    let started = Instant::now();
    let draft = sowgen(dir.path(), &["draft", "--input", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--backend", "stub"]);
    let elapsed = started.elapsed();
    ensure!(draft.status.code() == Some(0), "draft exited {:?}: {}", draft.status.code(), String::from_utf8_lossy(&draft.stderr));
    ensure!(elapsed.as_secs_f64() < 5.0, "stub draft took {elapsed:?}");
    let parsed: Result<sowgen_core::SowDraft, _> = serde_json::from_str(&std::fs::read_to_string(&out).unwrap());
    ensure!(parsed.is_ok(), "draft output does not parse");

    let config = stub_config();
    let bound = 1 + config.max_revisions as usize;
    let store = seeded_store(&config);
    let mut counts = Vec::new();
    for sabotage in [false, true] {
        let server = MockServer::start(sabotage);
        let http = HttpGenerator::new(BackendDescriptor::http(&server.url, "mock")).unwrap();
        let backends = Backends { generator: Arc::new(http), ..Backends::stub(config.embedding_dim) };
        let orch = Orchestrator::new(config.clone(), backends, Arc::new(SteppingClock::default())).unwrap();
        let run = orch.run_pipeline(&sample_spec(), "latency", &store);
        let calls = server.calls.load(Ordering::SeqCst);
        ensure!(calls <= bound, "{calls} generation calls exceed 1 + max_revisions = {bound}");
        ensure!(calls == run.generation_calls as usize, "server saw {calls} calls, run recorded {}", run.generation_calls);
        if sabotage {
            ensure!(run.status == RunStatus::Failed && calls == bound, "unsatisfiable run: status {:?}, {calls} calls", run.status);
        } else {
            ensure!(run.status == RunStatus::Complete, "http-backed run did not complete: {:?}", run.failure);
        }
        counts.push(calls);
    }
    Ok(format!(
        "stub draft in {:.0} ms; http calls {} (clean) and {} (never satisfied), bound {bound}",
        elapsed.as_secs_f64() * 1000.0,
        counts[0],
        counts[1]
    ))
}
