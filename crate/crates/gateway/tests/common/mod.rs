#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use sowgen_core::backends::Backends;
use sowgen_core::clock::SteppingClock;
use sowgen_core::config::AppConfig;
use sowgen_core::orchestrator::{Orchestrator, PipelineConfig};
use sowgen_core::vecstore::ClauseStore;
use sowgen_gateway::{router, AppState};
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn stub_config() -> PipelineConfig {
    AppConfig::load(fixtures().join("stub.toml")).unwrap().pipeline
}

pub fn sample_spec() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("sample_spec.json")).unwrap()).unwrap()
}

pub fn index_path(dir: &Path) -> PathBuf {
    dir.join("clauses.jsonl")
}

/// Service state over `dir`, loading the index there when it exists.
pub fn state_with(dir: &Path, backends: Backends) -> Arc<AppState> {
    let config = stub_config();
    let orchestrator = Orchestrator::new(config.clone(), backends, Arc::new(SteppingClock::default())).unwrap();
    let index = index_path(dir);
    let store = if index.exists() {
        ClauseStore::load(&index, config.embedding_dim).unwrap().with_feedback_alpha(config.feedback_alpha)
    } else {
        ClauseStore::new(config.embedding_dim).with_feedback_alpha(config.feedback_alpha)
    };
    Arc::new(AppState::new(orchestrator, store, dir, index).unwrap())
}

pub fn stub_state(dir: &Path) -> Arc<AppState> {
    state_with(dir, Backends::stub(stub_config().embedding_dim))
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("body is not JSON ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    /// Assert this is an error reply carrying exactly one ApiError.
    pub fn api_error(&self, status: StatusCode, code: &str) -> Value {
        assert_eq!(self.status, status, "body: {}", String::from_utf8_lossy(&self.body));
        let v = self.json();
        let obj = v.as_object().expect("error body is an object");
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["code", "field_errors", "message"]);
        assert_eq!(v["code"], code);
        assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
        assert!(v["field_errors"].is_array());
        v
    }
}

pub async fn send(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_raw(app: &Router, uri: &str, content_type: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header("content-type", content_type)
        .body(body.into())
        .unwrap();
    send(app, req).await
}

pub async fn post_json(app: &Router, uri: &str, body: &Value) -> Reply {
    post_raw(app, uri, "application/json", serde_json::to_vec(body).unwrap()).await
}

pub fn app(state: &Arc<AppState>) -> Router {
    router(state.clone())
}

pub fn manifest_paths() -> Value {
    serde_json::json!({ "manifest": fixtures().join("manifest.jsonl") })
}

/// Poll a SOW until it leaves `processing`.
pub async fn wait_done(app: &Router, sow_id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let r = get(app, &format!("/api/v1/sow/{sow_id}")).await;
        assert_eq!(r.status, StatusCode::OK);
        let v = r.json();
        if v["status"] != "processing" {
            return v;
        }
        assert!(Instant::now() < deadline, "run {sow_id} still processing");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

pub fn search_uri(q: &str, k: usize, min_score: f64) -> String {
    let q: String = q
        .bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect();
    format!("/api/v1/clauses/search?q={q}&k={k}&min_score={min_score}")
}
