use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sowgen_core::backends::Backends;
use sowgen_core::clock::SteppingClock;
use sowgen_core::orchestrator::{Orchestrator, PipelineConfig};
use sowgen_core::vecstore::{ClauseIndex, ClauseStore};
use sowgen_gateway::{router, AppState};
use tower::ServiceExt;

use crate::{fixtures, stub_config, Outcome};

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }

    /// Status matches and the body is exactly one ApiError with this code.
    pub fn is_error(&self, status: StatusCode, code: &str) -> bool {
        let v = self.json();
        let keys: Vec<&String> = v.as_object().map(|o| o.keys().collect()).unwrap_or_default();
        self.status == status
            && keys.len() == 3
            && v["code"] == code
            && v["message"].is_string()
            && v["field_errors"].is_array()
    }
}

pub async fn call(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post(app: &Router, uri: &str, body: impl Into<Body>) -> Reply {
    call(app, Request::post(uri).header("content-type", "application/json").body(body.into()).unwrap()).await
}

pub async fn post_json(app: &Router, uri: &str, body: &Value) -> Reply {
    post(app, uri, body.to_string()).await
}

pub fn encode(q: &str) -> String {
    q.bytes()
        .map(|b| if b.is_ascii_alphanumeric() { (b as char).to_string() } else { format!("%{b:02X}") })
        .collect()
}

pub async fn wait_done(app: &Router, sow_id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let v = get(app, &format!("/api/v1/sow/{sow_id}")).await.json();
        if v["status"] != "processing" || Instant::now() > deadline {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

pub fn state(dir: &Path, config: PipelineConfig, backends: Backends) -> Arc<AppState> {
    let store = ClauseStore::new(config.embedding_dim).with_feedback_alpha(config.feedback_alpha);
    let orch = Orchestrator::new(config, backends, Arc::new(SteppingClock::default())).unwrap();
    Arc::new(AppState::new(orch, store, dir, dir.join("clauses.jsonl")).unwrap())
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

pub fn criterion() -> Outcome {
    runtime().block_on(contract())
}

async fn contract() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = stub_config();
    let st = state(dir.path(), config.clone(), Backends::stub(config.embedding_dim));
    let app = router(st.clone());
    let mut checks = 0;
    let mut pass = |ok: bool, what: &str| -> Result<(), String> {
        checks += 1;
        if ok { Ok(()) } else { Err(format!("failed: {what}")) }
    };

    let r = get(&app, "/healthz").await;
    pass(r.status == StatusCode::OK && r.body == b"ok", "GET /healthz -> 200 ok")?;

    // Ingestion.
    let manifest = json!({"manifest": fixtures().join("manifest.jsonl")});
    let r = post_json(&app, "/api/v1/corpus/ingest", &manifest).await;
    pass(r.status == StatusCode::OK && r.json() == json!({"documents": 2, "sections": 17, "clauses": 17}), "ingest fixture -> {2, 17, 17}")?;
    let before = st.store.len();
    let r = post_json(&app, "/api/v1/corpus/ingest", &manifest).await;
    pass(r.status == StatusCode::OK && st.store.len() == before, "re-ingest keeps clause count")?;
    pass(post(&app, "/api/v1/corpus/ingest", "").await.is_error(StatusCode::BAD_REQUEST, "EMPTY_UPLOAD"), "empty upload -> 400")?;

    // Drafting.
    let spec: Value = serde_json::from_str(&std::fs::read_to_string(fixtures().join("sample_spec.json")).unwrap()).unwrap();
    let r = post_json(&app, "/api/v1/sow", &spec).await;
    let sow_id = r.json()["sow_id"].as_str().unwrap_or_default().to_string();
    pass(r.status == StatusCode::ACCEPTED && !sow_id.is_empty(), "valid spec -> 202 with sow_id")?;
    let mut no_title = spec.clone();
    no_title.as_object_mut().unwrap().remove("project_title");
    let r = post_json(&app, "/api/v1/sow", &no_title).await;
    let fields: Vec<Value> = r.json()["field_errors"].as_array().cloned().unwrap_or_default();
    pass(
        r.is_error(StatusCode::BAD_REQUEST, "VALIDATION_FAILED") && fields.iter().any(|f| f["field"] == "project_title"),
        "missing project_title -> 400 with field error",
    )?;
    pass(post(&app, "/api/v1/sow", "{\"project_title\"").await.is_error(StatusCode::BAD_REQUEST, "MALFORMED_BODY"), "malformed JSON -> 400 MALFORMED_BODY")?;

    let done = wait_done(&app, &sow_id).await;
    pass(
        done["status"] == "complete" && done["draft"].is_object() && done["compliance"].is_object() && done["validation"].is_object(),
        "known complete id -> 200 with draft and both reports",
    )?;
    pass(get(&app, "/api/v1/sow/does-not-exist").await.is_error(StatusCode::NOT_FOUND, "UNKNOWN_SOW"), "unknown id -> 404")?;

    let fdir = tempfile::tempdir().unwrap();
    let failing = Backends {
        generator: Arc::new(sowgen_core::backends::ScriptedGenerator::new(vec!["{}".into()])),
        ..Backends::stub(config.embedding_dim)
    };
    let fapp = router(state(fdir.path(), config.clone(), failing));
    let fid = post_json(&fapp, "/api/v1/sow", &spec).await.json()["sow_id"].as_str().unwrap().to_string();
    let failed = wait_done(&fapp, &fid).await;
    let last_two: Vec<&str> = failed["audit"].as_array().unwrap().iter().rev().take(2).map(|e| e["stage"].as_str().unwrap()).collect();
    pass(
        failed["status"] == "failed" && failed.get("draft").is_none() && last_two == ["Failed", "Draft"],
        "failed run -> 200 failed with the failing stage in the audit",
    )?;

    // Search.
    let text = st.store.get("alpha-analytics#7").unwrap().text;
    let hits = get(&app, &format!("/api/v1/clauses/search?q={}&k=3&min_score=0", encode(&text))).await.json();
    pass(hits[0]["clause_id"] == "alpha-analytics#7", "verbatim clause text ranks that clause first")?;
    let zero = get(&app, &format!("/api/v1/clauses/search?q={}&k=0", encode(&text))).await;
    pass(zero.status == StatusCode::OK && zero.json() == json!([]), "k=0 -> empty list")?;
    let q = "termination notice and payment";
    let got: Vec<String> = get(&app, &format!("/api/v1/clauses/search?q={}&k=17&min_score=-1", encode(q)))
        .await
        .json()
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["clause_id"].as_str().unwrap().to_string())
        .collect();
    pass(got == oracle_order(&st, q), "search order equals brute-force oracle")?;
    pass(get(&app, "/api/v1/clauses/search?q=").await.is_error(StatusCode::BAD_REQUEST, "INVALID_QUERY"), "empty q -> 400")?;

    // Feedback.
    let draft = &done["draft"];
    let section = draft["sections"].as_array().unwrap().iter().find(|s| !s["provenance"].as_array().unwrap().is_empty()).unwrap();
    let section_id = section["id"].as_str().unwrap();
    let target = section["provenance"][0].as_str().unwrap().to_string();
    let target_text = st.store.get(&target).unwrap().text;
    let find = |v: Value| v.as_array().unwrap().iter().find(|h| h["clause_id"] == target.as_str()).cloned().unwrap();
    let search_uri = format!("/api/v1/clauses/search?q={}&k=17&min_score=-1", encode(&target_text));
    let raw = find(get(&app, &search_uri).await.json())["raw_score"].as_f64().unwrap();
    let uri = format!("/api/v1/sow/{sow_id}/feedback");
    let r = post_json(&app, &uri, &json!({"section_id": section_id, "rating": 1})).await;
    let adjusted = find(get(&app, &search_uri).await.json())["adjusted_score"].as_f64().unwrap();
    pass(r.status == StatusCode::NO_CONTENT && (adjusted - raw * 1.1).abs() < 1e-12, "+1 feedback -> 204 and adjusted = 1.1 x raw")?;
    pass(post_json(&app, &uri, &json!({"rating": 2})).await.is_error(StatusCode::BAD_REQUEST, "INVALID_RATING"), "rating 2 -> 400")?;
    pass(
        post_json(&app, &uri, &json!({"section_id": "nope", "rating": 1})).await.is_error(StatusCode::BAD_REQUEST, "UNKNOWN_SECTION"),
        "unknown section -> 400 UNKNOWN_SECTION",
    )?;
    pass(
        post_json(&app, "/api/v1/sow/nope/feedback", &json!({"rating": 1})).await.is_error(StatusCode::NOT_FOUND, "UNKNOWN_SOW"),
        "feedback on unknown sow -> 404",
    )?;

    // GET is safe.
    let checksum = st.store.read().checksum();
    for uri in ["/healthz".to_string(), format!("/api/v1/sow/{sow_id}"), search_uri.clone()] {
        get(&app, &uri).await;
    }
    pass(st.store.read().checksum() == checksum, "GETs leave the store checksum unchanged")?;

    // Restart on the same index reproduces search.
    let reopened = {
        let store = ClauseStore::load(dir.path().join("clauses.jsonl"), config.embedding_dim).unwrap();
        let orch = Orchestrator::new(config.clone(), Backends::stub(config.embedding_dim), Arc::new(SteppingClock::default())).unwrap();
        router(Arc::new(AppState::new(orch, store.with_feedback_alpha(config.feedback_alpha), dir.path(), dir.path().join("clauses.jsonl")).unwrap()))
    };
    pass(get(&reopened, &search_uri).await.body == get(&app, &search_uri).await.body, "restart reproduces search results")?;
    pass(get(&reopened, &format!("/api/v1/sow/{sow_id}")).await.json() == get(&app, &format!("/api/v1/sow/{sow_id}")).await.json(), "restart keeps the run registry")?;

    Ok(format!("{checks} endpoint examples pass"))
}

fn oracle_order(st: &AppState, q: &str) -> Vec<String> {
    use sowgen_core::Embedder;
    let config = stub_config();
    let e = sowgen_core::backends::HashEmbedder::new(config.embedding_dim);
    let qv = e.embed_one(q).unwrap();
    let store = st.store.read();
    let mut scored: Vec<(String, f64)> = store
        .records()
        .map(|r| {
            let raw = sowgen_core::vecstore::cosine(&qv, &r.embedding).unwrap();
            (r.clause_id.clone(), raw * (1.0 + config.feedback_alpha * r.feedback_avg))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().map(|s| s.0).collect()
}
