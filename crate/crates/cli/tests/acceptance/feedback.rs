use std::sync::Arc;

use axum::Router;
use serde_json::json;
use sowgen_core::backends::{BackendError, Backends};
use sowgen_core::vecstore::Embedding;
use sowgen_core::Embedder;
use sowgen_gateway::router;

use crate::gateway::{get, post_json, runtime, state, wait_done};
use crate::{ensure, sample_spec, stub_config, Outcome};

const CONFIDENTIALITY: &str =
    "Each party keeps confidential all proprietary information and will not disclose it under this non-disclosure clause.";
const LIABILITY: &str =
    "Neither party is liable for indirect damages, each party will indemnify the other, and total liability is capped.";
const TERMINATION: &str = "Either party may terminate for material breach on thirty days written notice; termination ends open orders.";

/// Three-dimensional embeddings chosen so the query scores 0.80 against the
/// confidentiality clause and 0.85 against the liability clause.
struct TableEmbedder;

impl TableEmbedder {
    fn vector(text: &str) -> Vec<f64> {
        let t = text.to_lowercase();
        if t.contains("confidential") {
            vec![0.80, 0.60, 0.0]
        } else if t.contains("liab") {
            vec![0.85, (1.0f64 - 0.85 * 0.85).sqrt(), 0.0]
        } else if t.contains("terminat") {
            vec![0.50, 0.0, 0.75f64.sqrt()]
        } else {
            vec![1.0, 0.0, 0.0]
        }
    }
}

impl Embedder for TableEmbedder {
    fn dim(&self) -> usize {
        3
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError> {
        Ok(texts.iter().map(|t| Embedding::new(Self::vector(t)).unwrap()).collect())
    }
}

struct Scores {
    order: Vec<String>,
    conf: (f64, f64),
    liab: (f64, f64),
}

async fn scores(app: &Router) -> Scores {
    let hits = get(app, "/api/v1/clauses/search?q=warehouse%20analytics&k=10&min_score=0").await.json();
    let hits = hits.as_array().unwrap();
    let pick = |id: &str| {
        let h = hits.iter().find(|h| h["clause_id"] == id).unwrap();
        (h["raw_score"].as_f64().unwrap(), h["adjusted_score"].as_f64().unwrap())
    };
    Scores {
        order: hits.iter().map(|h| h["clause_id"].as_str().unwrap().to_string()).collect(),
        conf: pick("legal#0"),
        liab: pick("legal#1"),
    }
}

/// A fresh service with the three legal clauses ingested and one completed
/// draft. Returns the app, the draft id, and the sections citing each clause.
async fn setup(dir: &std::path::Path) -> Result<(Router, String, String, String), String> {
    let mut config = stub_config();
    config.embedding_dim = 3;
    let backends = Backends { embedder: Arc::new(TableEmbedder), ..Backends::stub(3) };
    let app = router(state(dir, config, backends));
    let doc = format!("1. Confidentiality\n{CONFIDENTIALITY}\n\n2. Limitation of Liability\n{LIABILITY}\n\n3. Termination\n{TERMINATION}\n");
    let r = post_json(&app, "/api/v1/corpus/ingest", &json!({"documents": [{"doc_id": "legal", "text": doc}]})).await;
    ensure!(r.json()["clauses"] == 3, "ingest: {}", String::from_utf8_lossy(&r.body));
    let spec = serde_json::to_value(sample_spec()).unwrap();
    let sow_id = post_json(&app, "/api/v1/sow", &spec).await.json()["sow_id"].as_str().unwrap().to_string();
    let done = wait_done(&app, &sow_id).await;
    ensure!(done["status"] == "complete", "draft did not complete: {}", done["failure"]);
    let citing = |clause: &str| -> Result<String, String> {
        let sections = done["draft"]["sections"].as_array().unwrap();
        let s = sections
            .iter()
            .find(|s| s["provenance"] == json!([clause]))
            .ok_or_else(|| format!("no section cites only {clause}"))?;
        Ok(s["id"].as_str().unwrap().to_string())
    };
    let (conf, liab) = (citing("legal#0")?, citing("legal#1")?);
    Ok((app, sow_id, conf, liab))
}

async fn rate(app: &Router, sow_id: &str, section: &str, rating: i64) -> Result<(), String> {
    let r = post_json(app, &format!("/api/v1/sow/{sow_id}/feedback"), &json!({"section_id": section, "rating": rating})).await;
    ensure!(r.status == axum::http::StatusCode::NO_CONTENT, "feedback rejected: {}", String::from_utf8_lossy(&r.body));
    Ok(())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

async fn examples() -> Outcome {
    let alpha = stub_config().feedback_alpha;
    let adjusted = |raw: f64, avg: f64| raw * (1.0 + alpha * avg);

    // Rating 0 leaves scores and order as they were.
    let dir = tempfile::tempdir().unwrap();
    let (app, sow_id, conf, _) = setup(dir.path()).await?;
    let before = scores(&app).await;
    ensure!(close(before.conf.0, 0.80) && close(before.liab.0, 0.85), "raw scores {:?} {:?}", before.conf, before.liab);
    ensure!(before.order[..2] == ["legal#1", "legal#0"], "initial order {:?}", before.order);
    rate(&app, &sow_id, &conf, 0).await?;
    let after = scores(&app).await;
    ensure!(after.conf.1 == after.conf.0 && after.order == before.order, "rating 0 changed the ranking");

    // A single +1 multiplies by 1.1.
    let dir = tempfile::tempdir().unwrap();
    let (app, sow_id, conf, _) = setup(dir.path()).await?;
    rate(&app, &sow_id, &conf, 1).await?;
    let s = scores(&app).await;
    ensure!(close(s.conf.1, adjusted(s.conf.0, 1.0)) && close(s.conf.1, 1.1 * s.conf.0), "+1 gave {:?}", s.conf);

    // +1 on the 0.80 clause and -1 on the 0.85 clause flips their order.
    let dir = tempfile::tempdir().unwrap();
    let (app, sow_id, conf, liab) = setup(dir.path()).await?;
    rate(&app, &sow_id, &conf, 1).await?;
    rate(&app, &sow_id, &liab, -1).await?;
    let s = scores(&app).await;
    ensure!(close(s.conf.1, 0.88) && close(s.conf.1, adjusted(0.80, 1.0)), "clause A adjusted {}", s.conf.1);
    ensure!(close(s.liab.1, 0.765) && close(s.liab.1, adjusted(0.85, -1.0)), "clause B adjusted {}", s.liab.1);
    ensure!(s.order[..2] == ["legal#0", "legal#1"], "order after feedback {:?}", s.order);

    Ok(format!("identity at 0, x1.1 at +1, and A {:.3} over B {:.3} through the search endpoint", s.conf.1, s.liab.1))
}

pub fn criterion() -> Outcome {
    runtime().block_on(examples())
}

