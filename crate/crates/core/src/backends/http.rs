//! Generic JSON-over-HTTP adapters.
//!
//! Request bodies come from a template (see [`BackendDescriptor::request_template`])
//! and the useful part of the response is located with a JSON pointer, so
//! provider differences live in configuration.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use tracing::debug;

use super::{
    check_embed_inputs, BackendDescriptor, BackendError, ClassificationRequest, Classifier, Embedder,
    GenerationRequest, Generator,
};
use crate::vecstore::Embedding;

struct Transport {
    agent: ureq::Agent,
    descriptor: BackendDescriptor,
    endpoint: String,
}

impl std::fmt::Debug for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transport").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl Transport {
    fn new(descriptor: BackendDescriptor) -> Result<Self, BackendError> {
        descriptor.validate()?;
        let endpoint = descriptor.endpoint.clone().unwrap_or_default();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(descriptor.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { agent, descriptor, endpoint })
    }

    fn api_key(&self) -> Result<Option<String>, BackendError> {
        match &self.descriptor.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| BackendError::MissingCredential(var.clone())),
        }
    }

    fn body(&self, default_template: Value, fields: &[(&str, Value)]) -> Value {
        let template = self.descriptor.request_template.clone().unwrap_or(default_template);
        fill_template(template, fields)
    }

    fn pointer<'a>(&self, response: &'a Value, default: &str) -> Result<&'a Value, BackendError> {
        let ptr = self.descriptor.response_pointer.as_deref().unwrap_or(default);
        response
            .pointer(ptr)
            .ok_or_else(|| BackendError::InvalidResponse(format!("response has nothing at {ptr:?}")))
    }

    /// POST with retries: 429, 5xx, timeouts and connection failures are
    /// retried with exponential backoff; other statuses fail immediately.
    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let key = self.api_key()?;
        let attempts = self.descriptor.max_retries + 1;
        let mut last = BackendError::Transport("no attempt made".into());
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.descriptor.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            debug!(target: "sowgen::backend", endpoint = %self.endpoint, attempt, request = %body);
            let mut req = self.agent.post(&self.endpoint).header("content-type", "application/json");
            if let Some(key) = &key {
                req = req.header("authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        let value: Value = resp
                            .body_mut()
                            .read_json()
                            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
                        debug!(target: "sowgen::backend", status, response = %value);
                        return Ok(value);
                    }
                    debug!(target: "sowgen::backend", status, "non-success status");
                    if status == 429 {
                        last = BackendError::RateLimited { attempts: attempt + 1 };
                    } else if status >= 500 {
                        last = BackendError::Transport(format!("HTTP status {status}"));
                    } else {
                        return Err(BackendError::Transport(format!("HTTP status {status}")));
                    }
                }
                Err(ureq::Error::Timeout(_)) => last = BackendError::Timeout,
                Err(e) => last = BackendError::Transport(e.to_string()),
            }
        }
        Err(last)
    }
}

/// Replace every string that is exactly `{{name}}` with the field's value.
fn fill_template(template: Value, fields: &[(&str, Value)]) -> Value {
    match template {
        Value::String(s) => {
            let name = s.strip_prefix("{{").and_then(|r| r.strip_suffix("}}")).map(str::trim);
            match name.and_then(|n| fields.iter().find(|(f, _)| *f == n)) {
                Some((_, v)) => v.clone(),
                None => Value::String(s),
            }
        }
        Value::Array(items) => Value::Array(items.into_iter().map(|v| fill_template(v, fields)).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, fill_template(v, fields))).collect()),
        other => other,
    }
}

/// Chat-completion style generator.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    transport: Arc<Transport>,
}

impl HttpGenerator {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self, BackendError> {
        Ok(Self { transport: Arc::new(Transport::new(descriptor)?) })
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let t = &self.transport;
        let body = t.body(
            json!({
                "model": "{{model}}",
                "messages": [
                    {"role": "system", "content": "{{system}}"},
                    {"role": "user", "content": "{{user}}"}
                ],
                "temperature": "{{temperature}}",
                "max_tokens": "{{max_tokens}}"
            }),
            &[
                ("model", json!(t.descriptor.model_name)),
                ("system", json!(req.system_instructions)),
                ("user", json!(req.user_content)),
                ("temperature", json!(req.temperature)),
                ("max_tokens", json!(req.max_output_chars.div_ceil(4))),
                ("seed", json!(req.seed)),
            ],
        );
        let response = t.post(&body)?;
        t.pointer(&response, "/choices/0/message/content")?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::InvalidResponse("generation result is not a string".into()))
    }
}

/// Zero-shot classification endpoint. Accepts either `{labels, scores}`
/// (scores matched back to hypotheses by label) or a bare score array.
#[derive(Debug, Clone)]
pub struct HttpClassifier {
    transport: Arc<Transport>,
}

impl HttpClassifier {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self, BackendError> {
        Ok(Self { transport: Arc::new(Transport::new(descriptor)?) })
    }
}

impl Classifier for HttpClassifier {
    fn classify(&self, req: &ClassificationRequest) -> Result<Vec<f64>, BackendError> {
        if req.hypotheses.is_empty() {
            return Err(BackendError::InvalidRequest("at least one hypothesis is required".into()));
        }
        let t = &self.transport;
        let body = t.body(
            json!({
                "model": "{{model}}",
                "inputs": "{{premise}}",
                "parameters": {"candidate_labels": "{{hypotheses}}", "multi_label": true}
            }),
            &[
                ("model", json!(t.descriptor.model_name)),
                ("premise", json!(req.premise)),
                ("hypotheses", json!(req.hypotheses)),
            ],
        );
        let response = t.post(&body)?;
        let found = t.pointer(&response, "")?;
        let bad = || BackendError::InvalidResponse("unrecognised classification response".into());
        let number = |v: &Value| v.as_f64().map(|x| x.clamp(0.0, 1.0)).ok_or_else(bad);
        match found {
            Value::Object(obj) => {
                let labels = obj.get("labels").and_then(Value::as_array).ok_or_else(bad)?;
                let scores = obj.get("scores").and_then(Value::as_array).ok_or_else(bad)?;
                req.hypotheses
                    .iter()
                    .map(|h| {
                        let i = labels.iter().position(|l| l.as_str() == Some(h)).ok_or_else(bad)?;
                        number(scores.get(i).ok_or_else(bad)?)
                    })
                    .collect()
            }
            Value::Array(scores) if scores.len() == req.hypotheses.len() => scores.iter().map(number).collect(),
            _ => Err(bad()),
        }
    }
}

/// Embedding endpoint. Accepts `[{embedding: [...]}, ...]` or `[[...], ...]`
/// at the response pointer (default `/data`).
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    transport: Arc<Transport>,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(descriptor: BackendDescriptor, dim: usize) -> Result<Self, BackendError> {
        Ok(Self { transport: Arc::new(Transport::new(descriptor)?), dim })
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError> {
        check_embed_inputs(texts)?;
        let t = &self.transport;
        let body = t.body(
            json!({"model": "{{model}}", "input": "{{texts}}"}),
            &[("model", json!(t.descriptor.model_name)), ("texts", json!(texts))],
        );
        let response = t.post(&body)?;
        let bad = |m: &str| BackendError::InvalidResponse(m.to_string());
        let items = t.pointer(&response, "/data")?.as_array().ok_or_else(|| bad("embeddings are not an array"))?;
        if items.len() != texts.len() {
            return Err(bad("embedding count differs from input count"));
        }
        items
            .iter()
            .map(|item| {
                let vector = item.get("embedding").unwrap_or(item);
                let values: Vec<f64> = serde_json::from_value(vector.clone()).map_err(|e| bad(&e.to_string()))?;
                if values.len() != self.dim {
                    return Err(BackendError::DimensionMismatch { expected: self.dim, found: values.len() });
                }
                Embedding::new(values).map_err(|e| bad(&e.to_string()))
            })
            .collect()
    }
}
