use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use sowgen_core::compliance::ComplianceReport;
use sowgen_core::draft::validate_input;
use sowgen_core::ingest::{ingest_documents, read_manifest, IngestError};
use sowgen_core::orchestrator::{record_feedback, AblationRow, AuditTrail, FeedbackError, PipelineFailure};
use sowgen_core::{
    ClauseIndex, FeedbackRecord, IngestInput, IngestSummary, Module, Rating, RequirementSpec, SowDraft,
    ValidationReport,
};

use crate::{ApiError, AppState, RunEntry};

type Shared = State<Arc<AppState>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SowStatus {
    Processing,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SowCreated {
    pub sow_id: String,
}

/// A run as exposed to clients. `draft` is present only when complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SowResource {
    pub sow_id: String,
    pub status: SowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<SowDraft>,
    #[serde(default)]
    pub compliance: Option<ComplianceReport>,
    #[serde(default)]
    pub validation: Option<ValidationReport>,
    #[serde(default)]
    pub audit: AuditTrail,
    #[serde(default)]
    pub failure: Option<PipelineFailure>,
    #[serde(default)]
    pub iteration: u32,
}

impl From<RunEntry> for SowResource {
    fn from(entry: RunEntry) -> Self {
        let mut res = SowResource {
            sow_id: entry.sow_id,
            status: entry.status,
            draft: None,
            compliance: None,
            validation: None,
            audit: AuditTrail::default(),
            failure: None,
            iteration: 0,
        };
        if let Some(run) = entry.run {
            if res.status == SowStatus::Complete {
                res.draft = run.draft;
            }
            res.compliance = run.compliance;
            res.validation = run.validation;
            res.audit = run.audit;
            res.failure = run.failure;
            res.iteration = run.iteration;
        }
        res
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub clause_id: String,
    pub text: String,
    pub raw_score: f64,
    pub adjusted_score: f64,
}

/// Feedback body: a feedback record without `sow_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackBody {
    #[serde(default)]
    pub section_id: Option<String>,
    pub rating: i64,
    #[serde(default)]
    pub comment: String,
}

/// Ingestion by JSON: files on the server's filesystem, a manifest, or
/// documents sent inline. All given forms are combined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestRequest {
    pub paths: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub documents: Vec<IngestInput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblateRequest {
    pub spec: RequirementSpec,
    #[serde(default)]
    pub disable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateResponse {
    pub row: AblationRow,
    pub run: SowResource,
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

pub(crate) async fn create_sow(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let spec: RequirementSpec = parse_json(&body)?;
    validate_input(&spec).map_err(ApiError::validation)?;
    let sow_id = uuid::Uuid::new_v4().to_string();
    state.set_run(&sow_id, RunEntry { sow_id: sow_id.clone(), status: SowStatus::Processing, run: None });
    let task_state = state.clone();
    let task_id = sow_id.clone();
    tokio::task::spawn_blocking(move || {
        let run = task_state.orchestrator.run_pipeline(&spec, &task_id, &task_state.store);
        tracing::info!(sow_id = %task_id, status = ?run.status, "pipeline finished");
        task_state.finish_run(run);
    });
    Ok((StatusCode::ACCEPTED, Json(SowCreated { sow_id })).into_response())
}

pub(crate) async fn get_sow(State(state): Shared, Path(id): Path<String>) -> Result<Json<SowResource>, ApiError> {
    let entry = state.run_entry(&id).ok_or_else(|| ApiError::unknown_sow(&id))?;
    Ok(Json(entry.into()))
}

pub(crate) async fn post_feedback(
    State(state): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let value: serde_json::Value = parse_json(&body)?;
    let rating_value = value.get("rating").ok_or_else(|| ApiError::malformed("missing field `rating`"))?;
    let rating = rating_value
        .as_i64()
        .and_then(|r| Rating::try_from(r).ok())
        .ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "INVALID_RATING", format!("rating must be -1, 0 or 1, got {rating_value}"))
        })?;
    let body: FeedbackBody = serde_json::from_value(value).map_err(|e| ApiError::malformed(e.to_string()))?;

    let entry = state.run_entry(&id).ok_or_else(|| ApiError::unknown_sow(&id))?;
    let draft = match (&entry.status, &entry.run) {
        (SowStatus::Complete, Some(run)) if run.draft.is_some() => run.draft.clone(),
        _ => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "SOW_NOT_READY",
                format!("SOW {id:?} has no completed draft"),
            ))
        }
    };
    let record = FeedbackRecord {
        sow_id: id.clone(),
        section_id: body.section_id,
        rating,
        comment: body.comment,
        created_at: state.orchestrator.clock().now(),
    };
    let mut book = state.feedback.lock();
    let mut store = state.store.write();
    let ack = record_feedback(record, draft.as_ref(), &mut book, &mut store).map_err(|e| match e {
        FeedbackError::UnknownSow(_) => ApiError::unknown_sow(&id),
        e @ FeedbackError::UnknownSection { .. } => {
            ApiError::new(StatusCode::BAD_REQUEST, "UNKNOWN_SECTION", e.to_string())
        }
    })?;
    tracing::info!(sow_id = %id, clauses = ack.updated.len(), "feedback recorded");
    if !ack.updated.is_empty() {
        store.save(&state.index_path).map_err(|e| ApiError::internal(e.to_string()))?;
    }
    drop(store);
    state.persist_feedback(&book).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(StatusCode::NO_CONTENT)
}

fn invalid_query(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "INVALID_QUERY", message)
}

pub(crate) async fn search_clauses(
    State(state): Shared,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Vec<SearchResult>>, ApiError> {
    let q = params.get("q").map(|s| s.trim().to_string()).unwrap_or_default();
    if q.is_empty() {
        return Err(invalid_query("q must be a non-empty string"));
    }
    let defaults = state.orchestrator.config().retrieval_params();
    let k = match params.get("k") {
        Some(k) => k.parse::<usize>().map_err(|_| invalid_query(format!("k must be a non-negative integer, got {k:?}")))?,
        None => defaults.k,
    };
    let min_score = match params.get("min_score") {
        Some(m) => m
            .parse::<f64>()
            .ok()
            .filter(|m| (-1.0..=1.0).contains(m))
            .ok_or_else(|| invalid_query(format!("min_score must be a number in [-1, 1], got {m:?}")))?,
        None => defaults.min_score,
    };
    let task_state = state.clone();
    let results = blocking(move || -> Result<Vec<SearchResult>, ApiError> {
        let query = task_state.orchestrator.backends().embedder.embed_one(&q).map_err(backend_error)?;
        let hits = task_state
            .store
            .search_records(&query, k, min_score)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(hits
            .into_iter()
            .map(|(h, r)| SearchResult {
                clause_id: h.clause_id,
                text: r.text,
                raw_score: h.raw_score,
                adjusted_score: h.adjusted_score,
            })
            .collect())
    })
    .await??;
    Ok(Json(results))
}

fn backend_error(e: sowgen_core::BackendError) -> ApiError {
    ApiError::new(StatusCode::BAD_GATEWAY, "BACKEND_UNAVAILABLE", e.to_string())
}

fn ingest_error(e: IngestError) -> ApiError {
    match e {
        IngestError::Embed(e) => backend_error(e),
        IngestError::Store(e) => ApiError::internal(e.to_string()),
        e => ApiError::new(StatusCode::BAD_REQUEST, "INVALID_DOCUMENT", e.to_string()),
    }
}

fn empty_upload() -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "EMPTY_UPLOAD", "no documents were supplied")
}

fn doc_id_for(name: &str) -> String {
    let stem = std::path::Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    stem.to_string()
}

async fn multipart_inputs(mut multipart: Multipart) -> Result<Vec<IngestInput>, ApiError> {
    let mut inputs = Vec::new();
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::malformed(e.to_string()))? {
        let name = field
            .file_name()
            .or(field.name())
            .map(str::to_string)
            .ok_or_else(|| ApiError::malformed("multipart part has neither a file name nor a field name"))?;
        let bytes = field.bytes().await.map_err(|e| ApiError::malformed(e.to_string()))?;
        let text = String::from_utf8(bytes.to_vec())
            .map_err(|_| ApiError::malformed(format!("part {name:?} is not UTF-8 text")))?;
        if text.trim().is_empty() {
            continue;
        }
        inputs.push(IngestInput { doc_id: doc_id_for(&name), text, origin: name });
    }
    Ok(inputs)
}

fn json_inputs(req: IngestRequest) -> Result<Vec<IngestInput>, ApiError> {
    let mut inputs = Vec::new();
    if let Some(manifest) = &req.manifest {
        for entry in read_manifest(manifest).map_err(ingest_error)? {
            inputs.push(IngestInput::from_manifest(&entry).map_err(ingest_error)?);
        }
    }
    for path in &req.paths {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ingest_error(IngestError::Io { path: path.clone(), source }))?;
        let name = path.display().to_string();
        inputs.push(IngestInput { doc_id: doc_id_for(&name), text, origin: name });
    }
    inputs.extend(req.documents);
    inputs.retain(|i| !i.text.trim().is_empty());
    Ok(inputs)
}

pub(crate) async fn ingest(State(state): Shared, request: Request) -> Result<Json<IngestSummary>, ApiError> {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let inputs = if is_multipart {
        let multipart = Multipart::from_request(request, &()).await.map_err(|e| ApiError::malformed(e.body_text()))?;
        multipart_inputs(multipart).await?
    } else {
        let body = Bytes::from_request(request, &()).await.map_err(|e| ApiError::malformed(e.body_text()))?;
        if body.iter().all(u8::is_ascii_whitespace) {
            return Err(empty_upload());
        }
        let req: IngestRequest = parse_json(&body)?;
        blocking(move || json_inputs(req)).await??
    };
    if inputs.is_empty() {
        return Err(empty_upload());
    }
    let task_state = state.clone();
    let summary = blocking(move || -> Result<IngestSummary, ApiError> {
        let embedder = task_state.orchestrator.backends().embedder.clone();
        let sidecars = task_state.data_dir.join("maps");
        let mut store = task_state.store.write();
        let mut staged = store.clone();
        let summary = ingest_documents(&inputs, &mut staged, embedder.as_ref(), task_state.orchestrator.clock(), Some(&sidecars))
            .map_err(ingest_error)?;
        staged.save(&task_state.index_path).map_err(|e| ApiError::internal(e.to_string()))?;
        *store = staged;
        Ok(summary)
    })
    .await??;
    tracing::info!(documents = summary.documents, clauses = summary.clauses, "corpus ingested");
    Ok(Json(summary))
}

pub(crate) async fn ablate(State(state): Shared, body: Bytes) -> Result<Json<AblateResponse>, ApiError> {
    let req: AblateRequest = parse_json(&body)?;
    validate_input(&req.spec).map_err(ApiError::validation)?;
    let disabled = req
        .disable
        .iter()
        .map(|m| m.parse::<Module>())
        .collect::<Result<BTreeSet<Module>, _>>()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "INVALID_MODULE", e.to_string()))?;
    let sow_id = uuid::Uuid::new_v4().to_string();
    let task_state = state.clone();
    let result = blocking(move || {
        task_state.orchestrator.ablation_run(&req.spec, &sow_id, &task_state.store, &disabled).map(|r| (r, disabled))
    })
    .await?
    .map_err(|e| ApiError::internal(e.to_string()))?;
    let (result, disabled) = result;
    let row = AblationRow::new(result.run.sow_id.clone(), &disabled, &result);
    let status = match result.run.status {
        sowgen_core::RunStatus::Complete => SowStatus::Complete,
        sowgen_core::RunStatus::Failed => SowStatus::Failed,
    };
    let run = RunEntry { sow_id: result.run.sow_id.clone(), status, run: Some(result.run) }.into();
    Ok(Json(AblateResponse { row, run }))
}
