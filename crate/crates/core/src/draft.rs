//! Drafting agent: requirement input, the structured draft type, and parsing
//! model output into a draft.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{BackendError, Generator};
use crate::clock::Clock;
use crate::ragchain::AugmentedPrompt;

/// The ten canonical Statement of Work section keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKey {
    ScopeOfWork,
    Deliverables,
    Timeline,
    Responsibilities,
    PaymentTerms,
    Confidentiality,
    Liability,
    Termination,
    AcceptanceCriteria,
    Signatures,
}

impl SectionKey {
    pub const ALL: [SectionKey; 10] = [
        SectionKey::ScopeOfWork,
        SectionKey::Deliverables,
        SectionKey::Timeline,
        SectionKey::Responsibilities,
        SectionKey::PaymentTerms,
        SectionKey::Confidentiality,
        SectionKey::Liability,
        SectionKey::Termination,
        SectionKey::AcceptanceCriteria,
        SectionKey::Signatures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionKey::ScopeOfWork => "scope_of_work",
            SectionKey::Deliverables => "deliverables",
            SectionKey::Timeline => "timeline",
            SectionKey::Responsibilities => "responsibilities",
            SectionKey::PaymentTerms => "payment_terms",
            SectionKey::Confidentiality => "confidentiality",
            SectionKey::Liability => "liability",
            SectionKey::Termination => "termination",
            SectionKey::AcceptanceCriteria => "acceptance_criteria",
            SectionKey::Signatures => "signatures",
        }
    }

    /// Default heading used when a section is created from scratch.
    pub fn title(self) -> &'static str {
        match self {
            SectionKey::ScopeOfWork => "Scope of Work",
            SectionKey::Deliverables => "Deliverables",
            SectionKey::Timeline => "Timeline",
            SectionKey::Responsibilities => "Responsibilities",
            SectionKey::PaymentTerms => "Payment Terms",
            SectionKey::Confidentiality => "Confidentiality",
            SectionKey::Liability => "Liability",
            SectionKey::Termination => "Termination",
            SectionKey::AcceptanceCriteria => "Acceptance Criteria",
            SectionKey::Signatures => "Signatures",
        }
    }
}

impl fmt::Display for SectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown section key {0:?}")]
pub struct UnknownSectionKey(pub String);

impl FromStr for SectionKey {
    type Err = UnknownSectionKey;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SectionKey::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| UnknownSectionKey(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Deliverable {
    pub name: String,
    pub description: String,
    pub due_date: Option<String>,
}

/// What the user asked for. Dates are ISO-8601 (`YYYY-MM-DD`) strings so that
/// malformed dates surface as field errors rather than decode failures.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RequirementSpec {
    pub project_title: String,
    pub client_name: String,
    pub vendor_name: String,
    pub goals: String,
    pub deliverables: Vec<Deliverable>,
    pub start_date: String,
    pub end_date: String,
    pub payment_terms: String,
    pub special_requirements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub code: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, code: &str, message: impl Into<String>) -> Self {
        Self { field: field.into(), code: code.to_string(), message: message.into() }
    }
}

pub const CODE_REQUIRED: &str = "REQUIRED";
pub const CODE_INVALID_DATE: &str = "INVALID_DATE";
pub const CODE_DATE_ORDER: &str = "DATE_ORDER";

pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

/// Every violated input invariant, in field order. Empty means valid.
pub fn validate_input(spec: &RequirementSpec) -> Result<(), Vec<FieldError>> {
    let mut errors = Vec::new();
    if spec.project_title.trim().is_empty() {
        errors.push(FieldError::new("project_title", CODE_REQUIRED, "project title must not be empty"));
    }
    if spec.deliverables.is_empty() {
        errors.push(FieldError::new("deliverables", CODE_REQUIRED, "at least one deliverable is required"));
    }
    for (i, d) in spec.deliverables.iter().enumerate() {
        if d.name.trim().is_empty() {
            errors.push(FieldError::new(format!("deliverables[{i}].name"), CODE_REQUIRED, "deliverable name must not be empty"));
        }
        if let Some(due) = d.due_date.as_deref().filter(|s| !s.trim().is_empty()) {
            if parse_iso_date(due).is_none() {
                errors.push(FieldError::new(
                    format!("deliverables[{i}].due_date"),
                    CODE_INVALID_DATE,
                    format!("{due:?} is not an ISO-8601 date"),
                ));
            }
        }
    }
    let mut date = |field: &str, value: &str| -> Option<NaiveDate> {
        if value.trim().is_empty() {
            errors.push(FieldError::new(field, CODE_REQUIRED, format!("{field} is required")));
            return None;
        }
        let parsed = parse_iso_date(value);
        if parsed.is_none() {
            errors.push(FieldError::new(field, CODE_INVALID_DATE, format!("{value:?} is not an ISO-8601 date")));
        }
        parsed
    };
    let start = date("start_date", &spec.start_date);
    let end = date("end_date", &spec.end_date);
    if let (Some(start), Some(end)) = (start, end) {
        if end < start {
            errors.push(FieldError::new("end_date", CODE_DATE_ORDER, "end_date is earlier than start_date"));
        }
    }
    if errors.is_empty() { Ok(()) } else { Err(errors) }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DraftMetadata {
    pub project_title: String,
    pub client: String,
    pub vendor: String,
    pub effective_date: String,
    pub generated_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftSection {
    pub id: String,
    pub key: SectionKey,
    pub title: String,
    pub body: String,
    pub provenance: Vec<String>,
    pub order: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SowDraft {
    pub sow_id: String,
    pub version: u32,
    pub metadata: DraftMetadata,
    pub sections: Vec<DraftSection>,
}

impl SowDraft {
    pub fn section(&self, key: SectionKey) -> Option<&DraftSection> {
        self.sections.iter().find(|s| s.key == key)
    }

    pub fn section_by_id(&self, id: &str) -> Option<&DraftSection> {
        self.sections.iter().find(|s| s.id == id)
    }

    /// Sections sorted by `order` (stable for equal orders).
    pub fn ordered_sections(&self) -> Vec<&DraftSection> {
        let mut v: Vec<&DraftSection> = self.sections.iter().collect();
        v.sort_by_key(|s| s.order);
        v
    }

    /// Canonical JSON: pretty-printed, sections ordered by `order`.
    pub fn to_json(&self) -> String {
        let mut copy = self.clone();
        copy.sections.sort_by_key(|s| s.order);
        serde_json::to_string_pretty(&copy).expect("draft serialization cannot fail")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DraftError {
    #[error("invalid requirement input ({} field errors)", .0.len())]
    InvalidInput(Vec<FieldError>),
    #[error("could not parse model output: {reason}")]
    ParseFailure { reason: String },
    #[error("model output violates the draft schema: {}", join_violations(.0))]
    SchemaViolation(Vec<SchemaViolation>),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn join_violations(v: &[SchemaViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Parse the first top-level JSON object in model output into a draft.
///
/// Accepts the object as-is, or after stripping Markdown code fences and any
/// prose around the object. Schema problems are reported all at once.
pub fn parse_model_output(text: &str) -> Result<SowDraft, DraftError> {
    let value = match serde_json::from_str::<Value>(text.trim()) {
        Ok(v @ Value::Object(_)) => v,
        _ => repair(text)?,
    };
    draft_from_value(&value)
}

fn repair(text: &str) -> Result<Value, DraftError> {
    let unfenced: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    let start = unfenced
        .find('{')
        .ok_or_else(|| DraftError::ParseFailure { reason: "no JSON object found".into() })?;
    let end = matching_brace(&unfenced[start..])
        .ok_or_else(|| DraftError::ParseFailure { reason: "unbalanced braces".into() })?;
    serde_json::from_str(&unfenced[start..start + end + 1])
        .map_err(|e| DraftError::ParseFailure { reason: e.to_string() })
}

/// Byte offset of the `}` closing the object that starts at offset 0.
fn matching_brace(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

struct SchemaCheck {
    violations: Vec<SchemaViolation>,
}

impl SchemaCheck {
    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(SchemaViolation { path: path.into(), message: message.into() });
    }

    fn string(&mut self, obj: &serde_json::Map<String, Value>, path: &str, field: &str, required: bool) -> String {
        let full = if path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
        match obj.get(field) {
            Some(Value::String(s)) => s.clone(),
            None | Some(Value::Null) if !required => String::new(),
            None => {
                self.fail(full, "required field is missing");
                String::new()
            }
            Some(_) => {
                self.fail(full, "expected a string");
                String::new()
            }
        }
    }

    fn uint(&mut self, obj: &serde_json::Map<String, Value>, path: &str, field: &str, default: u64, min: u64) -> u64 {
        let full = if path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
        match obj.get(field) {
            None | Some(Value::Null) => default,
            Some(v) => match v.as_u64().filter(|n| *n >= min && *n <= u32::MAX as u64) {
                Some(n) => n,
                None => {
                    self.fail(full, format!("expected an integer >= {min}"));
                    default
                }
            },
        }
    }
}

fn draft_from_value(value: &Value) -> Result<SowDraft, DraftError> {
    let Value::Object(root) = value else {
        return Err(DraftError::ParseFailure { reason: "top-level JSON value is not an object".into() });
    };
    let mut check = SchemaCheck { violations: Vec::new() };
    let sow_id = check.string(root, "", "sow_id", false);
    let version = check.uint(root, "", "version", 1, 1) as u32;

    let metadata = match root.get("metadata") {
        Some(Value::Object(m)) => DraftMetadata {
            project_title: check.string(m, "metadata", "project_title", true),
            client: check.string(m, "metadata", "client", false),
            vendor: check.string(m, "metadata", "vendor", false),
            effective_date: check.string(m, "metadata", "effective_date", false),
            generated_at: check.string(m, "metadata", "generated_at", false),
        },
        None => {
            check.fail("metadata", "required field is missing");
            DraftMetadata::default()
        }
        Some(_) => {
            check.fail("metadata", "expected an object");
            DraftMetadata::default()
        }
    };

    let mut sections = Vec::new();
    match root.get("sections") {
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let path = format!("sections[{i}]");
                let Value::Object(s) = item else {
                    check.fail(path, "expected an object");
                    continue;
                };
                let key_text = check.string(s, &path, "key", true);
                let key = if key_text.is_empty() {
                    None
                } else {
                    match key_text.parse::<SectionKey>() {
                        Ok(k) => Some(k),
                        Err(_) => {
                            check.fail(format!("{path}.key"), format!("{key_text:?} is not a canonical section key"));
                            None
                        }
                    }
                };
                let title = check.string(s, &path, "title", false);
                let body = check.string(s, &path, "body", true);
                let id = check.string(s, &path, "id", false);
                let order = check.uint(s, &path, "order", i as u64, 0) as u32;
                let provenance = match s.get("provenance") {
                    None | Some(Value::Null) => Vec::new(),
                    Some(Value::Array(ids)) => ids
                        .iter()
                        .enumerate()
                        .filter_map(|(j, v)| match v {
                            Value::String(id) => Some(id.clone()),
                            _ => {
                                check.fail(format!("{path}.provenance[{j}]"), "expected a string");
                                None
                            }
                        })
                        .collect(),
                    Some(_) => {
                        check.fail(format!("{path}.provenance"), "expected an array of strings");
                        Vec::new()
                    }
                };
                if let Some(key) = key {
                    sections.push(DraftSection {
                        id: if id.is_empty() { format!("sec-{}", key.as_str()) } else { id },
                        key,
                        title: if title.is_empty() { key.title().to_string() } else { title },
                        body,
                        provenance,
                        order,
                    });
                }
            }
        }
        None => check.fail("sections", "required field is missing"),
        Some(_) => check.fail("sections", "expected an array"),
    }

    let ids: Vec<&str> = sections.iter().map(|s| s.id.as_str()).collect();
    let unique: BTreeSet<&str> = ids.iter().copied().collect();
    if unique.len() != ids.len() {
        check.fail("sections", "section ids must be unique");
    }

    if !check.violations.is_empty() {
        return Err(DraftError::SchemaViolation(check.violations));
    }
    sections.sort_by_key(|s| s.order);
    Ok(SowDraft { sow_id, version, metadata, sections })
}

/// Per-call drafting parameters.
pub struct DraftRequest<'a> {
    pub sow_id: &'a str,
    pub seed: u64,
    pub temperature: f64,
    pub max_output_chars: usize,
    pub clock: &'a dyn Clock,
}

/// One generation call, parsed and stamped into a version-1 draft.
///
/// Provenance is restricted to clauses that were in the retrieval context. A
/// section whose model output names no sources inherits the context clauses
/// sharing its canonical key.
pub fn draft(
    spec: &RequirementSpec,
    prompt: &AugmentedPrompt,
    backend: &dyn Generator,
    request: &DraftRequest<'_>,
) -> Result<SowDraft, DraftError> {
    validate_input(spec).map_err(DraftError::InvalidInput)?;
    let mut gen_req = prompt.to_request(request.seed);
    gen_req.temperature = request.temperature;
    gen_req.max_output_chars = request.max_output_chars;
    let output = backend.generate(&gen_req)?;
    let mut draft = parse_model_output(&output)?;
    stamp(&mut draft, spec, prompt, request);
    draft.version = 1;
    Ok(draft)
}

pub(crate) fn stamp(draft: &mut SowDraft, spec: &RequirementSpec, prompt: &AugmentedPrompt, request: &DraftRequest<'_>) {
    draft.sow_id = request.sow_id.to_string();
    draft.metadata.generated_at = request.clock.now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    if draft.metadata.project_title.trim().is_empty() {
        draft.metadata.project_title = spec.project_title.clone();
    }
    if draft.metadata.client.is_empty() {
        draft.metadata.client = spec.client_name.clone();
    }
    if draft.metadata.vendor.is_empty() {
        draft.metadata.vendor = spec.vendor_name.clone();
    }
    if draft.metadata.effective_date.is_empty() {
        draft.metadata.effective_date = spec.start_date.clone();
    }
    for section in &mut draft.sections {
        section.provenance.retain(|id| prompt.sources.iter().any(|s| &s.clause_id == id));
        if section.provenance.is_empty() {
            section.provenance = prompt
                .sources
                .iter()
                .filter(|s| s.canonical_key == Some(section.key))
                .map(|s| s.clause_id.clone())
                .collect();
        }
    }
}
