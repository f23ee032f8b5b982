//! Retrieval context and prompt rendering.
//!
//! A rendered prompt always ends with machine-readable blocks (required
//! sections, project variables as JSON, reference clauses) so that any
//! generator, including the offline stub, can recover the inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Embedder, GenerationRequest};
use crate::draft::{RequirementSpec, SectionKey, SowDraft};
use crate::vecstore::{ClauseIndex, RetrievalHit, VecStoreError};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_CONTEXT_BUDGET: usize = 4000;
pub const DEFAULT_SYSTEM_INSTRUCTIONS: &str = include_str!("../data/system_instructions.txt");

pub const REQUIRED_HEADER: &str = "REQUIRED SECTIONS (respond with exactly these section keys, in this order):";
pub const VARIABLES_HEADER: &str = "PROJECT VARIABLES (JSON):";
pub const CONTEXT_HEADER: &str = "REFERENCE CLAUSES:";
pub const DRAFT_HEADER: &str = "CURRENT DRAFT (JSON):";
pub const DRAFT_FOOTER: &str = "END CURRENT DRAFT";
const CLAUSE_OPEN: &str = "[clause id=";
const CLAUSE_CLOSE: &str = "[/clause]";

#[derive(Debug, thiserror::Error)]
pub enum RagError {
    #[error("placeholder {{{{{0}}}}} has no binding")]
    UnboundPlaceholder(String),
    #[error("malformed template at byte {offset}: {reason}")]
    MalformedTemplate { offset: usize, reason: String },
    #[error("required placeholder {0:?} does not appear in the template body")]
    MissingRequiredPlaceholder(String),
    #[error("drafting template must list at least one fixed section")]
    NoFixedSections,
    #[error("store dimension {store} differs from embedder dimension {embedder}")]
    DimensionMismatch { store: usize, embedder: usize },
    #[error(transparent)]
    Embed(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] VecStoreError),
    #[error("template descriptor: {0}")]
    Descriptor(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

fn parse_segments(body: &str) -> Result<Vec<Segment>, RagError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    let mut offset = 0;
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix("{{{{") {
            literal.push_str("{{");
            offset += 4;
            rest = after;
        } else if let Some(after) = rest.strip_prefix("{{") {
            let close = after.find("}}").ok_or_else(|| RagError::MalformedTemplate {
                offset,
                reason: "unterminated placeholder".into(),
            })?;
            let name = after[..close].trim();
            let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(RagError::MalformedTemplate { offset, reason: format!("invalid placeholder name {name:?}") });
            }
            if !literal.is_empty() {
                segments.push(Segment::Literal(std::mem::take(&mut literal)));
            }
            segments.push(Segment::Placeholder(name.to_string()));
            offset += 2 + close + 2;
            rest = &after[close + 2..];
        } else {
            let c = rest.chars().next().unwrap();
            literal.push(c);
            offset += c.len_utf8();
            rest = &rest[c.len_utf8()..];
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateDescriptor {
    pub template_id: String,
    pub required_placeholders: BTreeSet<String>,
    pub fixed_sections: Vec<SectionKey>,
    #[serde(default)]
    pub system_instructions: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    pub fixed_sections: Vec<SectionKey>,
    pub system_instructions: String,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn new(descriptor: TemplateDescriptor, body: impl Into<String>) -> Result<Self, RagError> {
        let body = body.into();
        let segments = parse_segments(&body)?;
        let present: BTreeSet<&str> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(n) => Some(n.as_str()),
                Segment::Literal(_) => None,
            })
            .collect();
        if let Some(missing) = descriptor.required_placeholders.iter().find(|n| !present.contains(n.as_str())) {
            return Err(RagError::MissingRequiredPlaceholder(missing.clone()));
        }
        if descriptor.fixed_sections.is_empty() {
            return Err(RagError::NoFixedSections);
        }
        Ok(Self {
            template_id: descriptor.template_id,
            body,
            required_placeholders: descriptor.required_placeholders,
            fixed_sections: descriptor.fixed_sections,
            system_instructions: descriptor
                .system_instructions
                .unwrap_or_else(|| DEFAULT_SYSTEM_INSTRUCTIONS.trim_end().to_string()),
            segments,
        })
    }

    /// Load a template body plus its JSON descriptor.
    pub fn load(body_path: impl AsRef<Path>, descriptor_path: impl AsRef<Path>) -> Result<Self, RagError> {
        let body = std::fs::read_to_string(body_path)?;
        let descriptor: TemplateDescriptor = serde_json::from_str(&std::fs::read_to_string(descriptor_path)?)?;
        Self::new(descriptor, body)
    }

    /// The shipped drafting template.
    pub fn default_drafting() -> Self {
        let descriptor: TemplateDescriptor =
            serde_json::from_str(include_str!("../data/templates/drafting.json")).expect("bundled descriptor");
        Self::new(descriptor, include_str!("../data/templates/drafting.txt").trim_end()).expect("bundled template")
    }

    /// Same template with a different fixed-section list.
    pub fn with_fixed_sections(mut self, keys: Vec<SectionKey>) -> Result<Self, RagError> {
        if keys.is_empty() {
            return Err(RagError::NoFixedSections);
        }
        self.fixed_sections = keys;
        Ok(self)
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(n) => Some(n.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextHit {
    pub hit: RetrievalHit,
    pub text: String,
    pub canonical_key: Option<SectionKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalContext {
    pub hits: Vec<ContextHit>,
    pub char_budget: usize,
    pub query_text: String,
}

impl RetrievalContext {
    pub fn empty(query_text: impl Into<String>, char_budget: usize) -> Self {
        Self { hits: Vec::new(), char_budget, query_text: query_text.into() }
    }

    pub fn total_chars(&self) -> usize {
        self.hits.iter().map(|h| h.text.chars().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalParams {
    pub k: usize,
    pub min_score: f64,
    pub char_budget: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, min_score: crate::vecstore::DEFAULT_MIN_SCORE, char_budget: DEFAULT_CONTEXT_BUDGET }
    }
}

/// Title, goals and deliverable names, space separated.
pub fn query_text(spec: &RequirementSpec) -> String {
    std::iter::once(spec.project_title.trim())
        .chain(std::iter::once(spec.goals.trim()))
        .chain(spec.deliverables.iter().map(|d| d.name.trim()))
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Retrieve clauses for a requirement and trim them to the character budget
/// by dropping the lowest-ranked clauses whole.
pub fn build_context(
    spec: &RequirementSpec,
    store: &dyn ClauseIndex,
    params: RetrievalParams,
    embedder: &dyn Embedder,
) -> Result<RetrievalContext, RagError> {
    if store.dim() != embedder.dim() {
        return Err(RagError::DimensionMismatch { store: store.dim(), embedder: embedder.dim() });
    }
    let query = query_text(spec);
    if query.is_empty() || params.k == 0 || params.char_budget == 0 || store.is_empty() {
        return Ok(RetrievalContext::empty(query, params.char_budget));
    }
    let embedding = embedder.embed_one(&query)?;
    let mut hits: Vec<ContextHit> = store
        .search_records(&embedding, params.k, params.min_score)?
        .into_iter()
        .map(|(hit, record)| ContextHit { hit, text: record.text, canonical_key: record.canonical_key })
        .collect();
    let mut total: usize = hits.iter().map(|h| h.text.chars().count()).sum();
    while total > params.char_budget {
        let dropped = hits.pop().expect("non-zero total implies a hit");
        total -= dropped.text.chars().count();
    }
    Ok(RetrievalContext { hits, char_budget: params.char_budget, query_text: query })
}

/// A clause the prompt drew on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSource {
    pub clause_id: String,
    pub canonical_key: Option<SectionKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPrompt {
    pub system_instructions: String,
    pub user_content: String,
    pub context_block: String,
    pub bindings: BTreeMap<String, String>,
    pub required_sections: Vec<SectionKey>,
    pub sources: Vec<PromptSource>,
}

impl AugmentedPrompt {
    /// User content followed by the context block, as sent to a generator.
    pub fn full_user_content(&self) -> String {
        if self.context_block.is_empty() {
            self.user_content.clone()
        } else {
            format!("{}\n\n{}", self.user_content, self.context_block)
        }
    }

    pub fn to_request(&self, seed: u64) -> GenerationRequest {
        let mut req = GenerationRequest::new(self.system_instructions.clone(), self.full_user_content());
        req.seed = seed;
        req
    }
}

/// Placeholder bindings derived from a requirement. Empty values are unbound.
pub fn spec_bindings(spec: &RequirementSpec) -> BTreeMap<String, String> {
    let deliverables = spec
        .deliverables
        .iter()
        .filter(|d| !d.name.trim().is_empty())
        .map(|d| {
            let mut line = format!("- {}", d.name.trim());
            if !d.description.trim().is_empty() {
                line.push_str(": ");
                line.push_str(d.description.trim());
            }
            if let Some(due) = d.due_date.as_deref().filter(|s| !s.trim().is_empty()) {
                line.push_str(&format!(" (due {})", due.trim()));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n");
    let special = spec
        .special_requirements
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| format!("- {}", s.trim()))
        .collect::<Vec<_>>()
        .join("\n");
    [
        ("project_title", spec.project_title.trim().to_string()),
        ("client_name", spec.client_name.trim().to_string()),
        ("vendor_name", spec.vendor_name.trim().to_string()),
        ("goals", spec.goals.trim().to_string()),
        ("deliverables", deliverables),
        ("start_date", spec.start_date.trim().to_string()),
        ("end_date", spec.end_date.trim().to_string()),
        ("payment_terms", spec.payment_terms.trim().to_string()),
        ("special_requirements", special),
    ]
    .into_iter()
    .filter(|(_, v)| !v.is_empty())
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn required_sections_block(keys: &[SectionKey]) -> String {
    let mut out = String::from(REQUIRED_HEADER);
    for key in keys {
        out.push_str(&format!("\n- {}: {}", key.as_str(), key.title()));
    }
    out
}

fn variables_block(bindings: &BTreeMap<String, String>) -> String {
    format!("{VARIABLES_HEADER}\n{}", serde_json::to_string(bindings).expect("string map serializes"))
}

pub fn context_block(hits: &[ContextHit]) -> String {
    if hits.is_empty() {
        return String::new();
    }
    let mut out = String::from(CONTEXT_HEADER);
    for h in hits {
        let key = h.canonical_key.map_or("none", SectionKey::as_str);
        out.push_str(&format!("\n{CLAUSE_OPEN}{} key={}]\n{}\n{CLAUSE_CLOSE}", h.hit.clause_id, key, h.text));
    }
    out
}

/// Render a template against a requirement and retrieval context.
pub fn render_prompt(
    template: &PromptTemplate,
    spec: &RequirementSpec,
    ctx: &RetrievalContext,
) -> Result<AugmentedPrompt, RagError> {
    let bindings = spec_bindings(spec);
    if let Some(name) = template.required_placeholders.iter().find(|n| !bindings.contains_key(n.as_str())) {
        return Err(RagError::UnboundPlaceholder(name.clone()));
    }
    let mut body = String::new();
    for segment in &template.segments {
        match segment {
            Segment::Literal(text) => body.push_str(text),
            Segment::Placeholder(name) => body.push_str(bindings.get(name).map_or("", String::as_str)),
        }
    }
    let user_content = format!(
        "{}\n\n{}\n\n{}",
        body.trim_end(),
        required_sections_block(&template.fixed_sections),
        variables_block(&bindings)
    );
    Ok(AugmentedPrompt {
        system_instructions: template.system_instructions.clone(),
        user_content,
        context_block: context_block(&ctx.hits),
        bindings,
        required_sections: template.fixed_sections.clone(),
        sources: ctx
            .hits
            .iter()
            .map(|h| PromptSource { clause_id: h.hit.clause_id.clone(), canonical_key: h.canonical_key })
            .collect(),
    })
}

/// A clause recovered from a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptClause {
    pub clause_id: String,
    pub canonical_key: Option<SectionKey>,
    pub text: String,
}

/// Structured content recovered from a rendered prompt.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPrompt {
    pub required_sections: Vec<SectionKey>,
    pub variables: BTreeMap<String, String>,
    pub clauses: Vec<PromptClause>,
    pub current_draft: Option<SowDraft>,
}

impl ParsedPrompt {
    pub fn parse(text: &str) -> Self {
        let lines: Vec<&str> = text.lines().collect();
        let mut parsed = ParsedPrompt::default();
        let mut i = 0;
        while i < lines.len() {
            let line = lines[i];
            if line == REQUIRED_HEADER {
                i += 1;
                while i < lines.len() {
                    let Some(item) = lines[i].strip_prefix("- ") else { break };
                    let key = item.split(':').next().unwrap_or("").trim();
                    if let Ok(k) = key.parse() {
                        parsed.required_sections.push(k);
                    }
                    i += 1;
                }
                continue;
            }
            if line == VARIABLES_HEADER {
                if let Some(json) = lines.get(i + 1) {
                    parsed.variables = serde_json::from_str(json).unwrap_or_default();
                }
                i += 2;
                continue;
            }
            if let Some(header) = line.strip_prefix(CLAUSE_OPEN).and_then(|h| h.strip_suffix(']')) {
                if let Some((id, key)) = header.rsplit_once(" key=") {
                    let mut body = Vec::new();
                    i += 1;
                    while i < lines.len() && lines[i] != CLAUSE_CLOSE {
                        body.push(lines[i]);
                        i += 1;
                    }
                    parsed.clauses.push(PromptClause {
                        clause_id: id.to_string(),
                        canonical_key: key.parse().ok(),
                        text: body.join("\n"),
                    });
                }
                i += 1;
                continue;
            }
            if line == DRAFT_HEADER {
                let mut json = Vec::new();
                i += 1;
                while i < lines.len() && lines[i] != DRAFT_FOOTER {
                    json.push(lines[i]);
                    i += 1;
                }
                parsed.current_draft = serde_json::from_str(&json.join("\n")).ok();
                i += 1;
                continue;
            }
            i += 1;
        }
        parsed
    }
}
