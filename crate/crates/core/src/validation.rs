//! Structural, cross-reference, completeness and style validation, the
//! formatting auto-fix, the accept/revise decision, and final rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Embedder};
use crate::compliance::{ComplianceReport, Overall};
use crate::draft::{RequirementSpec, SectionKey, SowDraft};
use crate::vecstore::{cosine, hex_digest};

pub const DEFAULT_COMPLETENESS_THRESHOLD: f64 = 0.60;

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("unsupported format {0:?}")]
    UnsupportedFormat(String),
    #[error("embedder dimension {found} does not match configured {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Embed(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationKind {
    MissingSection,
    DuplicateSection,
    DanglingReference,
    UnaddressedRequirement,
    Style,
}

impl ValidationKind {
    pub fn severity(self) -> Severity {
        match self {
            ValidationKind::MissingSection | ValidationKind::DuplicateSection | ValidationKind::DanglingReference => {
                Severity::Error
            }
            ValidationKind::UnaddressedRequirement | ValidationKind::Style => Severity::Warning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "level", content = "section_id", rename_all = "snake_case")]
pub enum Locus {
    Document,
    Section(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub kind: ValidationKind,
    pub severity: Severity,
    pub locus: Locus,
    pub detail: String,
}

impl ValidationIssue {
    pub fn new(kind: ValidationKind, locus: Locus, detail: impl Into<String>) -> Self {
        Self { kind, severity: kind.severity(), locus, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    AcceptWithFixes,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub fixes_applied: Vec<String>,
    pub verdict: Verdict,
}

pub fn validate_structure(draft: &SowDraft, required_keys: &[SectionKey]) -> Vec<ValidationIssue> {
    let mut issues: Vec<ValidationIssue> = required_keys
        .iter()
        .filter(|k| draft.section(**k).is_none())
        .map(|k| ValidationIssue::new(ValidationKind::MissingSection, Locus::Document, format!("required section {k} is missing")))
        .collect();
    let mut seen: BTreeMap<SectionKey, &str> = BTreeMap::new();
    for s in draft.ordered_sections() {
        if let Some(first) = seen.get(&s.key) {
            issues.push(ValidationIssue::new(
                ValidationKind::DuplicateSection,
                Locus::Section(s.id.clone()),
                format!("section key {} already used by {first}", s.key),
            ));
        } else {
            seen.insert(s.key, &s.id);
        }
    }
    issues
}

static CROSSREF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bSection\s+(\d+)\b|§\s*(\d+)\b").unwrap());

/// "Section n" and "§n" must point at an existing 1-based section number.
pub fn validate_crossrefs(draft: &SowDraft) -> Vec<ValidationIssue> {
    let count = draft.sections.len();
    let mut issues = Vec::new();
    for s in draft.ordered_sections() {
        for c in CROSSREF.captures_iter(&s.body) {
            let digits = c.get(1).or_else(|| c.get(2)).unwrap().as_str();
            let valid = digits.parse::<usize>().is_ok_and(|n| (1..=count).contains(&n));
            if !valid {
                issues.push(ValidationIssue::new(
                    ValidationKind::DanglingReference,
                    Locus::Section(s.id.clone()),
                    format!("\"{}\" does not match any of the {count} sections", &c[0]),
                ));
            }
        }
    }
    issues
}

/// Deliverable names followed by special requirements, in input order.
pub fn requirement_items(spec: &RequirementSpec) -> Vec<String> {
    spec.deliverables
        .iter()
        .map(|d| d.name.trim().to_string())
        .chain(spec.special_requirements.iter().map(|r| r.trim().to_string()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// For each requirement item, whether some section body addresses it: a
/// case-folded substring match, or embedding cosine at or above `threshold`.
pub fn addressed_items(
    draft: &SowDraft,
    items: &[String],
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<Vec<bool>, ValidationError> {
    let bodies: Vec<String> = draft.ordered_sections().iter().map(|s| s.body.clone()).filter(|b| !b.trim().is_empty()).collect();
    let folded: Vec<String> = bodies.iter().map(|b| b.to_lowercase()).collect();
    let mut result: Vec<bool> = items.iter().map(|i| folded.iter().any(|b| b.contains(&i.to_lowercase()))).collect();
    let pending: Vec<usize> = (0..items.len()).filter(|i| !result[*i]).collect();
    if pending.is_empty() || bodies.is_empty() {
        return Ok(result);
    }
    let body_vecs = embedder.embed(&bodies)?;
    let item_vecs = embedder.embed(&pending.iter().map(|i| items[*i].clone()).collect::<Vec<_>>())?;
    for (i, v) in pending.into_iter().zip(item_vecs) {
        for b in &body_vecs {
            let score = cosine(&v, b).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
            if score >= threshold {
                result[i] = true;
                break;
            }
        }
    }
    Ok(result)
}

pub fn verify_completeness(
    draft: &SowDraft,
    spec: &RequirementSpec,
    embedder: &dyn Embedder,
    expected_dim: usize,
    threshold: f64,
) -> Result<Vec<ValidationIssue>, ValidationError> {
    if embedder.dim() != expected_dim {
        return Err(ValidationError::DimensionMismatch { expected: expected_dim, found: embedder.dim() });
    }
    let items = requirement_items(spec);
    let addressed = addressed_items(draft, &items, embedder, threshold)?;
    Ok(items
        .into_iter()
        .zip(addressed)
        .filter(|(_, ok)| !ok)
        .map(|(item, _)| {
            ValidationIssue::new(ValidationKind::UnaddressedRequirement, Locus::Document, format!("requirement not addressed: {item}"))
        })
        .collect())
}

const MINOR_WORDS: &[&str] = &["a", "an", "the", "of", "for", "and", "or", "to", "in"];
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\s*)[-*+•‣◦]\s+").unwrap());

pub fn title_case(heading: &str) -> String {
    heading
        .split(' ')
        .enumerate()
        .map(|(i, word)| {
            let lower = word.to_lowercase();
            if i > 0 && MINOR_WORDS.contains(&lower.as_str()) {
                lower
            } else {
                let mut chars = word.chars();
                match chars.next() {
                    Some(first) => first.to_uppercase().chain(chars).collect(),
                    None => String::new(),
                }
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn format_body(body: &str) -> String {
    let lines: Vec<String> = body
        .lines()
        .map(|line| BULLET.replace(line, "${1}- ").trim_end().to_string())
        .collect();
    lines.join("\n").trim_end().to_string()
}

/// Title-case headings, renumber orders to 0..N-1, normalize bullets to
/// "- ", strip trailing whitespace. Idempotent.
pub fn apply_formatting(draft: &SowDraft) -> SowDraft {
    let mut out = draft.clone();
    out.sections.sort_by_key(|s| s.order);
    for (i, s) in out.sections.iter_mut().enumerate() {
        s.title = title_case(&s.title);
        s.body = format_body(&s.body);
        s.order = i as u32;
    }
    out
}

/// One style warning per kind of change the formatter would make.
pub fn check_style(draft: &SowDraft) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    for (i, s) in draft.ordered_sections().into_iter().enumerate() {
        let locus = || Locus::Section(s.id.clone());
        if title_case(&s.title) != s.title {
            issues.push(ValidationIssue::new(ValidationKind::Style, locus(), format!("heading \"{}\" is not title case", s.title)));
        }
        if s.order != i as u32 {
            issues.push(ValidationIssue::new(ValidationKind::Style, locus(), format!("order {} is not contiguous", s.order)));
        }
        if s.body.lines().any(|l| BULLET.replace(l, "${1}- ") != l) {
            issues.push(ValidationIssue::new(ValidationKind::Style, locus(), "list bullets are not \"- \""));
        }
        if s.body.lines().any(|l| l.trim_end() != l) || s.body.trim_end() != s.body {
            issues.push(ValidationIssue::new(ValidationKind::Style, locus(), "trailing whitespace"));
        }
    }
    issues
}

/// Outcome of the decision tree. `Revise` and `RejectFinal` both report as
/// [`Verdict::Reject`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    AcceptWithFixes,
    Revise,
    RejectFinal,
}

impl Decision {
    pub fn verdict(self) -> Verdict {
        match self {
            Decision::Accept => Verdict::Accept,
            Decision::AcceptWithFixes => Verdict::AcceptWithFixes,
            Decision::Revise | Decision::RejectFinal => Verdict::Reject,
        }
    }
}

/// Errors or a failed compliance review reject (final once `iteration`
/// reaches `max_iterations`); warnings accept with fixes; otherwise accept.
pub fn decide(compliance: Option<&ComplianceReport>, issues: &[ValidationIssue], iteration: u32, max_iterations: u32) -> Decision {
    let overall = compliance.map(|c| c.overall);
    if issues.iter().any(|i| i.severity == Severity::Error) || overall == Some(Overall::Fail) {
        if iteration >= max_iterations { Decision::RejectFinal } else { Decision::Revise }
    } else if !issues.is_empty() || overall == Some(Overall::Warn) {
        Decision::AcceptWithFixes
    } else {
        Decision::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderFormat {
    Markdown,
    Structured,
}

impl FromStr for RenderFormat {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(RenderFormat::Markdown),
            "structured" | "json" => Ok(RenderFormat::Structured),
            _ => Err(ValidationError::UnsupportedFormat(s.to_string())),
        }
    }
}

impl fmt::Display for RenderFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenderFormat::Markdown => "markdown",
            RenderFormat::Structured => "structured",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedDocument {
    pub format: RenderFormat,
    pub content: String,
    /// SHA-256 of `content`, lowercase hex.
    pub checksum: String,
}

impl RenderedDocument {
    pub fn new(format: RenderFormat, content: String) -> Self {
        let checksum = hex_digest(content.as_bytes());
        Self { format, content, checksum }
    }

    pub fn verify(&self) -> bool {
        hex_digest(self.content.as_bytes()) == self.checksum
    }
}

pub fn render_markdown(draft: &SowDraft) -> String {
    let m = &draft.metadata;
    let mut out = format!("# Statement of Work: {}\n\n", m.project_title);
    let meta = [
        ("SOW ID", draft.sow_id.as_str()),
        ("Version", &draft.version.to_string()),
        ("Client", m.client.as_str()),
        ("Vendor", m.vendor.as_str()),
        ("Effective date", m.effective_date.as_str()),
        ("Generated at", m.generated_at.as_str()),
    ]
    .map(|(k, v)| (k, v.to_string()));
    for (label, value) in meta.iter().filter(|(_, v)| !v.is_empty()) {
        out.push_str(&format!("- **{label}:** {value}\n"));
    }
    for (i, s) in draft.ordered_sections().into_iter().enumerate() {
        out.push_str(&format!("\n## {}. {}\n\n", i + 1, s.title));
        if !s.body.is_empty() {
            out.push_str(&s.body);
            out.push('\n');
        }
    }
    out
}

pub fn render(draft: &SowDraft, format: RenderFormat) -> RenderedDocument {
    let content = match format {
        RenderFormat::Markdown => render_markdown(draft),
        RenderFormat::Structured => draft.to_json(),
    };
    RenderedDocument::new(format, content)
}

/// Render by format name; unknown names are rejected.
pub fn render_named(draft: &SowDraft, format: &str) -> Result<RenderedDocument, ValidationError> {
    Ok(render(draft, format.parse()?))
}

/// The validation stage with its configuration.
#[derive(Debug, Clone)]
pub struct ValidationAgent {
    pub required_keys: Vec<SectionKey>,
    pub completeness_threshold: f64,
    pub expected_dim: usize,
}

impl ValidationAgent {
    pub fn new(expected_dim: usize) -> Self {
        Self { required_keys: SectionKey::ALL.to_vec(), completeness_threshold: DEFAULT_COMPLETENESS_THRESHOLD, expected_dim }
    }

    /// All four validators, in a fixed order.
    pub fn validate(
        &self,
        draft: &SowDraft,
        spec: &RequirementSpec,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ValidationIssue>, ValidationError> {
        let mut issues = validate_structure(draft, &self.required_keys);
        issues.extend(validate_crossrefs(draft));
        issues.extend(verify_completeness(draft, spec, embedder, self.expected_dim, self.completeness_threshold)?);
        issues.extend(check_style(draft));
        Ok(issues)
    }
}
