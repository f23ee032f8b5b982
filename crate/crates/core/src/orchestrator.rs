//! End-to-end pipeline as an explicit stage machine with a bounded revision
//! loop, an audit trail, user feedback re-ranking, and ablation runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::backends::{BackendDescriptor, Backends, Generator, DEFAULT_MAX_OUTPUT_CHARS, DEFAULT_TEMPERATURE};
use crate::clock::Clock;
use crate::compliance::{ClauseStatus, ComplianceAgent, ComplianceReport, Lexicon, Overall, Thresholds};
use crate::draft::{self, parse_model_output, DraftError, DraftRequest, FieldError, RequirementSpec, SectionKey, SowDraft};
use crate::ragchain::{
    build_context, render_prompt, AugmentedPrompt, PromptTemplate, RetrievalContext, RetrievalParams, DRAFT_FOOTER,
    DRAFT_HEADER,
};
use crate::validation::{
    addressed_items, apply_formatting, decide, render, requirement_items, Decision, RenderFormat, RenderedDocument,
    Severity, ValidationAgent, ValidationError, ValidationIssue, ValidationKind, ValidationReport, Verdict,
};
use crate::vecstore::{ClauseIndex, ClauseStore, DEFAULT_DIM, DEFAULT_FEEDBACK_ALPHA, DEFAULT_MIN_SCORE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid pipeline config: {0}")]
pub struct ConfigError(pub String);

/// Backend choice for each model role.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleBackends {
    pub generation: BackendDescriptor,
    pub classification: BackendDescriptor,
    pub embedding: BackendDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub similarity_min: f64,
    pub k: usize,
    pub context_budget: usize,
    pub clause_strong: f64,
    pub clause_weak: f64,
    pub completeness_min: f64,
    pub max_revisions: u32,
    pub required_keys: Vec<SectionKey>,
    pub embedding_dim: usize,
    pub feedback_alpha: f64,
    pub seed: u64,
    pub temperature: f64,
    pub max_output_chars: usize,
    pub backends: RoleBackends,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            similarity_min: DEFAULT_MIN_SCORE,
            k: crate::ragchain::DEFAULT_K,
            context_budget: crate::ragchain::DEFAULT_CONTEXT_BUDGET,
            clause_strong: 0.75,
            clause_weak: 0.40,
            completeness_min: crate::validation::DEFAULT_COMPLETENESS_THRESHOLD,
            max_revisions: 2,
            required_keys: SectionKey::ALL.to_vec(),
            embedding_dim: DEFAULT_DIM,
            feedback_alpha: DEFAULT_FEEDBACK_ALPHA,
            seed: 0,
            temperature: DEFAULT_TEMPERATURE,
            max_output_chars: DEFAULT_MAX_OUTPUT_CHARS,
            backends: RoleBackends::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) { Ok(()) } else { Err(ConfigError(format!("{name} must lie in [0, 1], got {v}"))) }
        };
        unit("similarity_min", self.similarity_min)?;
        unit("completeness_min", self.completeness_min)?;
        if !(0.0 <= self.clause_weak && self.clause_weak < self.clause_strong && self.clause_strong <= 1.0) {
            return Err(ConfigError(format!(
                "need 0 <= clause_weak < clause_strong <= 1, got {} and {}",
                self.clause_weak, self.clause_strong
            )));
        }
        if !(self.feedback_alpha >= 0.0 && self.feedback_alpha.is_finite()) {
            return Err(ConfigError(format!("feedback_alpha must be >= 0, got {}", self.feedback_alpha)));
        }
        if self.embedding_dim == 0 {
            return Err(ConfigError("embedding_dim must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.required_keys.is_empty() {
            return Err(ConfigError("required_keys must not be empty".into()));
        }
        let unique: BTreeSet<_> = self.required_keys.iter().collect();
        if unique.len() != self.required_keys.len() {
            return Err(ConfigError("required_keys must not repeat".into()));
        }
        for d in [&self.backends.generation, &self.backends.classification, &self.backends.embedding] {
            d.validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        Ok(())
    }

    pub fn max_iterations(&self) -> u32 {
        self.max_revisions + 1
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds { strong: self.clause_strong, weak: self.clause_weak }
    }

    pub fn retrieval_params(&self) -> RetrievalParams {
        RetrievalParams { k: self.k, min_score: self.similarity_min, char_budget: self.context_budget }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    ValidateInput,
    RetrieveContext,
    Draft,
    ComplianceReview,
    Revise,
    FormatValidate,
    Emit,
    Failed,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub stage: Stage,
    pub entered_at: DateTime<Utc>,
    pub outcome: String,
}

/// Stage log. Timestamps are forced strictly increasing even if the clock
/// repeats a reading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuditTrail {
    pub entries: Vec<AuditEntry>,
}

impl AuditTrail {
    pub fn push(&mut self, stage: Stage, at: DateTime<Utc>, outcome: impl Into<String>) {
        let at = match self.entries.last() {
            Some(last) if at <= last.entered_at => last.entered_at + Duration::microseconds(1),
            _ => at,
        };
        self.entries.push(AuditEntry { stage, entered_at: at, outcome: outcome.into() });
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.entries.iter().map(|e| e.stage).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineFailure {
    pub stage: Stage,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub field_errors: Vec<FieldError>,
}

/// Modules an ablation run can switch off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Rag,
    Compliance,
    Formatting,
}

impl Module {
    pub const ALL: [Module; 3] = [Module::Rag, Module::Compliance, Module::Formatting];

    pub fn as_str(self) -> &'static str {
        match self {
            Module::Rag => "rag",
            Module::Compliance => "compliance",
            Module::Formatting => "formatting",
        }
    }
}

impl FromStr for Module {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Module::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| ConfigError(format!("unknown module {s:?}; expected rag, compliance or formatting")))
    }
}

/// Everything a pipeline run produced, including partial results on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub sow_id: String,
    pub status: RunStatus,
    pub iteration: u32,
    pub draft: Option<SowDraft>,
    pub compliance: Option<ComplianceReport>,
    pub validation: Option<ValidationReport>,
    pub rendered: Option<RenderedDocument>,
    pub audit: AuditTrail,
    pub prompt: Option<AugmentedPrompt>,
    pub generation_calls: u32,
    pub failure: Option<PipelineFailure>,
    pub disabled: BTreeSet<Module>,
}

impl PipelineRun {
    pub fn verdict(&self) -> Option<Verdict> {
        self.validation.as_ref().map(|v| v.verdict)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReviseError {
    #[error("nothing to revise: no missing or weak clause, absent field, or error issue")]
    NothingToRevise,
    #[error(transparent)]
    Draft(#[from] DraftError),
}

pub const REVISION_HEADER: &str = "REVISION REQUESTS:";

/// One line per problem the revision must address.
pub fn revision_requests(
    compliance: Option<&ComplianceReport>,
    issues: &[ValidationIssue],
    hypotheses: &[(crate::compliance::ClauseKey, String)],
) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(report) = compliance {
        for f in report.findings.iter().filter(|f| f.status != ClauseStatus::Strong) {
            let hypothesis = hypotheses
                .iter()
                .find(|(k, _)| *k == f.clause_key)
                .map_or_else(|| f.clause_key.default_hypothesis().to_string(), |(_, h)| h.clone());
            let status = if f.status == ClauseStatus::Missing { "missing" } else { "weak" };
            let locus = f.section_id.as_deref().unwrap_or("document");
            out.push(format!(
                "clause {} is {status} (score {:.2}) at {locus}; make this hold: \"{hypothesis}\"",
                f.clause_key, f.score
            ));
        }
        for c in report.field_checks.iter().filter(|c| !c.present) {
            let field = serde_json::to_value(c.field).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            out.push(format!("field {field} is absent at document: {}", c.detail));
        }
    }
    for i in issues.iter().filter(|i| i.severity == Severity::Error) {
        let kind = serde_json::to_value(i.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let locus = match &i.locus {
            crate::validation::Locus::Document => "document".to_string(),
            crate::validation::Locus::Section(id) => id.clone(),
        };
        out.push(format!("{kind} at {locus}: {}", i.detail));
    }
    out
}

/// Build the revision prompt for `current`: the original prompt, the list of
/// requested fixes, the current draft, and the original reference clauses.
pub fn revision_prompt(prompt: &AugmentedPrompt, current: &SowDraft, requests: &[String]) -> AugmentedPrompt {
    let mut user = String::from(
        "Revise the current draft so that every request below is resolved. Keep sections that need no change.\n\n",
    );
    user.push_str(REVISION_HEADER);
    for r in requests {
        user.push_str("\n- ");
        user.push_str(r);
    }
    user.push_str("\n\n");
    user.push_str(&prompt.user_content);
    user.push_str(&format!("\n\n{DRAFT_HEADER}\n{}\n{DRAFT_FOOTER}", current.to_json()));
    AugmentedPrompt { user_content: user, ..prompt.clone() }
}

/// One generation call that returns `current` revised, with its version
/// incremented.
#[allow(clippy::too_many_arguments)]
pub fn revise(
    current: &SowDraft,
    compliance: Option<&ComplianceReport>,
    issues: &[ValidationIssue],
    hypotheses: &[(crate::compliance::ClauseKey, String)],
    spec: &RequirementSpec,
    prompt: &AugmentedPrompt,
    backend: &dyn Generator,
    request: &DraftRequest<'_>,
) -> Result<SowDraft, ReviseError> {
    let requests = revision_requests(compliance, issues, hypotheses);
    if requests.is_empty() {
        return Err(ReviseError::NothingToRevise);
    }
    let revised_prompt = revision_prompt(prompt, current, &requests);
    let mut req = revised_prompt.to_request(request.seed);
    req.temperature = request.temperature;
    req.max_output_chars = request.max_output_chars;
    let output = backend.generate(&req).map_err(DraftError::from)?;
    let mut revised = parse_model_output(&output)?;
    draft::stamp(&mut revised, spec, prompt, request);
    revised.version = current.version + 1;
    Ok(revised)
}

/// Wires the agents together. Holds no per-run state, so one orchestrator
/// can serve concurrent runs.
#[derive(Clone)]
pub struct Orchestrator {
    config: PipelineConfig,
    backends: Backends,
    template: PromptTemplate,
    clock: Arc<dyn Clock>,
    compliance: ComplianceAgent,
    validation: ValidationAgent,
}

impl fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Orchestrator").field("config", &self.config).finish_non_exhaustive()
    }
}

struct RunState {
    run: PipelineRun,
    issues: Vec<ValidationIssue>,
}

impl Orchestrator {
    pub fn new(config: PipelineConfig, backends: Backends, clock: Arc<dyn Clock>) -> Result<Self, ConfigError> {
        let template = PromptTemplate::default_drafting();
        Self::with_template(config, backends, clock, template)
    }

    pub fn with_template(
        config: PipelineConfig,
        backends: Backends,
        clock: Arc<dyn Clock>,
        template: PromptTemplate,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        if backends.embedder.dim() != config.embedding_dim {
            return Err(ConfigError(format!(
                "embedder dimension {} differs from embedding_dim {}",
                backends.embedder.dim(),
                config.embedding_dim
            )));
        }
        let template = template.with_fixed_sections(config.required_keys.clone()).map_err(|e| ConfigError(e.to_string()))?;
        let compliance = ComplianceAgent { thresholds: config.thresholds(), ..ComplianceAgent::default() };
        let validation = ValidationAgent {
            required_keys: config.required_keys.clone(),
            completeness_threshold: config.completeness_min,
            expected_dim: config.embedding_dim,
        };
        Ok(Self { config, backends, template, clock, compliance, validation })
    }

    pub fn with_lexicon(mut self, lexicon: Lexicon) -> Self {
        self.compliance.lexicon = lexicon;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn run_pipeline(&self, spec: &RequirementSpec, sow_id: &str, store: &dyn ClauseIndex) -> PipelineRun {
        self.run_with(spec, sow_id, store, &BTreeSet::new())
    }

    /// A pipeline run with modules switched off, plus its completeness score.
    pub fn ablation_run(
        &self,
        spec: &RequirementSpec,
        sow_id: &str,
        store: &dyn ClauseIndex,
        disabled: &BTreeSet<Module>,
    ) -> Result<AblationResult, ValidationError> {
        let run = self.run_with(spec, sow_id, store, disabled);
        let completeness = match &run.draft {
            Some(d) => completeness(d, spec, &self.config.required_keys, self.backends.embedder.as_ref(), self.config.completeness_min)?,
            None => 0.0,
        };
        Ok(AblationResult { run, completeness })
    }

    fn run_with(&self, spec: &RequirementSpec, sow_id: &str, store: &dyn ClauseIndex, disabled: &BTreeSet<Module>) -> PipelineRun {
        let mut st = RunState {
            run: PipelineRun {
                sow_id: sow_id.to_string(),
                status: RunStatus::Failed,
                iteration: 1,
                draft: None,
                compliance: None,
                validation: None,
                rendered: None,
                audit: AuditTrail::default(),
                prompt: None,
                generation_calls: 0,
                failure: None,
                disabled: disabled.clone(),
            },
            issues: Vec::new(),
        };
        let request = DraftRequest {
            sow_id,
            seed: self.config.seed,
            temperature: self.config.temperature,
            max_output_chars: self.config.max_output_chars,
            clock: self.clock.as_ref(),
        };
        let max_iterations = self.config.max_iterations();
        let mut stage = Stage::ValidateInput;
        loop {
            let entered = self.clock.now();
            let (outcome, next) = match self.step(stage, spec, store, disabled, &request, max_iterations, &mut st) {
                Ok(step) => step,
                Err(failure) => {
                    let message = failure.message.clone();
                    st.run.failure = Some(failure);
                    (format!("error: {message}"), Stage::Failed)
                }
            };
            st.run.audit.push(stage, entered, outcome);
            match next {
                Stage::Failed => {
                    let reason = st.run.failure.as_ref().map_or_else(String::new, |f| format!("failed at {}", f.stage));
                    st.run.audit.push(Stage::Failed, self.clock.now(), reason);
                    st.run.status = RunStatus::Failed;
                    return st.run;
                }
                Stage::Emit => {
                    let draft = st.run.draft.as_ref().expect("draft exists before emit");
                    let rendered = render(draft, RenderFormat::Markdown);
                    st.run.audit.push(Stage::Emit, self.clock.now(), format!("rendered markdown {}", &rendered.checksum[..12]));
                    st.run.rendered = Some(rendered);
                    st.run.status = RunStatus::Complete;
                    return st.run;
                }
                other => stage = other,
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        stage: Stage,
        spec: &RequirementSpec,
        store: &dyn ClauseIndex,
        disabled: &BTreeSet<Module>,
        request: &DraftRequest<'_>,
        max_iterations: u32,
        st: &mut RunState,
    ) -> Result<(String, Stage), PipelineFailure> {
        let fail = |message: String| PipelineFailure { stage, message, field_errors: Vec::new() };
        match stage {
            Stage::ValidateInput => match draft::validate_input(spec) {
                Ok(()) => Ok(("input valid".into(), Stage::RetrieveContext)),
                Err(field_errors) => Err(PipelineFailure {
                    stage,
                    message: format!("{} field error(s)", field_errors.len()),
                    field_errors,
                }),
            },
            Stage::RetrieveContext => {
                let ctx = if disabled.contains(&Module::Rag) {
                    RetrievalContext::empty(crate::ragchain::query_text(spec), self.config.context_budget)
                } else {
                    build_context(spec, store, self.config.retrieval_params(), self.backends.embedder.as_ref())
                        .map_err(|e| fail(e.to_string()))?
                };
                let prompt = render_prompt(&self.template, spec, &ctx).map_err(|e| fail(e.to_string()))?;
                let outcome = if disabled.contains(&Module::Rag) {
                    "retrieval disabled; empty context".to_string()
                } else {
                    format!("{} clause(s), {} chars", ctx.hits.len(), ctx.total_chars())
                };
                st.run.prompt = Some(prompt);
                Ok((outcome, Stage::Draft))
            }
            Stage::Draft => {
                let prompt = st.run.prompt.as_ref().expect("prompt rendered before drafting");
                st.run.generation_calls += 1;
                let d = draft::draft(spec, prompt, self.backends.generator.as_ref(), request).map_err(|e| fail(e.to_string()))?;
                let outcome = format!("version {} with {} section(s)", d.version, d.sections.len());
                st.run.draft = Some(d);
                Ok((outcome, Stage::ComplianceReview))
            }
            Stage::ComplianceReview => {
                if disabled.contains(&Module::Compliance) {
                    return Ok(("skipped".into(), Stage::FormatValidate));
                }
                let d = st.run.draft.as_ref().expect("draft exists");
                let report = self.compliance.review(d, self.backends.classifier.as_ref()).map_err(|e| fail(e.to_string()))?;
                let overall = report.overall;
                st.run.compliance = Some(report);
                let next = if overall == Overall::Fail && st.run.iteration < max_iterations {
                    st.issues.clear();
                    Stage::Revise
                } else {
                    Stage::FormatValidate
                };
                Ok((format!("overall {}", overall_str(overall)), next))
            }
            Stage::FormatValidate => {
                let d = st.run.draft.as_ref().expect("draft exists");
                let issues = self.validation.validate(d, spec, self.backends.embedder.as_ref()).map_err(|e| fail(e.to_string()))?;
                let decision = decide(st.run.compliance.as_ref(), &issues, st.run.iteration, max_iterations);
                let mut fixes_applied = Vec::new();
                if decision == Decision::AcceptWithFixes && !disabled.contains(&Module::Formatting) {
                    let formatted = apply_formatting(d);
                    fixes_applied = issues
                        .iter()
                        .filter(|i| i.kind == ValidationKind::Style)
                        .map(|i| i.detail.clone())
                        .collect();
                    if fixes_applied.is_empty() && formatted != *d {
                        fixes_applied.push("normalized formatting".into());
                    }
                    st.run.draft = Some(formatted);
                }
                st.run.validation = Some(ValidationReport { issues: issues.clone(), fixes_applied, verdict: decision.verdict() });
                st.issues = issues;
                let outcome = format!("{} issue(s); {:?}", st.issues.len(), decision);
                match decision {
                    Decision::Accept | Decision::AcceptWithFixes => Ok((outcome, Stage::Emit)),
                    Decision::Revise => Ok((outcome, Stage::Revise)),
                    Decision::RejectFinal => {
                        Err(PipelineFailure { stage, message: "rejected after the final revision".into(), field_errors: Vec::new() })
                    }
                }
            }
            Stage::Revise => {
                let current = st.run.draft.as_ref().expect("draft exists");
                let prompt = st.run.prompt.as_ref().expect("prompt exists");
                st.run.generation_calls += 1;
                let revised = revise(
                    current,
                    st.run.compliance.as_ref(),
                    &st.issues,
                    &self.compliance.hypotheses,
                    spec,
                    prompt,
                    self.backends.generator.as_ref(),
                    request,
                )
                .map_err(|e| fail(e.to_string()))?;
                st.run.iteration += 1;
                let outcome = format!("version {}; iteration {}", revised.version, st.run.iteration);
                st.run.draft = Some(revised);
                Ok((outcome, Stage::ComplianceReview))
            }
            Stage::Emit | Stage::Failed => unreachable!("terminal stages are handled by the run loop"),
        }
    }
}

fn overall_str(o: Overall) -> &'static str {
    match o {
        Overall::Pass => "pass",
        Overall::Warn => "warn",
        Overall::Fail => "fail",
    }
}

/// (required keys present with a non-empty body + requirement items
/// addressed) / (required keys + requirement items).
pub fn completeness(
    draft: &SowDraft,
    spec: &RequirementSpec,
    required_keys: &[SectionKey],
    embedder: &dyn crate::backends::Embedder,
    threshold: f64,
) -> Result<f64, ValidationError> {
    let present = required_keys
        .iter()
        .filter(|k| draft.section(**k).is_some_and(|s| !s.body.trim().is_empty()))
        .count();
    let items = requirement_items(spec);
    let addressed = addressed_items(draft, &items, embedder, threshold)?.into_iter().filter(|a| *a).count();
    let total = required_keys.len() + items.len();
    Ok(if total == 0 { 1.0 } else { (present + addressed) as f64 / total as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub run: PipelineRun,
    pub completeness: f64,
}

/// One CSV row per ablation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub run_id: String,
    pub disabled_set: String,
    pub completeness: f64,
    pub verdict: String,
}

impl AblationRow {
    pub fn new(run_id: impl Into<String>, disabled: &BTreeSet<Module>, result: &AblationResult) -> Self {
        let disabled_set = if disabled.is_empty() {
            "none".to_string()
        } else {
            disabled.iter().map(|m| m.as_str()).collect::<Vec<_>>().join("+")
        };
        let verdict = match result.run.verdict() {
            Some(Verdict::Accept) => "accept",
            Some(Verdict::AcceptWithFixes) => "accept_with_fixes",
            Some(Verdict::Reject) | None => "reject",
        };
        Self { run_id: run_id.into(), disabled_set, completeness: result.completeness, verdict: verdict.into() }
    }
}

/// Header plus one line per row.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

/// A user rating: -1, 0 or +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Rating(i8);

impl Rating {
    pub fn value(self) -> i8 {
        self.0
    }
}

impl TryFrom<i64> for Rating {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        match v {
            -1..=1 => Ok(Rating(v as i8)),
            _ => Err(format!("rating must be -1, 0 or 1, got {v}")),
        }
    }
}

impl From<Rating> for i64 {
    fn from(r: Rating) -> i64 {
        r.0 as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub sow_id: String,
    #[serde(default)]
    pub section_id: Option<String>,
    pub rating: Rating,
    #[serde(default)]
    pub comment: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeedbackError {
    #[error("unknown sow_id {0:?}")]
    UnknownSow(String),
    #[error("section {section_id:?} does not exist in {sow_id:?}")]
    UnknownSection { sow_id: String, section_id: String },
}

/// All feedback received, with a running (sum, count) per clause.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBook {
    pub records: Vec<FeedbackRecord>,
    pub tallies: BTreeMap<String, (f64, u64)>,
}

impl FeedbackBook {
    pub fn average(&self, clause_id: &str) -> Option<f64> {
        self.tallies.get(clause_id).map(|(sum, n)| sum / *n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub sow_id: String,
    pub section_id: Option<String>,
    /// Clauses whose average changed, with the new average.
    pub updated: BTreeMap<String, f64>,
}

/// Record a rating and recompute the running mean of every clause behind the
/// rated section (or behind the whole draft when no section is named).
/// Clauses no longer in the store are skipped.
pub fn record_feedback(
    fb: FeedbackRecord,
    draft: Option<&SowDraft>,
    book: &mut FeedbackBook,
    store: &mut ClauseStore,
) -> Result<FeedbackAck, FeedbackError> {
    let draft = draft.ok_or_else(|| FeedbackError::UnknownSow(fb.sow_id.clone()))?;
    let clause_ids: BTreeSet<String> = match &fb.section_id {
        Some(id) => draft
            .section_by_id(id)
            .ok_or_else(|| FeedbackError::UnknownSection { sow_id: fb.sow_id.clone(), section_id: id.clone() })?
            .provenance
            .iter()
            .cloned()
            .collect(),
        None => draft.sections.iter().flat_map(|s| s.provenance.iter().cloned()).collect(),
    };
    let mut updated = BTreeMap::new();
    for id in clause_ids {
        if store.get(&id).is_none() {
            continue;
        }
        let tally = book.tallies.entry(id.clone()).or_insert((0.0, 0));
        tally.0 += fb.rating.value() as f64;
        tally.1 += 1;
        let avg = tally.0 / tally.1 as f64;
        store.set_feedback(&id, avg).expect("clause exists and average is within [-1, 1]");
        updated.insert(id, avg);
    }
    let ack = FeedbackAck { sow_id: fb.sow_id.clone(), section_id: fb.section_id.clone(), updated };
    book.records.push(fb);
    Ok(ack)
}
