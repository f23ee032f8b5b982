//! Retrieval-grounded Statement of Work drafting with compliance review,
//! validation and a bounded revision loop.
//!
//! Data flows `ingest` → `vecstore` → `ragchain` → `draft` → `compliance` →
//! `validation`, driven by `orchestrator`. Model access goes through the
//! traits in `backends`.

pub mod backends;
pub mod clock;
pub mod compliance;
pub mod config;
pub mod draft;
pub mod ingest;
pub mod orchestrator;
pub mod ragchain;
pub mod text;
pub mod validation;
pub mod vecstore;

pub use backends::{BackendDescriptor, BackendError, BackendKind, Backends, Classifier, Embedder, Generator};
pub use clock::{Clock, SteppingClock, SystemClock};
pub use compliance::{ClauseFinding, ClauseKey, ClauseStatus, ComplianceReport, LanguageIssue, Overall};
pub use config::AppConfig;
pub use draft::{Deliverable, DraftSection, FieldError, RequirementSpec, SectionKey, SowDraft};
pub use ingest::{IngestInput, IngestSummary};
pub use orchestrator::{
    AuditTrail, FeedbackRecord, Module, Orchestrator, PipelineConfig, PipelineRun, Rating, RunStatus, Stage,
};
pub use text::Span;
pub use validation::{RenderFormat, RenderedDocument, ValidationIssue, ValidationReport, Verdict};
pub use vecstore::{ClauseIndex, ClauseRecord, ClauseStore, Embedding, RetrievalHit, SharedStore};
