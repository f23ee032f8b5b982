//! Deterministic offline backends.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::{check_embed_inputs, BackendError, ClassificationRequest, Classifier, Embedder, GenerationRequest, Generator};
use crate::draft::{DraftMetadata, DraftSection, SectionKey, SowDraft};
use crate::ragchain::{ParsedPrompt, PromptClause};
use crate::text::folded_word_set;
use crate::vecstore::Embedding;

/// Builds a schema-valid draft from the structured blocks of a rendered
/// prompt. Bodies come from the project variables and the reference clauses;
/// the seed only picks the wording of the opening sentence.
#[derive(Debug, Default)]
pub struct StubGenerator {
    calls: AtomicUsize,
}

impl StubGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Generator for StubGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = ParsedPrompt::parse(&req.user_content);
        if prompt.required_sections.is_empty() {
            return Err(BackendError::InvalidRequest("prompt carries no required-section list".into()));
        }
        let draft = match &prompt.current_draft {
            Some(current) => stub_revision(current.clone(), &prompt),
            None => stub_draft(&prompt, req.seed),
        };
        Ok(serde_json::to_string_pretty(&draft).expect("draft serializes"))
    }
}

fn var<'a>(prompt: &'a ParsedPrompt, name: &str) -> Option<&'a str> {
    prompt.variables.get(name).map(String::as_str).filter(|s| !s.is_empty())
}

fn clauses_for(prompt: &ParsedPrompt, key: SectionKey) -> Vec<&PromptClause> {
    prompt.clauses.iter().filter(|c| c.canonical_key == Some(key)).collect()
}

/// Body and provenance for one section. Legal clause sections are left empty
/// when no reference clause exists for them.
fn section_content(prompt: &ParsedPrompt, key: SectionKey, seed: u64) -> (String, Vec<String>) {
    let client = var(prompt, "client_name").unwrap_or("the Client");
    let vendor = var(prompt, "vendor_name").unwrap_or("the Vendor");
    let title = var(prompt, "project_title").unwrap_or("the project");
    let mut parts: Vec<String> = Vec::new();
    match key {
        SectionKey::ScopeOfWork => {
            parts.push(match seed % 3 {
                0 => format!("{vendor} will provide {client} with the services described in this Statement of Work for the project \"{title}\"."),
                1 => format!("This Statement of Work describes the services {vendor} will perform for {client} under the project \"{title}\"."),
                _ => format!("Under this Statement of Work, {vendor} will carry out the project \"{title}\" for {client}."),
            });
            if let Some(goals) = var(prompt, "goals") {
                parts.push(format!("Project goals: {goals}"));
            }
        }
        SectionKey::Deliverables => {
            if let Some(list) = var(prompt, "deliverables") {
                parts.push(format!("{vendor} shall provide the following deliverables:\n{list}"));
            }
        }
        SectionKey::Timeline => match (var(prompt, "start_date"), var(prompt, "end_date")) {
            (Some(start), Some(end)) => parts.push(format!("The engagement starts on {start} and ends on {end}.")),
            (Some(start), None) => parts.push(format!("The engagement starts on {start}.")),
            _ => {}
        },
        SectionKey::Responsibilities => {
            parts.push(format!(
                "{vendor} shall staff, manage and perform the work needed to produce each deliverable. \
                 {client} shall give {vendor} access to the systems, data and staff the work requires."
            ));
            if let Some(special) = var(prompt, "special_requirements") {
                parts.push(format!("{vendor} shall also meet these requirements:\n{special}"));
            }
        }
        SectionKey::PaymentTerms => {
            if let Some(terms) = var(prompt, "payment_terms") {
                parts.push(terms.to_string());
            }
        }
        SectionKey::AcceptanceCriteria => {
            if clauses_for(prompt, key).is_empty() {
                parts.push(format!(
                    "{client} shall review each deliverable within ten business days of delivery and either accept it in writing or return written comments."
                ));
            }
        }
        SectionKey::Signatures => {
            parts.push(format!("Signed for {client}: ____________________  Date: __________"));
            parts.push(format!("Signed for {vendor}: ____________________  Date: __________"));
        }
        SectionKey::Confidentiality | SectionKey::Liability | SectionKey::Termination => {}
    }
    let mut provenance = Vec::new();
    for clause in clauses_for(prompt, key) {
        parts.push(clause.text.clone());
        provenance.push(clause.clause_id.clone());
    }
    (parts.join("\n\n"), provenance)
}

fn stub_draft(prompt: &ParsedPrompt, seed: u64) -> SowDraft {
    let sections = prompt
        .required_sections
        .iter()
        .enumerate()
        .map(|(i, &key)| {
            let (body, provenance) = section_content(prompt, key, seed);
            DraftSection {
                id: format!("sec-{}", key.as_str()),
                key,
                title: key.title().to_string(),
                body,
                provenance,
                order: i as u32,
            }
        })
        .collect();
    SowDraft {
        sow_id: String::new(),
        version: 1,
        metadata: DraftMetadata {
            project_title: var(prompt, "project_title").unwrap_or_default().to_string(),
            client: var(prompt, "client_name").unwrap_or_default().to_string(),
            vendor: var(prompt, "vendor_name").unwrap_or_default().to_string(),
            effective_date: var(prompt, "start_date").unwrap_or_default().to_string(),
            generated_at: String::new(),
        },
        sections,
    }
}

/// Fill required sections that are absent or empty, and append reference
/// clauses to sections that cite none of them.
fn stub_revision(mut draft: SowDraft, prompt: &ParsedPrompt) -> SowDraft {
    for &key in &prompt.required_sections {
        let available = clauses_for(prompt, key);
        match draft.sections.iter_mut().find(|s| s.key == key) {
            None => {
                let (body, provenance) = section_content(prompt, key, 0);
                let order = draft.sections.iter().map(|s| s.order + 1).max().unwrap_or(0);
                draft.sections.push(DraftSection {
                    id: format!("sec-{}", key.as_str()),
                    key,
                    title: key.title().to_string(),
                    body,
                    provenance,
                    order,
                });
            }
            Some(section) if section.body.trim().is_empty() => {
                let (body, provenance) = section_content(prompt, key, 0);
                section.body = body;
                section.provenance = provenance;
            }
            Some(section) => {
                let cited = available.iter().any(|c| section.provenance.contains(&c.clause_id));
                if !cited && !available.is_empty() {
                    for clause in available {
                        section.body.push_str("\n\n");
                        section.body.push_str(&clause.text);
                        section.provenance.push(clause.clause_id.clone());
                    }
                }
            }
        }
    }
    draft
}

/// Replays canned responses in order; the last one repeats once exhausted.
#[derive(Debug)]
pub struct ScriptedGenerator {
    responses: Vec<String>,
    calls: AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new(responses: Vec<String>) -> Self {
        assert!(!responses.is_empty(), "ScriptedGenerator needs at least one response");
        Self { responses, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, _req: &GenerationRequest) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.responses[n.min(self.responses.len() - 1)].clone())
    }
}

/// Zero-shot stand-in: the score of a hypothesis is the fraction of its
/// keyword set found among the premise's case-folded words.
#[derive(Debug, Clone)]
pub struct KeywordClassifier {
    keywords: BTreeMap<String, BTreeSet<String>>,
}

const HYPOTHESIS_STOPWORDS: &[&str] = &["this", "text", "that", "with", "between", "the", "and", "for", "defines", "establishes"];

impl KeywordClassifier {
    pub fn new(keywords: BTreeMap<String, BTreeSet<String>>) -> Self {
        let keywords = keywords
            .into_iter()
            .map(|(h, set)| (h, set.into_iter().map(|w| w.to_lowercase()).collect()))
            .collect();
        Self { keywords }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let table: BTreeMap<String, BTreeSet<String>> =
            serde_json::from_str(text).map_err(|e| BackendError::Config(format!("keyword table: {e}")))?;
        Ok(Self::new(table))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Config(e.to_string()))?;
        Self::from_json(&text)
    }

    /// Keyword set for a hypothesis; unknown hypotheses fall back to their own
    /// content words.
    pub fn keywords_for(&self, hypothesis: &str) -> BTreeSet<String> {
        self.keywords.get(hypothesis).cloned().unwrap_or_else(|| {
            folded_word_set(hypothesis)
                .into_iter()
                .filter(|w| w.chars().count() >= 4 && !HYPOTHESIS_STOPWORDS.contains(&w.as_str()))
                .collect()
        })
    }
}

impl Default for KeywordClassifier {
    fn default() -> Self {
        Self::from_json(include_str!("../../data/stub_keywords.json")).expect("bundled keyword table")
    }
}

impl Classifier for KeywordClassifier {
    fn classify(&self, req: &ClassificationRequest) -> Result<Vec<f64>, BackendError> {
        if req.hypotheses.is_empty() {
            return Err(BackendError::InvalidRequest("at least one hypothesis is required".into()));
        }
        let premise = folded_word_set(&req.premise);
        Ok(req
            .hypotheses
            .iter()
            .map(|h| {
                let keys = self.keywords_for(h);
                if keys.is_empty() {
                    return 0.0;
                }
                let hits = keys.iter().filter(|k| premise.contains(*k)).count();
                (hits as f64 / keys.len() as f64).clamp(0.0, 1.0)
            })
            .collect())
    }
}

/// Feature-hashing bag of words, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    fn bucket(&self, token: &str) -> usize {
        let digest = Sha256::digest(token.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % self.dim as u64) as usize
    }

    fn embed_text(&self, text: &str) -> Embedding {
        let mut counts = vec![0.0f64; self.dim];
        let mut any = false;
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            counts[self.bucket(&token.to_lowercase())] += 1.0;
            any = true;
        }
        if !any {
            // punctuation-only text still gets a deterministic direction
            counts[self.bucket(text.trim())] = 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        Embedding::new(counts.into_iter().map(|c| c / norm).collect()).expect("finite by construction")
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError> {
        check_embed_inputs(texts)?;
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}
