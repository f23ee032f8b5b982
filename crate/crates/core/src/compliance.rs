//! Compliance review: clause presence and strength, language lint, required
//! field checks, and the overall verdict.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, ClassificationRequest, Classifier};
use crate::draft::{SectionKey, SowDraft};
use crate::ingest::{EntityExtractor, EntityKind};
use crate::text::{word_tokens, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKey {
    Confidentiality,
    Liability,
    Termination,
}

impl ClauseKey {
    pub const ALL: [ClauseKey; 3] = [ClauseKey::Confidentiality, ClauseKey::Liability, ClauseKey::Termination];

    pub fn as_str(self) -> &'static str {
        match self {
            ClauseKey::Confidentiality => "confidentiality",
            ClauseKey::Liability => "liability",
            ClauseKey::Termination => "termination",
        }
    }

    pub fn section_key(self) -> SectionKey {
        match self {
            ClauseKey::Confidentiality => SectionKey::Confidentiality,
            ClauseKey::Liability => SectionKey::Liability,
            ClauseKey::Termination => SectionKey::Termination,
        }
    }

    pub fn default_hypothesis(self) -> &'static str {
        match self {
            ClauseKey::Confidentiality => "This text establishes a confidentiality or non-disclosure obligation.",
            ClauseKey::Liability => "This text limits or allocates liability between the parties.",
            ClauseKey::Termination => "This text defines conditions for terminating the agreement.",
        }
    }
}

impl fmt::Display for ClauseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseStatus {
    Missing,
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseFinding {
    pub clause_key: ClauseKey,
    pub status: ClauseStatus,
    pub score: f64,
    pub section_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    PassiveVoice,
    VagueTerm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageIssue {
    pub kind: IssueKind,
    pub section_id: String,
    pub span: Span,
    pub excerpt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckedField {
    ProjectTitle,
    Dates,
    PaymentTerms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldCheck {
    pub field: CheckedField,
    pub present: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub findings: Vec<ClauseFinding>,
    pub issues: Vec<LanguageIssue>,
    pub field_checks: Vec<FieldCheck>,
    pub overall: Overall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub strong: f64,
    pub weak: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { strong: 0.75, weak: 0.40 }
    }
}

impl Thresholds {
    pub fn status(&self, score: f64) -> ClauseStatus {
        if score >= self.strong {
            ClauseStatus::Strong
        } else if score >= self.weak {
            ClauseStatus::Weak
        } else {
            ClauseStatus::Missing
        }
    }
}

/// Score every section against every clause hypothesis (one classifier call
/// per section) and keep the best section per key. Ties go to the earlier
/// section.
pub fn check_clauses(
    draft: &SowDraft,
    classifier: &dyn Classifier,
    hypotheses: &[(ClauseKey, String)],
    thresholds: Thresholds,
) -> Result<Vec<ClauseFinding>, BackendError> {
    let mut best: Vec<(f64, Option<&str>)> = vec![(0.0, None); hypotheses.len()];
    if !hypotheses.is_empty() {
        let req_hypotheses: Vec<String> = hypotheses.iter().map(|(_, h)| h.clone()).collect();
        for section in draft.ordered_sections() {
            let scores = classifier
                .classify(&ClassificationRequest { premise: section.body.clone(), hypotheses: req_hypotheses.clone() })?;
            if scores.len() != hypotheses.len() {
                return Err(BackendError::InvalidResponse(format!(
                    "expected {} scores, got {}",
                    hypotheses.len(),
                    scores.len()
                )));
            }
            for (slot, score) in best.iter_mut().zip(scores) {
                let score = score.clamp(0.0, 1.0);
                if slot.1.is_none() || score > slot.0 {
                    *slot = (score, Some(section.id.as_str()));
                }
            }
        }
    }
    Ok(hypotheses
        .iter()
        .zip(best)
        .map(|((key, _), (score, section))| {
            let status = thresholds.status(score);
            ClauseFinding {
                clause_key: *key,
                status,
                score,
                section_id: if status == ClauseStatus::Missing { None } else { section.map(str::to_string) },
            }
        })
        .collect())
}

const BE_FORMS: &[&str] = &["is", "are", "was", "were", "be", "been", "being"];
const ED_EXCEPTIONS: &[&str] =
    &["need", "feed", "seed", "speed", "indeed", "embed", "bed", "red", "shed", "hundred", "proceed", "succeed", "exceed"];
const CLAUSE_BREAKS: &[char] = &['.', '!', '?', ';', ':'];

/// Word lists used by the language lint.
#[derive(Debug, Clone)]
pub struct Lexicon {
    vague_terms: Vec<Vec<char>>,
    irregular_participles: BTreeSet<String>,
}

fn word_list(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

impl Lexicon {
    pub fn new<'a>(vague_terms: impl IntoIterator<Item = &'a str>, participles: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vague_terms: Vec<Vec<char>> =
            vague_terms.into_iter().map(|t| t.chars().flat_map(char::to_lowercase).collect()).collect();
        // longest first so the longest match at a position wins
        vague_terms.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        vague_terms.dedup();
        Self {
            vague_terms,
            irregular_participles: participles.into_iter().map(str::to_lowercase).collect(),
        }
    }

    pub fn from_text(vague_terms: &str, participles: &str) -> Self {
        Self::new(word_list(vague_terms), word_list(participles))
    }

    pub fn load(vague_path: impl AsRef<Path>, participle_path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(vague_path)?, &std::fs::read_to_string(participle_path)?))
    }

    pub fn is_participle(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        if self.irregular_participles.contains(&w) {
            return true;
        }
        w.ends_with("ed") && w.chars().count() > 3 && !ED_EXCEPTIONS.contains(&w.as_str())
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_text(include_str!("../data/vague_terms.txt"), include_str!("../data/irregular_participles.txt"))
    }
}

/// Passive-voice spans in `body`: a form of "be" followed within two words by
/// a participle, without crossing a clause break.
pub fn passive_spans(body: &str, lexicon: &Lexicon) -> Vec<Span> {
    let chars: Vec<char> = body.chars().collect();
    let tokens = word_tokens(body);
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let be = &tokens[i];
        if !BE_FORMS.iter().any(|f| f.eq_ignore_ascii_case(be.text)) {
            i += 1;
            continue;
        }
        let mut matched = None;
        for j in i + 1..tokens.len().min(i + 3) {
            if chars[tokens[j - 1].end..tokens[j].start].iter().any(|c| CLAUSE_BREAKS.contains(c)) {
                break;
            }
            if lexicon.is_participle(tokens[j].text) {
                matched = Some(j);
                break;
            }
        }
        match matched {
            Some(j) => {
                spans.push(Span { start: be.start, end: tokens[j].end });
                i = j + 1;
            }
            None => i += 1,
        }
    }
    spans
}

/// Vague-term spans in `body`, case-insensitive, on word boundaries, longest
/// match first, non-overlapping.
pub fn vague_spans(body: &str, lexicon: &Lexicon) -> Vec<Span> {
    let chars: Vec<char> = body.chars().collect();
    let lower: Vec<char> = chars.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
    let boundary = |i: usize| i >= chars.len() || !chars[i].is_alphanumeric();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        if i > 0 && chars[i - 1].is_alphanumeric() {
            i += 1;
            continue;
        }
        let hit = lexicon.vague_terms.iter().find(|term| {
            lower.len() >= i + term.len()
                && lower[i..i + term.len()] == term[..]
                && (boundary(i + term.len()) || !term.last().is_some_and(|c| c.is_alphanumeric()))
        });
        match hit {
            Some(term) => {
                spans.push(Span { start: i, end: i + term.len() });
                i += term.len();
            }
            None => i += 1,
        }
    }
    spans
}

/// Lint every section body. Issues are ordered by section order, then span
/// start.
pub fn lint_language(draft: &SowDraft, lexicon: &Lexicon) -> Vec<LanguageIssue> {
    let mut issues = Vec::new();
    for section in draft.ordered_sections() {
        let chars: Vec<char> = section.body.chars().collect();
        let mut local: Vec<(Span, IssueKind)> = passive_spans(&section.body, lexicon)
            .into_iter()
            .map(|s| (s, IssueKind::PassiveVoice))
            .chain(vague_spans(&section.body, lexicon).into_iter().map(|s| (s, IssueKind::VagueTerm)))
            .collect();
        local.sort_by_key(|(s, k)| (s.start, *k, s.end));
        issues.extend(local.into_iter().map(|(span, kind)| LanguageIssue {
            kind,
            section_id: section.id.clone(),
            excerpt: chars[span.start..span.end].iter().collect(),
            span,
        }));
    }
    issues
}

pub fn check_fields(draft: &SowDraft) -> Vec<FieldCheck> {
    let title = draft.metadata.project_title.trim();
    let extractor = EntityExtractor::default();
    let first_date = |text: &str| {
        extractor.extract_text(text).into_iter().find(|e| e.kind == EntityKind::Date).map(|e| e.surface)
    };
    let date_detail = first_date(&draft.metadata.effective_date)
        .map(|d| format!("effective date {d}"))
        .or_else(|| {
            draft
                .section(SectionKey::Timeline)
                .and_then(|s| first_date(&s.body))
                .map(|d| format!("timeline mentions {d}"))
        });
    let payment = draft.section(SectionKey::PaymentTerms);
    vec![
        FieldCheck {
            field: CheckedField::ProjectTitle,
            present: !title.is_empty(),
            detail: if title.is_empty() { "metadata.project_title is empty".into() } else { title.to_string() },
        },
        FieldCheck {
            field: CheckedField::Dates,
            present: date_detail.is_some(),
            detail: date_detail.unwrap_or_else(|| "no parseable date in metadata or timeline".into()),
        },
        match payment {
            Some(s) if !s.body.trim().is_empty() => {
                FieldCheck { field: CheckedField::PaymentTerms, present: true, detail: format!("section {}", s.id) }
            }
            Some(s) => {
                FieldCheck { field: CheckedField::PaymentTerms, present: false, detail: format!("section {} is empty", s.id) }
            }
            None => FieldCheck { field: CheckedField::PaymentTerms, present: false, detail: "no payment_terms section".into() },
        },
    ]
}

pub fn compile_report(findings: Vec<ClauseFinding>, issues: Vec<LanguageIssue>, field_checks: Vec<FieldCheck>) -> ComplianceReport {
    let overall = if findings.iter().any(|f| f.status == ClauseStatus::Missing) || field_checks.iter().any(|c| !c.present) {
        Overall::Fail
    } else if findings.iter().any(|f| f.status == ClauseStatus::Weak) || !issues.is_empty() {
        Overall::Warn
    } else {
        Overall::Pass
    };
    ComplianceReport { findings, issues, field_checks, overall }
}

/// The compliance stage with its configuration.
#[derive(Debug, Clone)]
pub struct ComplianceAgent {
    pub thresholds: Thresholds,
    pub hypotheses: Vec<(ClauseKey, String)>,
    pub lexicon: Lexicon,
}

impl Default for ComplianceAgent {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            hypotheses: ClauseKey::ALL.iter().map(|k| (*k, k.default_hypothesis().to_string())).collect(),
            lexicon: Lexicon::default(),
        }
    }
}

impl ComplianceAgent {
    pub fn review(&self, draft: &SowDraft, classifier: &dyn Classifier) -> Result<ComplianceReport, BackendError> {
        let findings = check_clauses(draft, classifier, &self.hypotheses, self.thresholds)?;
        Ok(compile_report(findings, lint_language(draft, &self.lexicon), check_fields(draft)))
    }
}
