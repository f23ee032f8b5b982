//! Corpus ingestion: normalization, section segmentation, rule-based entity
//! extraction, anonymization, and turning sections into clause records.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::backends::{BackendError, Embedder};
use crate::clock::Clock;
use crate::draft::SectionKey;
pub use crate::text::Span;
use crate::text::CharIndex;
use crate::vecstore::{ClauseRecord, ClauseStore, VecStoreError};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("entities overlap: [{}, {}) and [{}, {})", .first.start, .first.end, .second.start, .second.end)]
    OverlappingEntities { first: Span, second: Span },
    #[error("entity span [{}, {}) is outside the document", .0.start, .0.end)]
    InvalidSpan(Span),
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Embed(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] VecStoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub raw_text: String,
    pub origin: String,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSection {
    pub section_id: String,
    pub heading: Option<String>,
    pub body: String,
    pub order: usize,
    pub detected_key: Option<SectionKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Date,
    Money,
    Party,
    Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NormalizedValue {
    Date { value: NaiveDate },
    Money { minor_units: i64, currency: String },
    Party { name: String },
    /// ISO-8601 duration such as `P30D`.
    Duration { iso: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub kind: EntityKind,
    pub surface: String,
    pub normalized: NormalizedValue,
    pub span: Span,
}

/// Canonical composition, non-breaking spaces to spaces, LF line endings,
/// space/tab runs collapsed, lines trimmed. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(unified.len());
    for (i, line) in unified.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut collapsed = String::with_capacity(line.len());
        let mut pending_space = false;
        for c in line.chars() {
            let c = match c {
                '\u{00A0}' | '\u{2007}' | '\u{202F}' | '\t' => ' ',
                c => c,
            };
            if c == ' ' {
                pending_space = true;
            } else {
                if pending_space && !collapsed.is_empty() {
                    collapsed.push(' ');
                }
                pending_space = false;
                collapsed.push(c);
            }
        }
        out.push_str(collapsed.trim());
    }
    out.nfc().collect()
}

static NUMBERED_HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+(\.\d+)*[.)]?\s+\S").unwrap());
static HEADING_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(#+\s*|\d+(\.\d+)*[.)]?\s+)").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadingRule {
    Numbered,
    AllCaps,
    Markdown,
}

/// Which heading rule a line matches, checked in priority order.
pub fn heading_rule(line: &str) -> Option<HeadingRule> {
    if NUMBERED_HEADING.is_match(line) {
        return Some(HeadingRule::Numbered);
    }
    let has_letter = line.chars().any(char::is_alphabetic);
    let all_upper = line.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase);
    if has_letter && all_upper && line.split_whitespace().count() <= 8 {
        return Some(HeadingRule::AllCaps);
    }
    if line.starts_with('#') {
        return Some(HeadingRule::Markdown);
    }
    None
}

const KEY_HINTS: &[(&str, SectionKey)] = &[
    ("scope", SectionKey::ScopeOfWork),
    ("deliverable", SectionKey::Deliverables),
    ("timeline", SectionKey::Timeline),
    ("schedule", SectionKey::Timeline),
    ("milestone", SectionKey::Timeline),
    ("period of performance", SectionKey::Timeline),
    ("responsibilit", SectionKey::Responsibilities),
    ("obligation", SectionKey::Responsibilities),
    ("payment", SectionKey::PaymentTerms),
    ("fees", SectionKey::PaymentTerms),
    ("compensation", SectionKey::PaymentTerms),
    ("invoic", SectionKey::PaymentTerms),
    ("confidential", SectionKey::Confidentiality),
    ("non-disclosure", SectionKey::Confidentiality),
    ("liabilit", SectionKey::Liability),
    ("indemn", SectionKey::Liability),
    ("terminat", SectionKey::Termination),
    ("acceptance", SectionKey::AcceptanceCriteria),
    ("signature", SectionKey::Signatures),
];

/// Canonical key suggested by a heading's wording.
pub fn detect_key(heading: &str) -> Option<SectionKey> {
    let text = HEADING_PREFIX.replace(heading.trim(), "").to_lowercase();
    KEY_HINTS.iter().find(|(hint, _)| text.contains(hint)).map(|(_, k)| *k)
}

/// Split a normalized document into sections at heading lines. Text before
/// the first heading becomes a headingless section; leading and trailing
/// blank lines are excluded from bodies.
pub fn segment_sections(doc: &SourceDocument) -> Vec<DocumentSection> {
    struct Pending<'a> {
        heading: Option<&'a str>,
        lines: Vec<(usize, &'a str)>,
    }
    let text = doc.raw_text.as_str();
    let mut pending: Vec<Pending> = Vec::new();
    let mut offset = 0;
    for line in text.split('\n') {
        let start = offset;
        offset += line.len() + 1;
        if heading_rule(line).is_some() {
            pending.push(Pending { heading: Some(line), lines: Vec::new() });
        } else {
            if pending.is_empty() {
                pending.push(Pending { heading: None, lines: Vec::new() });
            }
            pending.last_mut().unwrap().lines.push((start, line));
        }
    }
    let body_of = |lines: &[(usize, &str)]| -> String {
        let first = lines.iter().position(|(_, l)| !l.trim().is_empty());
        let last = lines.iter().rposition(|(_, l)| !l.trim().is_empty());
        match (first, last) {
            (Some(f), Some(l)) => text[lines[f].0..lines[l].0 + lines[l].1.len()].to_string(),
            _ => String::new(),
        }
    };
    pending
        .into_iter()
        .filter_map(|p| {
            let body = body_of(&p.lines);
            (p.heading.is_some() || !body.is_empty()).then_some((p.heading, body))
        })
        .enumerate()
        .map(|(order, (heading, body))| DocumentSection {
            section_id: format!("{}#{}", doc.doc_id, order),
            heading: heading.map(str::to_string),
            detected_key: heading.and_then(detect_key),
            body,
            order,
        })
        .collect()
}

const MONTHS: &[(&str, u32)] = &[
    ("january", 1), ("february", 2), ("march", 3), ("april", 4), ("may", 5), ("june", 6),
    ("july", 7), ("august", 8), ("september", 9), ("october", 10), ("november", 11), ("december", 12),
    ("jan", 1), ("feb", 2), ("mar", 3), ("apr", 4), ("jun", 6), ("jul", 7), ("aug", 8),
    ("sep", 9), ("sept", 9), ("oct", 10), ("nov", 11), ("dec", 12),
];

static ISO_DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{4})-(\d{2})-(\d{2})\b").unwrap());
static LONG_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(January|February|March|April|May|June|July|August|September|October|November|December|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sept|Sep|Oct|Nov|Dec)\.? (\d{1,2}), ?(\d{4})\b",
    )
    .unwrap()
});
static MONEY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([$€£]) ?(\d{1,3}(?:,\d{3})+|\d+)(?:\.(\d{1,2}))?\b").unwrap());
static DURATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d+|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|fifteen|twenty|thirty|sixty|ninety) (?:business |calendar )?(day|week|month|year)s?\b").unwrap()
});
static PARTY_SUFFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b([A-Z][A-Za-z0-9&'-]*(?: [A-Z][A-Za-z0-9&'-]*)*) (Corp|Inc|LLC|Company)\b").unwrap()
});
static PARTY_ROLE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:Client|Vendor|Contractor) ([A-Z][A-Za-z0-9&'-]*(?: [A-Z][A-Za-z0-9&'-]*)*)").unwrap()
});

const PARTY_LEADING_NOISE: &[&str] = &[
    "The", "This", "That", "These", "Each", "Any", "Such", "A", "An", "All", "Both", "Either", "Neither", "If",
    "When", "Upon", "Client", "Vendor", "Contractor", "Company",
];
const ROLE_SUFFIXES: &[&str] = &["Corp", "Inc", "LLC", "Company"];

fn number_word(s: &str) -> Option<u32> {
    let n = match s.to_lowercase().as_str() {
        "one" => 1,
        "two" => 2,
        "three" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        "ten" => 10,
        "eleven" => 11,
        "twelve" => 12,
        "fifteen" => 15,
        "twenty" => 20,
        "thirty" => 30,
        "sixty" => 60,
        "ninety" => 90,
        digits => return digits.parse().ok(),
    };
    Some(n)
}

/// Rule-based extractor for dates, money, parties and durations.
#[derive(Debug, Clone)]
pub struct EntityExtractor {
    /// Currency assumed for a bare `$`.
    pub dollar_currency: String,
}

impl Default for EntityExtractor {
    fn default() -> Self {
        Self { dollar_currency: "USD".into() }
    }
}

impl EntityExtractor {
    pub fn parse_date(&self, surface: &str) -> Option<NaiveDate> {
        if let Some(c) = ISO_DATE.captures(surface) {
            return NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?);
        }
        let c = LONG_DATE.captures(surface)?;
        let month = MONTHS.iter().find(|(m, _)| m.eq_ignore_ascii_case(&c[1]))?.1;
        NaiveDate::from_ymd_opt(c[3].parse().ok()?, month, c[2].parse().ok()?)
    }

    pub fn parse_money(&self, surface: &str) -> Option<(i64, String)> {
        let c = MONEY.captures(surface)?;
        let currency = match &c[1] {
            "$" => self.dollar_currency.clone(),
            "€" => "EUR".to_string(),
            _ => "GBP".to_string(),
        };
        let whole: i64 = c[2].replace(',', "").parse().ok()?;
        let cents: i64 = match c.get(3) {
            Some(m) if m.as_str().len() == 1 => m.as_str().parse::<i64>().ok()? * 10,
            Some(m) => m.as_str().parse().ok()?,
            None => 0,
        };
        Some((whole.checked_mul(100)?.checked_add(cents)?, currency))
    }

    pub fn parse_duration(&self, surface: &str) -> Option<String> {
        let c = DURATION.captures(surface)?;
        let n = number_word(&c[1])?;
        let unit = match c[2].to_lowercase().as_str() {
            "day" => 'D',
            "week" => 'W',
            "month" => 'M',
            _ => 'Y',
        };
        Some(format!("P{n}{unit}"))
    }

    /// All entities in `text`, sorted by start, with overlaps resolved in
    /// favour of the earlier and then longer match.
    pub fn extract_text(&self, text: &str) -> Vec<ExtractedEntity> {
        let idx = CharIndex::new(text);
        let mut found: Vec<ExtractedEntity> = Vec::new();
        let mut push = |kind, start: usize, end: usize, normalized| {
            found.push(ExtractedEntity {
                kind,
                surface: text[start..end].to_string(),
                normalized,
                span: Span { start: idx.char_at(start), end: idx.char_at(end) },
            });
        };
        for re in [&*ISO_DATE, &*LONG_DATE] {
            for m in re.find_iter(text) {
                if let Some(value) = self.parse_date(m.as_str()) {
                    push(EntityKind::Date, m.start(), m.end(), NormalizedValue::Date { value });
                }
            }
        }
        for m in MONEY.find_iter(text) {
            if let Some((minor_units, currency)) = self.parse_money(m.as_str()) {
                push(EntityKind::Money, m.start(), m.end(), NormalizedValue::Money { minor_units, currency });
            }
        }
        for m in DURATION.find_iter(text) {
            if let Some(iso) = self.parse_duration(m.as_str()) {
                push(EntityKind::Duration, m.start(), m.end(), NormalizedValue::Duration { iso });
            }
        }
        for c in PARTY_SUFFIX.captures_iter(text) {
            let (name, suffix) = (c.get(1).unwrap(), c.get(2).unwrap());
            if let Some(start) = strip_party_noise(text, name.start(), name.end(), false) {
                let end = suffix.end();
                push(EntityKind::Party, start, end, NormalizedValue::Party { name: text[start..end].to_string() });
            }
        }
        for c in PARTY_ROLE.captures_iter(text) {
            let name = c.get(1).unwrap();
            if let Some(start) = strip_party_noise(text, name.start(), name.end(), true) {
                let end = name.end();
                push(EntityKind::Party, start, end, NormalizedValue::Party { name: text[start..end].to_string() });
            }
        }
        let mut kept = drop_overlaps(found);
        // a party named once with its role or suffix is the same party
        // wherever else its name appears
        let names: BTreeSet<String> = kept.iter().filter(|e| e.kind == EntityKind::Party).map(|e| e.surface.clone()).collect();
        let mut repeats = Vec::new();
        for name in &names {
            let pattern = Regex::new(&format!(r"\b{}\b", regex::escape(name))).expect("escaped literal");
            for m in pattern.find_iter(text) {
                let span = Span { start: idx.char_at(m.start()), end: idx.char_at(m.end()) };
                if kept.iter().all(|k| span.end <= k.span.start || span.start >= k.span.end) {
                    repeats.push(ExtractedEntity {
                        kind: EntityKind::Party,
                        surface: name.clone(),
                        normalized: NormalizedValue::Party { name: name.clone() },
                        span,
                    });
                }
            }
        }
        if !repeats.is_empty() {
            kept.extend(repeats);
            kept = drop_overlaps(kept);
        }
        kept
    }
}

fn drop_overlaps(mut found: Vec<ExtractedEntity>) -> Vec<ExtractedEntity> {
    found.sort_by_key(|e| (e.span.start, std::cmp::Reverse(e.span.end)));
    let mut kept: Vec<ExtractedEntity> = Vec::new();
    for e in found {
        if kept.last().is_none_or(|k| e.span.start >= k.span.end) {
            kept.push(e);
        }
    }
    kept
}

/// Drop leading determiners and role words from a capitalized run. Returns
/// the new start, or `None` when nothing meaningful remains.
fn strip_party_noise(text: &str, start: usize, end: usize, allow_suffix_only: bool) -> Option<usize> {
    let mut pos = start;
    for word in text[start..end].split(' ') {
        if PARTY_LEADING_NOISE.contains(&word) {
            pos += word.len() + 1;
        } else {
            break;
        }
    }
    if pos >= end {
        return None;
    }
    // "Client Acme Corp": the suffix rule already covers it
    let rest = &text[pos..end];
    if !allow_suffix_only && rest.is_empty() {
        return None;
    }
    if allow_suffix_only && ROLE_SUFFIXES.contains(&rest) {
        return None;
    }
    Some(pos)
}

pub fn extract_entities(section: &DocumentSection) -> Vec<ExtractedEntity> {
    EntityExtractor::default().extract_text(&section.body)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub placeholder: String,
    pub kind: EntityKind,
    pub surface: String,
}

/// Placeholder to original-text mapping produced by [`anonymize`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnonymizationMap {
    pub doc_id: String,
    pub entries: Vec<MappingEntry>,
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(PARTY|AMOUNT)_\d+\]").unwrap());

impl AnonymizationMap {
    /// Put the original surfaces back.
    pub fn restore(&self, text: &str) -> String {
        PLACEHOLDER
            .replace_all(text, |c: &regex::Captures| {
                self.entries
                    .iter()
                    .find(|e| e.placeholder == c[0])
                    .map_or_else(|| c[0].to_string(), |e| e.surface.clone())
            })
            .into_owned()
    }
}

/// Replace parties with `[PARTY_n]` and amounts with `[AMOUNT_n]`, numbered in
/// first-occurrence order; identical surfaces share a placeholder. Other
/// entity kinds are left in place.
pub fn anonymize(
    doc: &SourceDocument,
    entities: &[ExtractedEntity],
) -> Result<(SourceDocument, AnonymizationMap), IngestError> {
    let idx = CharIndex::new(&doc.raw_text);
    let mut sorted: Vec<&ExtractedEntity> = entities.iter().collect();
    sorted.sort_by_key(|e| (e.span.start, e.span.end));
    for e in &sorted {
        if e.span.start >= e.span.end || e.span.end > idx.char_len() {
            return Err(IngestError::InvalidSpan(e.span));
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].span.start < pair[0].span.end {
            return Err(IngestError::OverlappingEntities { first: pair[0].span, second: pair[1].span });
        }
    }
    let mut map = AnonymizationMap { doc_id: doc.doc_id.clone(), entries: Vec::new() };
    let mut assigned: HashMap<(EntityKind, &str), String> = HashMap::new();
    let mut counters = (0usize, 0usize);
    let mut out = String::with_capacity(doc.raw_text.len());
    let mut cursor = 0usize;
    for e in sorted {
        let prefix = match e.kind {
            EntityKind::Party => "PARTY",
            EntityKind::Money => "AMOUNT",
            EntityKind::Date | EntityKind::Duration => continue,
        };
        let (bs, be) = (idx.byte_at(e.span.start), idx.byte_at(e.span.end));
        let surface = &doc.raw_text[bs..be];
        let placeholder = assigned
            .entry((e.kind, surface))
            .or_insert_with(|| {
                let n = if e.kind == EntityKind::Party { &mut counters.0 } else { &mut counters.1 };
                *n += 1;
                let placeholder = format!("[{prefix}_{n}]");
                map.entries.push(MappingEntry { placeholder: placeholder.clone(), kind: e.kind, surface: surface.to_string() });
                placeholder
            })
            .clone();
        out.push_str(&doc.raw_text[cursor..bs]);
        out.push_str(&placeholder);
        cursor = be;
    }
    out.push_str(&doc.raw_text[cursor..]);
    Ok((SourceDocument { raw_text: out, ..doc.clone() }, map))
}

/// One line of an ingestion manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub origin: String,
}

/// Read a JSON-lines manifest; relative paths resolve against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.into(), source })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| IngestError::Manifest { line: i + 1, reason: e.to_string() })?;
        if !seen.insert(entry.doc_id.clone()) {
            return Err(IngestError::DuplicateDocId(entry.doc_id));
        }
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// A document to ingest, already loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestInput {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub origin: String,
}

impl IngestInput {
    pub fn from_manifest(entry: &ManifestEntry) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(&entry.path)
            .map_err(|source| IngestError::Io { path: entry.path.clone(), source })?;
        Ok(Self { doc_id: entry.doc_id.clone(), text, origin: entry.origin.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedDocument {
    /// The document exactly as received.
    pub source: SourceDocument,
    pub sections: Vec<DocumentSection>,
    pub map: AnonymizationMap,
    pub clauses: Vec<ClauseRecord>,
}

/// Normalize, extract, anonymize, segment and embed one document.
pub fn process_document(
    input: &IngestInput,
    extractor: &EntityExtractor,
    embedder: &dyn Embedder,
    clock: &dyn Clock,
) -> Result<IngestedDocument, IngestError> {
    let now = clock.now();
    let source = SourceDocument {
        doc_id: input.doc_id.clone(),
        raw_text: input.text.clone(),
        origin: input.origin.clone(),
        ingested_at: now,
    };
    let normalized = SourceDocument { raw_text: normalize_text(&input.text), ..source.clone() };
    let entities = extractor.extract_text(&normalized.raw_text);
    let (anonymized, map) = anonymize(&normalized, &entities)?;
    let sections = segment_sections(&anonymized);
    let with_body: Vec<&DocumentSection> = sections.iter().filter(|s| !s.body.trim().is_empty()).collect();
    let texts: Vec<String> = with_body.iter().map(|s| s.body.clone()).collect();
    let embeddings = if texts.is_empty() { Vec::new() } else { embedder.embed(&texts)? };
    let clauses = with_body
        .into_iter()
        .zip(embeddings)
        .map(|(s, embedding)| ClauseRecord {
            clause_id: s.section_id.clone(),
            text: s.body.clone(),
            canonical_key: s.detected_key,
            source_doc_id: input.doc_id.clone(),
            embedding,
            feedback_avg: 0.0,
            created_at: now,
        })
        .collect();
    Ok(IngestedDocument { source, sections, map, clauses })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub sections: usize,
    pub clauses: usize,
}

/// Process documents and upsert their clauses. Existing clause ids are
/// replaced, so re-ingesting a document does not grow the store. When
/// `sidecar_dir` is given, each anonymization map is written there as
/// `<doc_id>.map.json`.
pub fn ingest_documents(
    inputs: &[IngestInput],
    store: &mut ClauseStore,
    embedder: &dyn Embedder,
    clock: &dyn Clock,
    sidecar_dir: Option<&Path>,
) -> Result<IngestSummary, IngestError> {
    let mut ids = BTreeSet::new();
    if let Some(dup) = inputs.iter().find(|i| !ids.insert(i.doc_id.as_str())) {
        return Err(IngestError::DuplicateDocId(dup.doc_id.clone()));
    }
    let extractor = EntityExtractor::default();
    let processed: Vec<IngestedDocument> = inputs
        .iter()
        .map(|input| process_document(input, &extractor, embedder, clock))
        .collect::<Result<_, _>>()?;
    let mut summary = IngestSummary::default();
    for doc in processed {
        if let Some(dir) = sidecar_dir {
            std::fs::create_dir_all(dir).map_err(|source| IngestError::Io { path: dir.into(), source })?;
            let path = dir.join(format!("{}.map.json", sanitize_file_name(&doc.source.doc_id)));
            let json = serde_json::to_string_pretty(&doc.map).expect("map serializes");
            std::fs::write(&path, json).map_err(|source| IngestError::Io { path, source })?;
        }
        summary.documents += 1;
        summary.sections += doc.sections.len();
        summary.clauses += doc.clauses.len();
        for clause in doc.clauses {
            store.upsert(clause)?;
        }
    }
    Ok(summary)
}

pub(crate) fn sanitize_file_name(id: &str) -> String {
    id.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}
