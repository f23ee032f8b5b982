use std::collections::BTreeSet;

use sowgen_core::compliance::{lint_language, ComplianceAgent, IssueKind, Lexicon};
use sowgen_core::config::AppConfig;
use sowgen_core::draft::DraftMetadata;
use sowgen_core::{ClauseKey, ClauseStatus, DraftSection, SectionKey, SowDraft};

use crate::{ensure, fixtures, Outcome};

fn filler(key: SectionKey, variant: usize) -> &'static str {
    let options: [&str; 2] = match key {
        SectionKey::ScopeOfWork => [
            "The vendor builds a reporting platform for warehouse inventory.",
            "The vendor moves legacy records into a new analytics platform.",
        ],
        SectionKey::Deliverables => ["- Data Migration\n- Reporting Dashboard", "- Operations Runbook\n- Training Sessions"],
        SectionKey::Timeline => ["Work runs from 2025-03-01 to 2025-09-30.", "Work starts on 2025-04-01 and ends on 2025-12-15."],
        SectionKey::Responsibilities => [
            "The client supplies data extracts and a project sponsor.",
            "The vendor staffs the project and the client grants system access.",
        ],
        SectionKey::PaymentTerms => [
            "Invoices are due thirty days after receipt.",
            "The client pays a fixed fee in three milestone installments.",
        ],
        SectionKey::AcceptanceCriteria => [
            "Each deliverable passes the agreed test plan.",
            "A deliverable is accepted once the client signs the test report.",
        ],
        SectionKey::Signatures => ["Signed by authorized representatives of both parties.", "Executed by the undersigned on the dates shown."],
        _ => unreachable!("legal sections are built separately"),
    };
    options[variant % 2]
}

/// Bodies that state each clause; the last of each is weak but present.
fn present(key: ClauseKey, variant: usize) -> &'static str {
    let options: [&str; 3] = match key {
        ClauseKey::Confidentiality => [
            "Each party keeps confidential all proprietary information and will not disclose it; this non-disclosure duty survives the agreement.",
            "Proprietary data stays confidential. Neither party may disclose it except as the non-disclosure terms allow.",
            "Confidential and proprietary material is never shared outside the project team.",
        ],
        ClauseKey::Liability => [
            "Neither party is liable for indirect damages, total liability is capped at the fees paid, and the vendor will indemnify the client for third-party claims.",
            "Liability for damages is limited to direct losses. Each party will indemnify the other and is not liable beyond the cap.",
            "The vendor is liable only for direct damages.",
        ],
        ClauseKey::Termination => [
            "Either party may terminate for material breach on thirty days written notice; termination does not affect accrued fees.",
            "On notice of an uncured breach the client may terminate, and termination ends all open work orders.",
            "The client may terminate on written notice.",
        ],
    };
    options[variant % 3]
}

/// Ways a clause can be absent: removed section, empty body, unrelated text,
/// or a single stray keyword.
fn absent(key: ClauseKey, form: usize) -> Option<&'static str> {
    match form % 4 {
        0 => None,
        1 => Some(""),
        2 => Some("The parties meet monthly to review progress."),
        _ => Some(match key {
            ClauseKey::Confidentiality => "Data is handled with the proprietary tools of the vendor.",
            ClauseKey::Liability => "Late fees count as damages under the payment schedule.",
            ClauseKey::Termination => "Send any notice to the addresses listed above.",
        }),
    }
}

fn synthetic_draft(n: usize, missing: &BTreeSet<ClauseKey>) -> SowDraft {
    let mut sections = Vec::new();
    for key in SectionKey::ALL {
        let body = match ClauseKey::ALL.into_iter().find(|c| c.section_key() == key) {
            Some(clause) if missing.contains(&clause) => absent(clause, n),
            Some(clause) => Some(present(clause, n)),
            None => Some(filler(key, n)),
        };
        if let Some(body) = body {
            sections.push(DraftSection {
                id: format!("sec-{key}"),
                key,
                title: key.title().into(),
                body: body.into(),
                provenance: vec![],
                order: sections.len() as u32,
            });
        }
    }
    SowDraft {
        sow_id: format!("synthetic-{n}"),
        version: 1,
        metadata: DraftMetadata {
            project_title: "Synthetic".into(),
            client: "Client".into(),
            vendor: "Vendor".into(),
            effective_date: "2025-03-01".into(),
            generated_at: "2025-01-01T00:00:00.000Z".into(),
        },
        sections,
    }
}

pub fn clause_criterion() -> Outcome {
    let config = AppConfig::load(fixtures().join("stub.toml")).unwrap();
    let backends = config.backends().unwrap();
    let agent = ComplianceAgent { thresholds: config.pipeline.thresholds(), ..ComplianceAgent::default() };
    let subsets: Vec<BTreeSet<ClauseKey>> = (1u8..8)
        .map(|mask| ClauseKey::ALL.into_iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, k)| k).collect())
        .collect();
    let (mut seeded, mut caught, mut false_missing, mut complete) = (0, 0, 0, 0);
    for n in 0..20 {
        let missing = if n < 5 { BTreeSet::new() } else { subsets[(n - 5) % subsets.len()].clone() };
        let draft = synthetic_draft(n, &missing);
        let report = agent.review(&draft, backends.classifier.as_ref()).map_err(|e| e.to_string())?;
        let flagged: BTreeSet<ClauseKey> =
            report.findings.iter().filter(|f| f.status == ClauseStatus::Missing).map(|f| f.clause_key).collect();
        seeded += missing.len();
        caught += missing.intersection(&flagged).count();
        false_missing += flagged.difference(&missing).count();
        complete += usize::from(missing.is_empty());
        ensure!(flagged == missing, "draft {n}: seeded missing {missing:?}, flagged {flagged:?}");
    }
    ensure!(caught == seeded && false_missing == 0, "caught {caught}/{seeded}, {false_missing} false");
    Ok(format!("20 drafts: {caught}/{seeded} seeded missing clauses flagged, 0 false missing ({complete} complete drafts)"))
}

use IssueKind::{PassiveVoice as P, VagueTerm as V};

/// Hand-labeled sentences with the excerpts the rules must flag.
const LINT_CASES: [(&str, &[(IssueKind, &str)]); 30] = [
    ("The report was written by the vendor.", &[(P, "was written")]),
    ("Invoices are paid within thirty days.", &[(P, "are paid")]),
    ("The data will be migrated to the new platform.", &[(P, "be migrated")]),
    ("All defects were fixed before launch.", &[(P, "were fixed")]),
    ("The system is being tested by the client.", &[(P, "is being tested")]),
    ("Access has been granted to the team.", &[(P, "been granted")]),
    ("The schedule is fully approved.", &[(P, "is fully approved")]),
    ("The escrow keys were kept offsite.", &[(P, "were kept")]),
    ("The vendor will use reasonable care.", &[(V, "reasonable")]),
    ("Updates are delivered as needed.", &[(P, "are delivered"), (V, "as needed")]),
    ("Support follows industry standard practices.", &[(V, "industry standard")]),
    ("The vendor will make best efforts to finish early.", &[(V, "best efforts")]),
    ("Reports and/or dashboards follow each sprint.", &[(V, "and/or")]),
    ("Responses must be timely.", &[(V, "timely")]),
    ("Work must reach a Satisfactory level.", &[(V, "Satisfactory")]),
    ("The vendor writes the report.", &[]),
    ("The client pays invoices within thirty days.", &[]),
    ("The team migrates the data in March.", &[]),
    ("The vendor is responsible for hosting.", &[]),
    ("The fees are due on receipt.", &[]),
    ("The deadline was Friday; delivered items follow.", &[]),
    ("The vendor needs access to the servers.", &[]),
    ("There is a hundred-page manual to review.", &[]),
    ("Being careful, the team reviews every change.", &[]),
    ("The client was there on Monday.", &[]),
    ("The project is large and complex.", &[]),
    ("The vendor shall be responsible for backups.", &[]),
    ("Reasonably priced options exist.", &[]),
    ("The standard industry report ships weekly.", &[]),
    ("The team responds appropriately to incidents.", &[]),
];

pub fn lint_criterion() -> Outcome {
    let lexicon = Lexicon::default();
    let mut agree = 0;
    for (n, (sentence, expected)) in LINT_CASES.iter().enumerate() {
        let draft = SowDraft {
            sow_id: "lint".into(),
            version: 1,
            metadata: DraftMetadata::default(),
            sections: vec![DraftSection {
                id: "s".into(),
                key: SectionKey::ScopeOfWork,
                title: "Scope of Work".into(),
                body: sentence.to_string(),
                provenance: vec![],
                order: 0,
            }],
        };
        let mut got: Vec<(IssueKind, String)> = lint_language(&draft, &lexicon).into_iter().map(|i| (i.kind, i.excerpt)).collect();
        got.sort();
        let mut want: Vec<(IssueKind, String)> = expected.iter().map(|(k, e)| (*k, e.to_string())).collect();
        want.sort();
        ensure!(got == want, "sentence {n} {sentence:?}: got {got:?}, expected {want:?}");
        agree += 1;
    }
    let positives = LINT_CASES.iter().filter(|(_, e)| !e.is_empty()).count();
    ensure!(positives == 15, "suite has {positives} positives");
    Ok(format!("{agree}/30 sentences agree ({positives} positive, {} negative)", 30 - positives))
}
