use std::path::PathBuf;

use sowgen_core::backends::HashEmbedder;
use sowgen_core::draft::{parse_model_output, DraftMetadata};
use sowgen_core::validation::{apply_formatting, check_style, render, Locus, RenderFormat, ValidationAgent, ValidationKind};
use sowgen_core::{DraftSection, SectionKey, SowDraft};

use crate::{ensure, sample_spec, seeded_store, stub_config, stub_orchestrator, Outcome};

const EU: &str = "All inventory data must stay hosted in the EU region.";

fn body(key: SectionKey) -> String {
    match key {
        SectionKey::ScopeOfWork => "Initech LLC builds a warehouse analytics platform for Globex Corp. Payment follows Section 5.".into(),
        SectionKey::Deliverables => "- Data Migration\n- Reporting Dashboard\n- Operations Runbook".into(),
        SectionKey::Timeline => "Work runs from 2025-03-01 to 2025-09-30.".into(),
        SectionKey::Responsibilities => format!("Globex Corp names a sponsor. {EU}"),
        SectionKey::PaymentTerms => "Globex Corp pays $150,000 in three milestone payments.".into(),
        SectionKey::Confidentiality => "Each party keeps the other's information confidential.".into(),
        SectionKey::Liability => "Liability is capped at the fees paid.".into(),
        SectionKey::Termination => "Either party may terminate on thirty days written notice.".into(),
        SectionKey::AcceptanceCriteria => "Each deliverable passes its test plan.".into(),
        SectionKey::Signatures => "Signed by both parties.".into(),
    }
}

fn clean_draft() -> SowDraft {
    SowDraft {
        sow_id: "validation".into(),
        version: 1,
        metadata: DraftMetadata {
            project_title: "Warehouse Analytics Platform".into(),
            client: "Globex Corp".into(),
            vendor: "Initech LLC".into(),
            effective_date: "2025-03-01".into(),
            generated_at: "2025-01-01T00:00:00.000Z".into(),
        },
        sections: SectionKey::ALL
            .into_iter()
            .enumerate()
            .map(|(i, key)| DraftSection {
                id: format!("sec-{key}"),
                key,
                title: key.title().into(),
                body: body(key),
                provenance: vec![],
                order: i as u32,
            })
            .collect(),
    }
}

fn section_mut(d: &mut SowDraft, key: SectionKey) -> &mut DraftSection {
    d.sections.iter_mut().find(|s| s.key == key).unwrap()
}

fn sec(key: SectionKey) -> Locus {
    Locus::Section(format!("sec-{key}"))
}

type Expected = Vec<(ValidationKind, Locus)>;

fn cases() -> Vec<(&'static str, SowDraft, Expected)> {
    use ValidationKind::*;
    let mut out = vec![("clean", clean_draft(), vec![])];

    let mut d = clean_draft();
    d.sections.retain(|s| s.key != SectionKey::Termination);
    for (i, s) in d.sections.iter_mut().enumerate() {
        s.order = i as u32;
    }
    out.push(("missing section", d, vec![(MissingSection, Locus::Document)]));

    let mut d = clean_draft();
    d.sections.push(DraftSection {
        id: "sec-extra".into(),
        key: SectionKey::ScopeOfWork,
        title: "Scope of Work".into(),
        body: "Additional scope.".into(),
        provenance: vec![],
        order: 10,
    });
    out.push(("duplicate section", d, vec![(DuplicateSection, Locus::Section("sec-extra".into()))]));

    let mut d = clean_draft();
    section_mut(&mut d, SectionKey::ScopeOfWork).body.push_str(" See Section 14 and § 0.");
    let scope = sec(SectionKey::ScopeOfWork);
    out.push(("dangling references", d, vec![(DanglingReference, scope.clone()), (DanglingReference, scope)]));

    let mut d = clean_draft();
    section_mut(&mut d, SectionKey::Responsibilities).body = "Globex Corp names a sponsor.".into();
    out.push(("unaddressed requirement", d, vec![(UnaddressedRequirement, Locus::Document)]));

    let mut d = clean_draft();
    let pay = section_mut(&mut d, SectionKey::PaymentTerms);
    pay.title = "payment terms".into();
    pay.body = "* Deposit on signature  \n* Balance on acceptance".into();
    section_mut(&mut d, SectionKey::Signatures).order = 12;
    let p = sec(SectionKey::PaymentTerms);
    out.push((
        "style",
        d,
        vec![(Style, p.clone()), (Style, p.clone()), (Style, p), (Style, sec(SectionKey::Signatures))],
    ));
    out
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(name)
}

pub fn criterion() -> Outcome {
    let config = stub_config();
    let agent = ValidationAgent {
        required_keys: config.required_keys.clone(),
        completeness_threshold: config.completeness_min,
        expected_dim: config.embedding_dim,
    };
    let embedder = HashEmbedder::new(config.embedding_dim);
    let spec = sample_spec();
    let cases = cases();
    let mut seeded = 0;
    for (name, draft, expected) in &cases {
        let issues = agent.validate(draft, &spec, &embedder).map_err(|e| e.to_string())?;
        let mut got: Vec<(ValidationKind, Locus)> = issues.into_iter().map(|i| (i.kind, i.locus)).collect();
        got.sort();
        let mut want = expected.clone();
        want.sort();
        ensure!(got == want, "{name}: got {got:?}, expected {want:?}");
        seeded += expected.len();

        let once = apply_formatting(draft);
        ensure!(apply_formatting(&once) == once, "{name}: formatting is not idempotent");
        ensure!(check_style(&once).is_empty(), "{name}: style issues remain after formatting");
    }

    let core_golden = golden("../core/tests/golden");
    let structured = std::fs::read_to_string(core_golden.join("three_sections.json")).unwrap();
    let draft = parse_model_output(&structured).map_err(|e| e.to_string())?;
    let md = render(&draft, RenderFormat::Markdown);
    ensure!(md.content == std::fs::read_to_string(core_golden.join("three_sections.md")).unwrap(), "three_sections.md differs");

    let store = seeded_store(&config);
    let run = stub_orchestrator(&config).run_pipeline(&spec, "sow-golden", &store);
    let rendered = run.rendered.ok_or("sample run rendered nothing")?;
    let expected = std::fs::read_to_string(golden("tests/golden/sample_sow.md")).unwrap();
    ensure!(rendered.content == expected, "sample_sow.md differs from the rendered sample draft");
    ensure!(rendered.verify(), "rendered checksum does not verify");

    Ok(format!("{} drafts, {seeded} seeded defects found exactly, formatting idempotent, 2 golden files match", cases.len()))
}
