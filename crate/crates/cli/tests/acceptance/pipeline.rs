use std::collections::BTreeSet;

use sowgen_core::backends::HashEmbedder;
use sowgen_core::vecstore::cosine;
use sowgen_core::{Embedder, Module, SowDraft};

use crate::{ensure, sample_spec, seeded_store, stub_config, stub_orchestrator, Outcome};

/// Completeness counted directly: required sections with text, plus
/// requirement items found verbatim or by embedding similarity.
fn completeness_oracle(draft: &SowDraft, threshold: f64) -> f64 {
    let config = stub_config();
    let spec = sample_spec();
    let present = config
        .required_keys
        .iter()
        .filter(|k| draft.sections.iter().any(|s| s.key == **k && !s.body.trim().is_empty()))
        .count();
    let items: Vec<String> = spec
        .deliverables
        .iter()
        .map(|d| d.name.clone())
        .chain(spec.special_requirements.iter().cloned())
        .collect();
    let embedder = HashEmbedder::new(config.embedding_dim);
    let bodies: Vec<&str> = draft.sections.iter().map(|s| s.body.as_str()).filter(|b| !b.trim().is_empty()).collect();
    let addressed = items
        .iter()
        .filter(|item| {
            bodies.iter().any(|b| b.to_lowercase().contains(&item.to_lowercase())) || {
                let v = embedder.embed_one(item).unwrap();
                bodies.iter().any(|b| cosine(&v, &embedder.embed_one(b).unwrap()).unwrap() >= threshold)
            }
        })
        .count();
    (present + addressed) as f64 / (config.required_keys.len() + items.len()) as f64
}

pub fn ablation_criterion() -> Outcome {
    let config = stub_config();
    let store = seeded_store(&config);
    let spec = sample_spec();
    let mut scores = Vec::new();
    for disabled in [vec![], vec![Module::Formatting], vec![Module::Compliance], vec![Module::Rag]] {
        let set: BTreeSet<Module> = disabled.into_iter().collect();
        let result = stub_orchestrator(&config).ablation_run(&spec, "ablation", &store, &set).map_err(|e| e.to_string())?;
        let draft = result.run.draft.as_ref().ok_or("ablation run produced no draft")?;
        let oracle = completeness_oracle(draft, config.completeness_min);
        ensure!((oracle - result.completeness).abs() < 1e-12, "{set:?}: completeness {} vs counted {oracle}", result.completeness);
        scores.push(result.completeness);
    }
    let [full, no_formatting, no_compliance, no_rag] = scores[..] else { unreachable!() };
    ensure!(full >= no_formatting, "full {full} < no-formatting {no_formatting}");
    ensure!(full >= no_compliance, "full {full} < no-compliance {no_compliance}");
    ensure!(full > no_rag, "full {full} <= no-rag {no_rag}");
    ensure!(no_rag < no_formatting && no_rag < no_compliance, "no-rag {no_rag} is not strictly lowest");
    Ok(format!(
        "completeness full {full:.3}, no-formatting {no_formatting:.3}, no-compliance {no_compliance:.3}, no-rag {no_rag:.3}"
    ))
}

pub fn determinism_criterion() -> Outcome {
    let config = stub_config();
    let spec = sample_spec();
    let serialize = || {
        let store = seeded_store(&config);
        let run = stub_orchestrator(&config).run_pipeline(&spec, "determinism", &store);
        [
            serde_json::to_string(&run.draft).unwrap(),
            serde_json::to_string(&run.compliance).unwrap(),
            serde_json::to_string(&run.validation).unwrap(),
            serde_json::to_string(&run.audit).unwrap(),
            serde_json::to_string(&run.rendered).unwrap(),
            serde_json::to_string(&run).unwrap(),
        ]
    };
    let (a, b) = (serialize(), serialize());
    let names = ["draft", "compliance report", "validation report", "audit trail", "rendered document", "full run"];
    for ((x, y), name) in a.iter().zip(&b).zip(names) {
        ensure!(x == y, "{name} differs between runs");
    }
    ensure!(a[0] != "null", "run produced no draft");
    let bytes: usize = a.iter().map(String::len).sum();
    Ok(format!("two stub runs byte-identical across draft, reports, audit and rendering ({bytes} bytes compared)"))
}
