use std::fmt::Write as _;

use anyhow::Result;
use negcamp_core::annotator::labels_by_doc;
use negcamp_core::ingest::ingest_gold;
use negcamp_core::reliability::{
    brennan_prediger, compare, grouped_report, krippendorff_alpha_nominal, percent_agreement, render_table,
    GroupedReport, JoinStats, ReliabilityError,
};
use negcamp_core::ReliabilityReport;
use serde::Serialize;

use super::{group_by, load_annotations, load_corpus};
use crate::config::RunConfig;
use crate::exit::{Exit, EXIT_CONFIG, EXIT_EMPTY_JOIN};
use crate::manifest::{write_json, InputDigest, Inputs, ManifestHeader, SCHEMA_VERSION};

#[derive(Debug, Serialize)]
struct RunReport {
    name: String,
    pooled: ReliabilityReport,
    join: JoinStats,
    by_country: Option<GroupedReport>,
    by_language: Option<GroupedReport>,
}

/// Agreement among the human coders themselves.
#[derive(Debug, Serialize)]
struct HumanAgreement {
    coders: Vec<String>,
    items: usize,
    items_multiply_coded: usize,
    percent_agreement: Option<f64>,
    alpha_k: Option<f64>,
    kappa_bp: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Evaluation {
    schema_version: u32,
    reference: &'static str,
    runs: Vec<RunReport>,
    human_agreement: Option<HumanAgreement>,
}

#[derive(Debug, Serialize)]
struct EvaluateManifest {
    #[serde(flatten)]
    header: ManifestHeader,
    runs: Vec<String>,
}

fn human_agreement(gold: &negcamp_core::ingest::GoldSet) -> Option<HumanAgreement> {
    let coders: Vec<String> = gold.coders().into_iter().map(str::to_string).collect();
    if coders.len() < 2 {
        return None;
    }
    let table = gold.rating_table();
    let multiply_coded = {
        let mut per_doc = std::collections::BTreeMap::<&str, usize>::new();
        for l in gold.labels() {
            *per_doc.entry(l.doc_id.as_str()).or_default() += 1;
        }
        per_doc.values().filter(|&&n| n >= 2).count()
    };
    Some(HumanAgreement {
        coders,
        items: table.n_items(),
        items_multiply_coded: multiply_coded,
        percent_agreement: percent_agreement(&table).ok(),
        alpha_k: krippendorff_alpha_nominal(&table).ok(),
        kappa_bp: brennan_prediger(&table, 2).ok(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.3}"))
}

fn render(eval: &Evaluation) -> String {
    let mut out = String::new();
    let pooled: Vec<(String, &ReliabilityReport)> = eval.runs.iter().map(|r| (r.name.clone(), &r.pooled)).collect();
    out.push_str("Pooled agreement with gold\n\n");
    out.push_str(&render_table("Run", &pooled));
    for run in &eval.runs {
        for (title, grouped) in [("Country", &run.by_country), ("Language", &run.by_language)] {
            if let Some(g) = grouped {
                let _ = write!(out, "\n{} by {}\n\n", run.name, title.to_lowercase());
                out.push_str(&g.render_text(title));
            }
        }
    }
    if let Some(h) = &eval.human_agreement {
        let _ = write!(
            out,
            "\nHuman coders ({}) on {} multiply coded items: agreement {}, alpha_K {}, kappa_BP {}\n",
            h.coders.join(", "),
            h.items_multiply_coded,
            fmt_opt(h.percent_agreement),
            fmt_opt(h.alpha_k),
            fmt_opt(h.kappa_bp),
        );
    }
    out
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let gold_path = cfg.require("gold", &cfg.gold)?;
    let runs = cfg.annotation_runs()?;
    let gold = ingest_gold(&gold_path).map_err(|e| Exit::new(EXIT_CONFIG, format!("--gold: {e}")))?;
    let reference = gold.reference_labels(None);

    let mut inputs = Inputs::new();
    inputs.insert("gold".into(), InputDigest::of(&gold_path)?);
    let corpus = match &cfg.corpus {
        Some(_) => {
            let path = cfg.require("corpus", &cfg.corpus)?;
            inputs.insert("corpus".into(), InputDigest::of(&path)?);
            Some(load_corpus(&path)?.0)
        }
        None => None,
    };
    let groups = corpus.as_ref().map(|c| (group_by(c, |d| &d.country), group_by(c, |d| &d.language)));

    let mut reports = Vec::new();
    for (name, path) in &runs {
        inputs.insert(format!("annotations:{name}"), InputDigest::of(path)?);
        let predicted = labels_by_doc(&load_annotations(path)?);
        let (pooled, join) = compare(&reference, &predicted).map_err(|e| match e {
            ReliabilityError::EmptyIntersection => {
                Exit::new(EXIT_EMPTY_JOIN, format!("{name}: gold and annotations share no document ids"))
            }
            other => Exit::new(EXIT_EMPTY_JOIN, format!("{name}: {other}")),
        })?;
        let (by_country, by_language) = match &groups {
            Some((countries, languages)) => (
                Some(grouped_report(&reference, &predicted, countries)?),
                Some(grouped_report(&reference, &predicted, languages)?),
            ),
            None => (None, None),
        };
        reports.push(RunReport { name: name.clone(), pooled, join, by_country, by_language });
    }

    let eval = Evaluation {
        schema_version: SCHEMA_VERSION,
        reference: "label of the first coder (by coder id) for each document",
        runs: reports,
        human_agreement: human_agreement(&gold),
    };
    cfg.ensure_out()?;
    write_json(&cfg.out.join("evaluation.json"), &eval)?;
    std::fs::write(cfg.out.join("evaluation.txt"), render(&eval))?;
    let manifest = EvaluateManifest {
        header: ManifestHeader::new("evaluate", cfg.digest(), inputs),
        runs: runs.into_iter().map(|(n, _)| n).collect(),
    };
    write_json(&cfg.out.join("evaluate_manifest.json"), &manifest)?;
    Ok(())
}
