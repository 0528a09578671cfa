use anyhow::Result;
use negcamp_core::annotator::labels_by_doc;
use negcamp_core::study::{
    aggregate_parties, build_design, country_negativity, fit_model, marginal_means_family, party_negativity,
    render_regression_table, write_aggregates_csv, write_country_csv, write_marginal_means_csv, write_party_csv,
    AggregationFilters, ModelVariant, RegressionReport, SmallSampleCorrection, StudyError,
};
use negcamp_core::RegressionFit;
use serde::Serialize;

use super::{load_annotations, load_corpus, load_party_meta};
use crate::config::RunConfig;
use crate::exit::{Exit, EXIT_CONFIG, EXIT_DESIGN, EXIT_OTHER};
use crate::manifest::{write_json, write_with, InputDigest, Inputs, ManifestHeader};

#[derive(Debug, Serialize)]
struct StudyCounts {
    documents: usize,
    unlabeled: u64,
    independent_messages: u64,
    parties_aggregated: usize,
    below_threshold: Vec<String>,
    no_messages: Vec<String>,
    missing_meta: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    model: &'static str,
    n: usize,
    n_clusters: usize,
    reference_country: String,
}

#[derive(Debug, Serialize)]
struct StudyManifest {
    #[serde(flatten)]
    header: ManifestHeader,
    annotations: String,
    filters: AggregationFilters,
    se_correction: SmallSampleCorrection,
    models: Vec<ModelSummary>,
    counts: StudyCounts,
}

fn design_error(model: ModelVariant, e: StudyError) -> Exit {
    let status = match e {
        StudyError::UnknownReference(_) => EXIT_CONFIG,
        StudyError::RankDeficient { .. }
        | StudyError::Underdetermined { .. }
        | StudyError::NoObservations
        | StudyError::TooFewClusters(_) => EXIT_DESIGN,
        _ => EXIT_OTHER,
    };
    Exit::new(status, format!("{}: {e}", model.title()))
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let corpus_path = cfg.require("corpus", &cfg.corpus)?;
    let meta_path = cfg.require("party-meta", &cfg.party_meta)?;
    let runs = cfg.annotation_runs()?;
    let [(run_name, ann_path)] = runs.as_slice() else {
        return Err(Exit::new(EXIT_CONFIG, "--annotations: study takes exactly one annotation run").into());
    };

    let mut inputs = Inputs::new();
    inputs.insert("corpus".into(), InputDigest::of(&corpus_path)?);
    inputs.insert("party_meta".into(), InputDigest::of(&meta_path)?);
    inputs.insert("annotations".into(), InputDigest::of(ann_path)?);

    let (corpus, _) = load_corpus(&corpus_path)?;
    let meta = load_party_meta(&meta_path)?;
    let labels = labels_by_doc(&load_annotations(ann_path)?);
    let agg = aggregate_parties(&corpus, &labels, &meta, &cfg.filters)?;

    let correction = SmallSampleCorrection::Cr1;
    let mut fits: Vec<(RegressionFit, RegressionReport)> = Vec::new();
    let mut margins = None;
    for &model in &cfg.model_variants {
        let design = build_design(&agg.parties, &meta, model, cfg.reference_country.as_deref())
            .map_err(|e| design_error(model, e))?;
        let fit = fit_model(&design, correction).map_err(|e| design_error(model, e))?;
        if model == ModelVariant::FamilyModel {
            margins = Some(marginal_means_family(&fit, &design)?);
        }
        let report = RegressionReport::new(&fit, &design);
        fits.push((fit, report));
    }

    cfg.ensure_out()?;
    let out = &cfg.out;
    write_with(&out.join("aggregates.csv"), |w| Ok(write_aggregates_csv(w, &agg.parties)?))?;
    for (fit, report) in &fits {
        write_json(&out.join(format!("regression_{}.json", fit.model.key())), report)?;
    }
    if !fits.is_empty() {
        let refs: Vec<&RegressionFit> = fits.iter().map(|(f, _)| f).collect();
        std::fs::write(out.join("regression.txt"), render_regression_table(&refs))?;
    }
    if let Some(rows) = &margins {
        write_with(&out.join("marginal_means.csv"), |w| Ok(write_marginal_means_csv(w, rows)?))?;
    }
    let countries = country_negativity(&corpus, &labels);
    write_with(&out.join("country_negativity.csv"), |w| Ok(write_country_csv(w, &countries)?))?;
    let parties = party_negativity(&agg.parties, &meta);
    write_with(&out.join("party_negativity.csv"), |w| Ok(write_party_csv(w, &parties)?))?;

    let manifest = StudyManifest {
        header: ManifestHeader::new("study", cfg.digest(), inputs),
        annotations: run_name.clone(),
        filters: cfg.filters,
        se_correction: correction,
        models: fits
            .iter()
            .map(|(f, r)| ModelSummary {
                model: f.model.key(),
                n: r.n,
                n_clusters: r.n_clusters,
                reference_country: r.reference_country.clone(),
            })
            .collect(),
        counts: StudyCounts {
            documents: corpus.len(),
            unlabeled: agg.n_unlabeled,
            independent_messages: agg.n_independent,
            parties_aggregated: agg.parties.len(),
            below_threshold: agg.below_threshold.clone(),
            no_messages: agg.no_messages.clone(),
            missing_meta: agg.missing_meta().map(|p| p.party_id.clone()).collect(),
        },
    };
    write_json(&out.join("study_manifest.json"), &manifest)?;
    Ok(())
}
