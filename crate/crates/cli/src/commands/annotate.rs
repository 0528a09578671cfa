use std::collections::BTreeMap;
use std::time::Duration;

use anyhow::Result;
use negcamp_core::annotator::{
    annotate_batch, estimate_cost, write_annotations, AnnotationFailure, BatchOptions, HttpTransport, MockTransport,
    RetryPolicy, Transport, API_KEY_ENV,
};
use negcamp_core::{AnnotationCache, Document};
use serde::Serialize;

use super::{load_corpus, load_party_meta};
use crate::config::RunConfig;
use crate::exit::{Exit, EXIT_ANNOTATION_FAILURES, EXIT_CONFIG};
use crate::manifest::{write_json, write_with, InputDigest, Inputs, ManifestHeader};

/// Size of the full message corpus the cost projection is made for.
pub const FULL_CORPUS_SIZE: u64 = 18_066_672;

const HTTP_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Serialize)]
struct Counts {
    documents: usize,
    rejected_records: usize,
    annotated: usize,
    failed: usize,
    negative: usize,
    failure_fraction: f64,
}

#[derive(Debug, Serialize)]
struct Tokens {
    input_total: u64,
    output_total: u64,
    input_mean: f64,
    output_mean: f64,
}

#[derive(Debug, Serialize)]
struct Cost {
    price_per_1m_input_tokens: f64,
    price_per_1m_output_tokens: f64,
    run_usd: f64,
    projected_corpus_size: u64,
    projected_usd: f64,
}

#[derive(Debug, Serialize)]
struct AnnotateManifest {
    #[serde(flatten)]
    header: ManifestHeader,
    codebook: String,
    codebook_digest: String,
    model_id: String,
    variant: String,
    failure_threshold: f64,
    counts: Counts,
    tokens: Tokens,
    cost: Cost,
    failures: Vec<AnnotationFailure>,
}

/// Fills `{author}`, `{party}`, `{party_name}` and `{country}`.
pub fn fill_context(template: &str, doc: &Document, party_names: &BTreeMap<String, String>) -> String {
    let party_name = party_names
        .get(&doc.party_id)
        .filter(|n| !n.is_empty())
        .map_or(doc.party_id.as_str(), String::as_str);
    template
        .replace("{author}", &doc.author_id)
        .replace("{party_name}", party_name)
        .replace("{party}", &doc.party_id)
        .replace("{country}", &doc.country)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let corpus_path = cfg.require("corpus", &cfg.corpus)?;
    let codebook = cfg.resolve_codebook()?;
    cfg.model.validate().map_err(|e| Exit::new(EXIT_CONFIG, e.to_string()))?;

    let mut inputs = Inputs::new();
    inputs.insert("corpus".into(), InputDigest::of(&corpus_path)?);

    let transport: Box<dyn Transport> = match &cfg.mock {
        Some(mock) => {
            let mock = cfg.require("mock", &Some(mock.clone()))?;
            inputs.insert("mock".into(), InputDigest::of(&mock)?);
            Box::new(MockTransport::from_file(&mock).map_err(|e| Exit::new(EXIT_CONFIG, format!("--mock: {e}")))?)
        }
        None => Box::new(HttpTransport::from_env(&cfg.endpoint(), HTTP_TIMEOUT).ok_or_else(|| {
            Exit::new(EXIT_CONFIG, format!("{API_KEY_ENV} is not set; provide it or pass --mock"))
        })?),
    };
    // The mock answers instantly, so backing off would only slow the run down.
    let retry = if cfg.mock.is_some() { RetryPolicy::immediate() } else { RetryPolicy::default() };

    let party_names: BTreeMap<String, String> = match &cfg.party_meta {
        Some(_) => {
            let path = cfg.require("party-meta", &cfg.party_meta)?;
            load_party_meta(&path)?.into_iter().map(|(id, m)| (id, m.display_name)).collect()
        }
        None => BTreeMap::new(),
    };

    let (corpus, rejected) = load_corpus(&corpus_path)?;
    let cache = match &cfg.cache {
        Some(path) => AnnotationCache::open(path)?,
        None => AnnotationCache::in_memory(),
    };
    let template = cfg.context_template.as_str();
    let context = |d: &Document| Some(fill_context(template, d, &party_names));
    let options = BatchOptions { concurrency_limit: cfg.concurrency, retry };
    let outcome = annotate_batch(&corpus, &codebook, cfg.variant, &context, &cfg.model, transport.as_ref(), &cache, &options)
        .map_err(|e| Exit::new(EXIT_CONFIG, e.to_string()))?;

    cfg.ensure_out()?;
    write_with(&cfg.out.join("annotations.jsonl"), |w| Ok(write_annotations(w, &outcome.results)?))?;

    let (input_total, output_total) = outcome.token_totals();
    let annotated = outcome.results.len();
    let mean = |t: u64| if annotated == 0 { 0.0 } else { t as f64 / annotated as f64 };
    let (input_mean, output_mean) = (mean(input_total), mean(output_total));
    let manifest = AnnotateManifest {
        header: ManifestHeader::new("annotate", cfg.digest(), inputs),
        codebook: cfg.codebook.clone(),
        codebook_digest: codebook.digest(),
        model_id: cfg.model.model_id.clone(),
        variant: cfg.variant.to_string(),
        failure_threshold: cfg.failure_threshold,
        counts: Counts {
            documents: outcome.n_documents(),
            rejected_records: rejected,
            annotated,
            failed: outcome.failures.len(),
            negative: outcome.results.iter().filter(|r| r.label == 1).count(),
            failure_fraction: outcome.failure_fraction(),
        },
        tokens: Tokens { input_total, output_total, input_mean, output_mean },
        cost: Cost {
            price_per_1m_input_tokens: cfg.model.price_per_1m_input_tokens,
            price_per_1m_output_tokens: cfg.model.price_per_1m_output_tokens,
            run_usd: estimate_cost(annotated as u64, input_mean, output_mean, &cfg.model),
            projected_corpus_size: FULL_CORPUS_SIZE,
            projected_usd: estimate_cost(FULL_CORPUS_SIZE, input_mean, output_mean, &cfg.model),
        },
        failures: outcome.failures.clone(),
    };
    write_json(&cfg.out.join("annotate_manifest.json"), &manifest)?;

    eprintln!(
        "annotated {annotated}/{} documents ({} from cache, {} failed)",
        outcome.n_documents(),
        outcome.cache_hits(),
        outcome.failures.len()
    );
    if outcome.exceeds(cfg.failure_threshold) {
        for f in &outcome.failures {
            eprintln!("  {}: {:?}: {}", f.doc_id, f.kind, f.message);
        }
        return Err(Exit::new(
            EXIT_ANNOTATION_FAILURES,
            format!(
                "failure fraction {:.4} exceeds threshold {}",
                outcome.failure_fraction(),
                cfg.failure_threshold
            ),
        )
        .into());
    }
    Ok(())
}
