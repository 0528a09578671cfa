//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use negcamp_core::annotator::{ModelConfig, DEFAULT_ENDPOINT};
use negcamp_core::codebook::builtin_codebook;
use negcamp_core::study::{AggregationFilters, ModelVariant};
use negcamp_core::{Codebook, PromptVariant};
use serde::{Deserialize, Serialize};

use crate::exit::{Exit, EXIT_CONFIG};

pub const DEFAULT_MODEL: &str = "gpt-4o-mini-2024-07-18";
pub const DEFAULT_CODEBOOK: &str = "main_study";
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_CONTEXT_TEMPLATE: &str = "Posted by {author}, a parliamentarian of {party_name} in {country}.";

/// Flags shared by every subcommand. Anything set here wins over the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// TOML run configuration; relative paths inside it resolve against its directory
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub gold: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub party_meta: Option<PathBuf>,
    /// Built-in codebook name (broad, strict, main_study) or a codebook TOML/JSON file
    #[arg(long, value_name = "NAME|PATH")]
    pub codebook: Option<String>,
    /// Prompt variant, e.g. `no_context`, `system:adjusted`, `system_user:original`
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, value_name = "ID")]
    pub model: Option<String>,
    /// Answer from a JSONL response map instead of calling the API
    #[arg(long, value_name = "PATH")]
    pub mock: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub concurrency: Option<usize>,
    #[arg(long, value_name = "N")]
    pub min_tweets: Option<u64>,
    /// m1, m2, family, or all
    #[arg(long)]
    pub model_variant: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Annotation run to evaluate or analyse, as NAME=PATH or PATH; repeatable
    #[arg(long, value_name = "NAME=PATH")]
    pub annotations: Vec<String>,
    /// Persistent annotation cache (JSONL log)
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,
    /// Largest tolerated fraction of failed documents
    #[arg(long, value_name = "FRACTION")]
    pub failure_threshold: Option<f64>,
    #[arg(long, value_name = "CODE")]
    pub reference_country: Option<String>,
    /// Context descriptor with {author}, {party}, {party_name} and {country} placeholders
    #[arg(long)]
    pub context_template: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    corpus: Option<PathBuf>,
    gold: Option<PathBuf>,
    party_meta: Option<PathBuf>,
    mock: Option<PathBuf>,
    cache: Option<PathBuf>,
    out: Option<PathBuf>,
    #[serde(default)]
    annotations: BTreeMap<String, PathBuf>,
    codebook: Option<String>,
    variant: Option<String>,
    model: Option<String>,
    price_per_1m_input_tokens: Option<f64>,
    price_per_1m_output_tokens: Option<f64>,
    concurrency: Option<usize>,
    failure_threshold: Option<f64>,
    model_variant: Option<String>,
    reference_country: Option<String>,
    context_template: Option<String>,
    filters: Option<AggregationFilters>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub party_meta: Option<PathBuf>,
    pub mock: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub out: PathBuf,
    pub annotations: Vec<(String, PathBuf)>,
    pub codebook: String,
    pub variant: PromptVariant,
    pub model: ModelConfig,
    pub concurrency: usize,
    pub failure_threshold: f64,
    pub model_variants: Vec<ModelVariant>,
    pub reference_country: Option<String>,
    pub context_template: String,
    pub filters: AggregationFilters,
}

/// The settings that can change an output file. Paths and the concurrency
/// limit are left out: inputs are covered by content digests, and results do
/// not depend on scheduling.
#[derive(Serialize)]
struct DigestView<'a> {
    codebook: &'a str,
    variant: String,
    model: &'a ModelConfig,
    failure_threshold: f64,
    model_variants: Vec<&'static str>,
    reference_country: &'a Option<String>,
    context_template: &'a str,
    filters: &'a AggregationFilters,
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Exit::new(EXIT_CONFIG, msg).into()
}

fn parse_model_variants(s: &str) -> Result<Vec<ModelVariant>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(vec![ModelVariant::Model1, ModelVariant::Model2, ModelVariant::FamilyModel]);
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let v: ModelVariant = part.parse().map_err(|e: String| config_error(format!("--model-variant: {e}")))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

fn parse_annotation_arg(raw: &str) -> (String, PathBuf) {
    match raw.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(raw);
            let name = path.file_stem().map_or_else(|| "annotations".into(), |s| s.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

impl RunConfig {
    pub fn load(args: &RunArgs) -> Result<Self> {
        let (file, base) = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| config_error(format!("--config: cannot read {}: {e}", path.display())))?;
                let parsed: ConfigFile = toml::from_str(&text)
                    .map_err(|e| config_error(format!("--config: {}: {e}", path.display())))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (parsed, base)
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let variant_text = args.variant.clone().or(file.variant).unwrap_or_else(|| "no_context".into());
        let variant: PromptVariant =
            variant_text.parse().map_err(|e: String| config_error(format!("--variant: {e}")))?;

        let mut model = ModelConfig::preset(args.model.as_deref().or(file.model.as_deref()).unwrap_or(DEFAULT_MODEL));
        if let Some(p) = file.price_per_1m_input_tokens {
            model.price_per_1m_input_tokens = p;
        }
        if let Some(p) = file.price_per_1m_output_tokens {
            model.price_per_1m_output_tokens = p;
        }

        let concurrency = args.concurrency.or(file.concurrency).unwrap_or(8);
        if concurrency == 0 {
            return Err(config_error("--concurrency must be at least 1"));
        }
        let failure_threshold =
            args.failure_threshold.or(file.failure_threshold).unwrap_or(DEFAULT_FAILURE_THRESHOLD);
        if !(0.0..=1.0).contains(&failure_threshold) {
            return Err(config_error(format!("--failure-threshold {failure_threshold} outside [0, 1]")));
        }
        let model_variants =
            parse_model_variants(args.model_variant.as_deref().or(file.model_variant.as_deref()).unwrap_or("all"))?;

        let mut filters = file.filters.unwrap_or_default();
        if let Some(n) = args.min_tweets {
            filters.min_tweets = n;
        }

        let mut annotations: Vec<(String, PathBuf)> =
            args.annotations.iter().map(|a| parse_annotation_arg(a)).collect();
        if annotations.is_empty() {
            annotations = file.annotations.into_iter().map(|(k, p)| (k, rel(Some(p)).unwrap())).collect();
        }

        let out = args.out.clone().or_else(|| rel(file.out)).unwrap_or_else(|| PathBuf::from("out"));
        Ok(RunConfig {
            corpus: args.corpus.clone().or_else(|| rel(file.corpus)),
            gold: args.gold.clone().or_else(|| rel(file.gold)),
            party_meta: args.party_meta.clone().or_else(|| rel(file.party_meta)),
            mock: args.mock.clone().or_else(|| rel(file.mock)),
            cache: args.cache.clone().or_else(|| rel(file.cache)),
            out,
            annotations,
            codebook: args.codebook.clone().or(file.codebook).unwrap_or_else(|| DEFAULT_CODEBOOK.into()),
            variant,
            model,
            concurrency,
            failure_threshold,
            model_variants,
            reference_country: args.reference_country.clone().or(file.reference_country),
            context_template: args
                .context_template
                .clone()
                .or(file.context_template)
                .unwrap_or_else(|| DEFAULT_CONTEXT_TEMPLATE.into()),
            filters,
        })
    }

    /// Returns the path for `field`, failing with a config error if it is unset or missing on disk.
    pub fn require(&self, field: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
        let path = path.as_ref().ok_or_else(|| config_error(format!("--{field} is required")))?;
        if !path.exists() {
            return Err(config_error(format!("--{field}: {} does not exist", path.display())));
        }
        Ok(path.clone())
    }

    /// Annotation runs to read, defaulting to the annotate output in `out`.
    pub fn annotation_runs(&self) -> Result<Vec<(String, PathBuf)>> {
        let runs = if self.annotations.is_empty() {
            vec![("annotations".to_string(), self.out.join("annotations.jsonl"))]
        } else {
            self.annotations.clone()
        };
        for (name, path) in &runs {
            if !path.exists() {
                return Err(config_error(format!("--annotations: {name}: {} does not exist", path.display())));
            }
        }
        Ok(runs)
    }

    /// Built-in name first, then a file path.
    pub fn resolve_codebook(&self) -> Result<Codebook> {
        if let Some(cb) = builtin_codebook(&self.codebook) {
            return Ok(cb);
        }
        let path = Path::new(&self.codebook);
        if !path.exists() {
            return Err(config_error(format!(
                "--codebook: `{}` is neither a built-in codebook nor an existing file",
                self.codebook
            )));
        }
        Codebook::from_file(path).map_err(|e| config_error(format!("--codebook: {e}")))
    }

    pub fn endpoint(&self) -> String {
        std::env::var(negcamp_core::annotator::ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| {
                if self.model.endpoint_url.is_empty() { DEFAULT_ENDPOINT.into() } else { self.model.endpoint_url.clone() }
            })
    }

    pub fn digest(&self) -> String {
        let view = DigestView {
            codebook: &self.codebook,
            variant: self.variant.to_string(),
            model: &self.model,
            failure_threshold: self.failure_threshold,
            model_variants: self.model_variants.iter().map(|m| m.key()).collect(),
            reference_country: &self.reference_country,
            context_template: &self.context_template,
            filters: &self.filters,
        };
        let json = serde_json::to_vec(&view).expect("config serializes");
        crate::manifest::sha256_hex(&json)
    }

    pub fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("create output directory {}", self.out.display()))
    }
}
