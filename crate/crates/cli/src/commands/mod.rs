//! Subcommands. Each reads files, calls into the core crate, and writes files.

pub mod annotate;
pub mod evaluate;
pub mod study;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use negcamp_core::ingest::{ingest_documents, ingest_party_meta, CorpusFormat, PartyTable};
use negcamp_core::annotator::read_annotations;
use negcamp_core::{AnnotationResult, Corpus};

use crate::exit::{Exit, EXIT_CONFIG};

/// Loads a corpus and reports rejected records on stderr.
pub(crate) fn load_corpus(path: &Path) -> Result<(Corpus, usize)> {
    let (corpus, report) = ingest_documents(path, CorpusFormat::from_path(path))
        .map_err(|e| Exit::new(EXIT_CONFIG, format!("--corpus: {e}")))?;
    for r in &report.rejections {
        eprintln!("corpus line {}: rejected ({}): {}", r.line, r.id.as_deref().unwrap_or("no id"), r.reason);
    }
    Ok((corpus, report.rejections.len()))
}

pub(crate) fn load_party_meta(path: &Path) -> Result<PartyTable> {
    ingest_party_meta(path).map_err(|e| Exit::new(EXIT_CONFIG, format!("--party-meta: {e}")).into())
}

pub(crate) fn load_annotations(path: &Path) -> Result<Vec<AnnotationResult>> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    read_annotations(BufReader::new(file)).with_context(|| format!("read annotations from {}", path.display()))
}

/// doc id -> group key, for grouping reports by a document attribute.
pub(crate) fn group_by(corpus: &Corpus, key: impl Fn(&negcamp_core::Document) -> &str) -> BTreeMap<String, String> {
    corpus.iter().map(|d| (d.id.clone(), key(d).to_string())).collect()
}
