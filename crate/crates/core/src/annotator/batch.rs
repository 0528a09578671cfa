use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{classify_one, AnnotateError, AnnotationCache, AnnotationResult, ModelConfig, RetryPolicy, Transport};
use crate::codebook::{render, Codebook, PromptVariant};
use crate::ingest::{Corpus, Document};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    /// Maximum in-flight requests; at least 1.
    pub concurrency_limit: usize,
    pub retry: RetryPolicy,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { concurrency_limit: 8, retry: RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Render,
    Transport,
    Label,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFailure {
    pub doc_id: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchOutcome {
    /// Sorted by doc id.
    pub results: Vec<AnnotationResult>,
    /// Sorted by doc id.
    pub failures: Vec<AnnotationFailure>,
}

impl BatchOutcome {
    pub fn n_documents(&self) -> usize {
        self.results.len() + self.failures.len()
    }

    pub fn failure_fraction(&self) -> f64 {
        match self.n_documents() {
            0 => 0.0,
            n => self.failures.len() as f64 / n as f64,
        }
    }

    /// True when the failure fraction is strictly above `threshold`.
    pub fn exceeds(&self, threshold: f64) -> bool {
        self.failure_fraction() > threshold
    }

    pub fn cache_hits(&self) -> usize {
        self.results.iter().filter(|r| r.from_cache).count()
    }

    pub fn token_totals(&self) -> (u64, u64) {
        self.results
            .iter()
            .fold((0, 0), |(i, o), r| (i + r.input_tokens, o + r.output_tokens))
    }
}

type Outcome = Result<AnnotationResult, AnnotationFailure>;

fn failure(doc_id: &str, err: AnnotateError) -> AnnotationFailure {
    let kind = match err {
        AnnotateError::TransportFailure { .. } => FailureKind::Transport,
        AnnotateError::LabelFailure { .. } | AnnotateError::MalformedResponse(_) => FailureKind::Label,
        AnnotateError::Cache(_) => FailureKind::Cache,
        AnnotateError::InvalidConfig(_) => FailureKind::Render,
    };
    AnnotationFailure { doc_id: doc_id.to_string(), kind, message: err.to_string() }
}

/// Labels every document of the corpus.
///
/// Workers pull documents from a shared cursor, so at most `concurrency_limit`
/// requests are in flight. Outcomes land in a slot per document and are
/// collected in corpus (id) order, which makes the output independent of
/// scheduling. `context` supplies the descriptor for context-bearing variants.
#[allow(clippy::too_many_arguments)]
pub fn annotate_batch(
    corpus: &Corpus,
    codebook: &Codebook,
    variant: PromptVariant,
    context: &(dyn Fn(&Document) -> Option<String> + Sync),
    config: &ModelConfig,
    transport: &dyn Transport,
    cache: &AnnotationCache,
    options: &BatchOptions,
) -> Result<BatchOutcome, AnnotateError> {
    config.validate()?;
    if options.concurrency_limit == 0 {
        return Err(AnnotateError::InvalidConfig("concurrency_limit must be >= 1".into()));
    }
    let docs = corpus.documents();
    let slots: Vec<Mutex<Option<Outcome>>> = docs.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);

    let work = |doc: &Document| -> Outcome {
        let descriptor = context(doc);
        let prompt = render(codebook, variant, doc, descriptor.as_deref(), &config.model_id)
            .map_err(|e| AnnotationFailure {
                doc_id: doc.id.clone(),
                kind: FailureKind::Render,
                message: e.to_string(),
            })?;
        classify_one(transport, config, &prompt, &doc.id, cache, &options.retry)
            .map_err(|e| failure(&doc.id, e))
    };

    let workers = options.concurrency_limit.min(docs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(doc) = docs.get(i) else { break };
                let outcome = work(doc);
                *slots[i].lock().expect("slot poisoned") = Some(outcome);
            });
        }
    });

    let mut out = BatchOutcome::default();
    for slot in slots {
        match slot.into_inner().expect("slot poisoned").expect("every slot filled") {
            Ok(r) => out.results.push(r),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{MockFault, MockReply, MockTransport};
    use crate::codebook::builtin_codebook;

    fn corpus(n: usize) -> Corpus {
        Corpus::from_documents((0..n).map(|i| Document {
            id: format!("d{i:03}"),
            text: format!("message {i}"),
            language: "en".into(),
            country: "UK".into(),
            author_id: "a".into(),
            party_id: "p".into(),
            created_at: "2020-01-01T00:00:00Z".into(),
            is_retweet: false,
        }))
    }

    fn run(c: &Corpus, t: &MockTransport, cache: &AnnotationCache, limit: usize) -> BatchOutcome {
        let cb = builtin_codebook("main_study").unwrap();
        let opts = BatchOptions { concurrency_limit: limit, retry: RetryPolicy::immediate() };
        annotate_batch(c, &cb, PromptVariant::default(), &|_| None, &ModelConfig::default(), t, cache, &opts).unwrap()
    }

    #[test]
    fn complete_ordered_and_cached() {
        let c = corpus(40);
        let t = MockTransport::from_responses(c.iter().map(|d| (d.id.clone(), if d.id.ends_with('3') { "1" } else { "0" })));
        let cache = AnnotationCache::in_memory();
        let a = run(&c, &t, &cache, 8);
        assert_eq!(a.results.len(), 40);
        assert!(a.failures.is_empty());
        assert!(a.results.windows(2).all(|w| w[0].doc_id < w[1].doc_id));
        assert_eq!(t.calls(), 40);

        let b = run(&c, &t, &cache, 3);
        assert_eq!(t.calls(), 40);
        assert_eq!(b.cache_hits(), 40);
        let strip = |o: &BatchOutcome| o.results.iter().map(|r| AnnotationResult { from_cache: false, ..r.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn concurrency_independent() {
        let c = corpus(30);
        let make = || MockTransport::from_responses(c.iter().map(|d| (d.id.clone(), "1")));
        let one = run(&c, &make(), &AnnotationCache::in_memory(), 1);
        let many = run(&c, &make(), &AnnotationCache::in_memory(), 16);
        assert_eq!(one, many);
    }

    #[test]
    fn failures_recorded_not_fatal() {
        let c = corpus(10);
        let mut scripts: Vec<(String, Vec<MockReply>)> =
            c.iter().skip(2).map(|d| (d.id.clone(), vec![MockReply::Text("0".into())])).collect();
        scripts.push(("d000".into(), vec![MockReply::Text("unsure".into())]));
        scripts.push(("d001".into(), vec![MockReply::Fault { fail: MockFault::Transient }]));
        let t = MockTransport::from_scripts(scripts);
        let out = run(&c, &t, &AnnotationCache::in_memory(), 4);
        assert_eq!(out.results.len(), 8);
        assert_eq!(out.failures.len(), 2);
        assert_eq!(out.failures[0].kind, FailureKind::Label);
        assert_eq!(out.failures[1].kind, FailureKind::Transport);
        assert_eq!(out.n_documents(), 10);
        assert!(out.exceeds(0.01));
        assert!(!out.exceeds(0.2));
    }

    #[test]
    fn missing_context_is_render_failure() {
        let c = corpus(2);
        let t = MockTransport::from_responses(c.iter().map(|d| (d.id.clone(), "1")));
        let cb = builtin_codebook("broad").unwrap();
        let variant = "system:original".parse().unwrap();
        let opts = BatchOptions { concurrency_limit: 2, retry: RetryPolicy::immediate() };
        let out = annotate_batch(&c, &cb, variant, &|_| None, &ModelConfig::default(), &t, &AnnotationCache::in_memory(), &opts).unwrap();
        assert_eq!(out.failures.len(), 2);
        assert!(out.failures.iter().all(|f| f.kind == FailureKind::Render));
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn zero_concurrency_rejected() {
        let c = corpus(1);
        let t = MockTransport::default();
        let cb = builtin_codebook("broad").unwrap();
        let opts = BatchOptions { concurrency_limit: 0, retry: RetryPolicy::immediate() };
        assert!(annotate_batch(&c, &cb, PromptVariant::default(), &|_| None, &ModelConfig::default(), &t, &AnnotationCache::in_memory(), &opts).is_err());
    }
}
