//! Zero-shot annotation of negative campaigning in political messages,
//! reliability benchmarking against human coders, and party-level
//! fixed-effects regression of negativity.
//!
//! The pipeline runs in stages that hand off through files:
//! [`ingest`] loads corpora and labels, [`codebook`] renders prompts,
//! [`annotator`] labels documents through a chat-completion [`annotator::Transport`],
//! [`reliability`] scores labels against gold standards, and [`study`]
//! aggregates labels per party and fits the regression models.

pub mod annotator;
pub mod codebook;
pub mod ingest;
pub mod reliability;
pub mod study;
pub mod synth;

pub use annotator::{AnnotationCache, AnnotationResult, ModelConfig};
pub use codebook::{Codebook, PromptVariant, RenderedPrompt};
pub use ingest::{Corpus, Document, GoldLabel, PartyFamily, PartyMeta};
pub use reliability::{ConfusionMatrix, RatingTable, ReliabilityReport};
pub use study::{AggregationFilters, DesignMatrix, MarginalMeansRow, ModelVariant, PartyAggregate, RegressionFit};
