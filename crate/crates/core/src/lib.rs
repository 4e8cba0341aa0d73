//! Adaptive log template extraction.
//!
//! Incoming log contents are first looked up in a trie of known templates.
//! Misses go to a language model prompted with the most similar previously
//! parsed logs, the answer is verified and corrected, and the result is fed
//! back into both the trie and the demonstration pool.
//!
//! Scores, thresholds and metrics are generic over [`Score`]; the aliases
//! below fix the scalar to `f64` or to the exact [`Rational`].

pub mod candidates;
pub mod corrector;
pub mod gateway;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod similarity;
pub mod tree;

pub use candidates::{Candidate, CandidateConfig, Origin, Tokenization};
pub use corrector::{CorrectionOutcome, CorrectorConfig};
pub use gateway::{Backend, CompletionSettings, GatewayError, MockBackend, Prompt, PromptKind};
pub use metrics::{normalize_template, GroundTruth, MetricsError};
pub use model::{LogRecord, Template, TemplateToken, VariableBinding, WILDCARD};
pub use pipeline::{ParseResult, ResultSource, RunStats};
pub use scalar::Score;
pub use similarity::{lcs_length, similarity, SimilarityError, SimilarityScore};
pub use tree::{AbsorbResult, MatchOutcome, TreeConfig};

/// Exact ratio of two counts.
pub type Rational = num_rational::Ratio<u64>;

pub type ParseTree = tree::ParseTree<f64>;
pub type ExactParseTree = tree::ParseTree<Rational>;

pub type CandidateSet = candidates::CandidateSet<f64>;
pub type ExactCandidateSet = candidates::CandidateSet<Rational>;

pub type PipelineConfig = pipeline::PipelineConfig<f64>;
pub type ExactPipelineConfig = pipeline::PipelineConfig<Rational>;

pub type Pipeline<B> = pipeline::Pipeline<f64, B>;
pub type ExactPipeline<B> = pipeline::Pipeline<Rational, B>;

pub type EvaluationReport = metrics::EvaluationReport<f64>;
pub type ExactEvaluationReport = metrics::EvaluationReport<Rational>;
