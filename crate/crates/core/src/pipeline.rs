//! End-to-end parsing of a log stream.
//!
//! Each record is looked up in the template tree first. Misses are parsed by
//! the model with demonstrations drawn from the candidate pool, corrected,
//! added to the pool and absorbed into the tree. Records are processed
//! strictly in order because every miss changes the state the next record
//! sees.

use std::io;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::candidates::{CandidateConfig, CandidateSet};
use crate::corrector::{correct, fallback_template, CorrectorConfig};
use crate::gateway::{build_parse_prompt, extract_template, Backend, CompletionSettings};
use crate::model::{tokenize_coarse, LogRecord, Template, VariableBinding};
use crate::scalar::Score;
use crate::tree::{MatchOutcome, ParseTree, TreeConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<S> {
    pub tree: TreeConfig<S>,
    pub candidates: CandidateConfig,
    pub corrector: CorrectorConfig,
    /// Settings of the initial parse request; corrections only change the
    /// temperature.
    pub completion: CompletionSettings,
}

impl<S: Score> Default for PipelineConfig<S> {
    fn default() -> Self {
        Self {
            tree: TreeConfig::default(),
            candidates: CandidateConfig::default(),
            corrector: CorrectorConfig::default(),
            completion: CompletionSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultSource {
    Cache,
    Llm,
    LlmCorrected,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseResult {
    pub record: LogRecord,
    pub template: Template,
    pub bindings: Vec<VariableBinding>,
    pub source: ResultSource,
    /// Model requests issued for this record.
    pub llm_calls: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub records_total: u64,
    pub cache_hits: u64,
    pub llm_parse_calls: u64,
    pub correction_calls: u64,
    pub fallbacks: u64,
    pub gateway_failures: u64,
    pub tree_leaves_final: u64,
    pub candidates_final: u64,
    pub wall_time_seconds: f64,
    /// Records whose template came from the deterministic fallback.
    pub fallback_line_ids: Vec<u64>,
}

impl RunStats {
    pub fn cache_misses(&self) -> u64 {
        self.records_total - self.cache_hits
    }
}

#[derive(Debug, Error)]
#[error("input failed after {} record(s): {source}", .results.len())]
pub struct StreamError {
    /// Results produced before the failure.
    pub results: Vec<ParseResult>,
    pub stats: RunStats,
    #[source]
    pub source: io::Error,
}

pub struct Pipeline<S, B> {
    tree: ParseTree<S>,
    candidates: CandidateSet<S>,
    backend: B,
    config: PipelineConfig<S>,
    stats: RunStats,
}

impl<S: Score, B: Backend> Pipeline<S, B> {
    /// Cold start: empty tree and empty candidate pool.
    pub fn new(config: PipelineConfig<S>, backend: B) -> Self {
        Self {
            tree: ParseTree::new(config.tree),
            candidates: CandidateSet::new(config.candidates),
            backend,
            config,
            stats: RunStats::default(),
        }
    }

    pub fn with_tree(mut self, tree: ParseTree<S>) -> Self {
        self.tree = tree;
        self
    }

    pub fn with_candidates(mut self, candidates: CandidateSet<S>) -> Self {
        self.candidates = candidates;
        self
    }

    pub fn tree(&self) -> &ParseTree<S> {
        &self.tree
    }

    pub fn candidates(&self) -> &CandidateSet<S> {
        &self.candidates
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    pub fn config(&self) -> &PipelineConfig<S> {
        &self.config
    }

    /// Counters so far, with the final-size fields filled in from the current
    /// tree and pool.
    pub fn stats(&self) -> RunStats {
        RunStats {
            tree_leaves_final: self.tree.leaf_count() as u64,
            candidates_final: self.candidates.len() as u64,
            ..self.stats.clone()
        }
    }

    pub fn into_parts(self) -> (ParseTree<S>, CandidateSet<S>, B) {
        (self.tree, self.candidates, self.backend)
    }

    pub fn process_record(&mut self, record: LogRecord) -> ParseResult {
        self.stats.records_total += 1;
        let tokens = tokenize_coarse(&record.content);
        let relevant = match self.tree.match_and_record(&tokens) {
            MatchOutcome::Hit { template, bindings } => {
                self.stats.cache_hits += 1;
                return ParseResult {
                    record,
                    template,
                    bindings,
                    source: ResultSource::Cache,
                    llm_calls: 0,
                };
            }
            MatchOutcome::Miss { relevant } => relevant,
        };
        self.parse_miss(record, &relevant)
    }

    fn parse_miss(&mut self, record: LogRecord, relevant: &[Template]) -> ParseResult {
        let content = record.content.as_str();
        let demonstrations: Vec<(String, String)> = self
            .candidates
            .select_demonstrations(content, self.config.candidates.demonstrations)
            .into_iter()
            .map(|c| (c.content.clone(), c.template.render()))
            .collect();
        let prompt = build_parse_prompt(content, &demonstrations);

        self.stats.llm_parse_calls += 1;
        let parsed = self
            .backend
            .complete(&prompt, &self.config.completion)
            .map(|raw| extract_template(&raw).unwrap_or_else(|_| Template::parse("")));

        let (template, source, calls) = match parsed {
            Err(e) => {
                warn!(line_id = record.line_id, error = %e, "parse request failed; using fallback template");
                self.stats.gateway_failures += 1;
                (fallback_template(content), ResultSource::Fallback, 1)
            }
            Ok(initial) => match correct(
                content,
                initial,
                &mut self.backend,
                &self.config.corrector,
                &self.config.completion,
            ) {
                Ok(outcome) => {
                    self.stats.correction_calls += u64::from(outcome.iterations_used);
                    self.candidates.add(content, outcome.template.clone());
                    let source = if outcome.fallback_used {
                        ResultSource::Fallback
                    } else if outcome.iterations_used > 0 {
                        ResultSource::LlmCorrected
                    } else {
                        ResultSource::Llm
                    };
                    (outcome.template, source, 1 + outcome.iterations_used)
                }
                Err(aborted) => {
                    warn!(line_id = record.line_id, error = %aborted, "correction failed; using fallback template");
                    self.stats.correction_calls += u64::from(aborted.iterations_used);
                    self.stats.gateway_failures += 1;
                    (
                        fallback_template(content),
                        ResultSource::Fallback,
                        1 + aborted.iterations_used,
                    )
                }
            },
        };
        if source == ResultSource::Fallback {
            self.stats.fallbacks += 1;
            self.stats.fallback_line_ids.push(record.line_id);
        }

        let stored = self.tree.absorb(&template, relevant).stored;
        let bindings = stored
            .compile()
            .extract(content)
            .expect("stored template generalizes a matching template");
        ParseResult {
            record,
            template: stored,
            bindings,
            source,
            llm_calls: calls,
        }
    }

    /// Processes records in order. An input error stops the run and hands
    /// back everything parsed before it.
    pub fn run_stream<I>(&mut self, records: I) -> Result<(Vec<ParseResult>, RunStats), Box<StreamError>>
    where
        I: IntoIterator<Item = io::Result<LogRecord>>,
    {
        let started = Instant::now();
        let mut results = Vec::new();
        for record in records {
            match record {
                Ok(record) => results.push(self.process_record(record)),
                Err(source) => {
                    let mut stats = self.stats();
                    stats.wall_time_seconds = started.elapsed().as_secs_f64();
                    return Err(Box::new(StreamError {
                        results,
                        stats,
                        source,
                    }));
                }
            }
        }
        let mut stats = self.stats();
        stats.wall_time_seconds = started.elapsed().as_secs_f64();
        self.stats.wall_time_seconds = stats.wall_time_seconds;
        Ok((results, stats))
    }

    /// [`run_stream`](Self::run_stream) over infallible input.
    pub fn run<I>(&mut self, records: I) -> (Vec<ParseResult>, RunStats)
    where
        I: IntoIterator<Item = LogRecord>,
    {
        self.run_stream(records.into_iter().map(Ok))
            .expect("infallible input")
    }
}
