//! Run configuration: command-line flags over a TOML file over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use logparse::{CandidateConfig, CompletionSettings, CorrectorConfig, PipelineConfig, Tokenization, TreeConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

/// Tokens compared when ranking demonstrations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionTokens {
    /// Split on whitespace and punctuation.
    #[default]
    Fine,
    /// Split on whitespace only.
    Coarse,
}

/// Settings shared by `parse` and the TOML config file. Every field is
/// optional so that unset flags fall through to the file, then to defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunOptions {
    /// Directory for output files.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Labelled history (CSV with Content and EventTemplate) to seed the candidate set.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Ground truth (CSV with LineId and EventTemplate); evaluated after parsing.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Initial candidate set size.
    #[arg(long = "candidates")]
    pub candidates: Option<usize>,
    /// Demonstrations per prompt.
    #[arg(long = "demonstrations")]
    pub demonstrations: Option<usize>,
    /// Upper bound on the candidate set.
    #[arg(long)]
    pub max_candidates: Option<usize>,
    #[arg(long, value_enum)]
    pub selection_tokens: Option<SelectionTokens>,
    /// Similarity threshold for merging equal-length templates.
    #[arg(long)]
    pub similarity_threshold: Option<f64>,
    /// Distinct divergent tokens needed to merge a group.
    #[arg(long)]
    pub divergence_threshold: Option<usize>,
    /// Temperature step per correction iteration.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// Keyword file, one per line; `#` starts a comment.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Mock fixtures: CSV with Content and EventTemplate.
    #[arg(long)]
    pub mock_fixtures: Option<PathBuf>,
    /// Mock script: `kind<TAB>query<TAB>response` lines.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    #[arg(long)]
    pub seed: Option<i64>,
    /// Loghub-style line format such as `<Date> <Time> <Level>: <Content>`,
    /// or a preset: @spark, @hdfs, @linux.
    #[arg(long)]
    pub log_format: Option<String>,
    /// Regex with a named `Content` group; overrides --log-format.
    #[arg(long)]
    pub header_pattern: Option<String>,
    /// Tree saved by an earlier run.
    #[arg(long)]
    pub warm_tree: Option<PathBuf>,
}

impl RunOptions {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    /// Fields set here win over `fallback`.
    pub fn or(self, fallback: RunOptions) -> RunOptions {
        macro_rules! pick {
            ($($field:ident),*) => {
                RunOptions { $($field: self.$field.or(fallback.$field)),* }
            };
        }
        pick!(
            output_dir, history, ground_truth, candidates, demonstrations, max_candidates, selection_tokens,
            similarity_threshold, divergence_threshold, alpha, max_iterations, keywords, backend,
            mock_fixtures, mock_script, base_url, model, api_key_env, max_attempts, seed,
            log_format, header_pattern, warm_tree
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Backend {
    Mock { fixtures: Option<PathBuf>, script: Option<PathBuf> },
    Http { base_url: String, model: String, api_key_env: String, max_attempts: u32 },
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub history: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub candidates: usize,
    pub demonstrations: usize,
    pub max_candidates: usize,
    pub selection_tokens: SelectionTokens,
    pub similarity_threshold: f64,
    pub divergence_threshold: usize,
    pub alpha: f64,
    pub max_iterations: u32,
    pub keywords: Option<PathBuf>,
    pub keyword_list: Vec<String>,
    pub backend: Backend,
    pub seed: i64,
    pub model: String,
    pub log_format: Option<String>,
    pub header_pattern: Option<String>,
    pub warm_tree: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(input: PathBuf, options: RunOptions) -> Result<Self> {
        let candidate_defaults = CandidateConfig::default();
        let corrector_defaults = CorrectorConfig::default();
        let tree_defaults = TreeConfig::<f64>::default();
        let completion_defaults = CompletionSettings::default();

        let keyword_list = match &options.keywords {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading keyword file {}", path.display()))?;
                CorrectorConfig::parse_keywords(&text)
            }
            None => corrector_defaults.keywords.clone(),
        };
        let model = options.model.clone().unwrap_or(completion_defaults.model);
        let backend = match options.backend.unwrap_or(BackendKind::Mock) {
            BackendKind::Mock => Backend::Mock {
                fixtures: options.mock_fixtures.clone(),
                script: options.mock_script.clone(),
            },
            BackendKind::Http => Backend::Http {
                base_url: options
                    .base_url
                    .clone()
                    .unwrap_or_else(|| logparse::gateway::HttpConfig::default().base_url),
                model: model.clone(),
                api_key_env: options
                    .api_key_env
                    .clone()
                    .unwrap_or_else(|| logparse::gateway::HttpConfig::default().api_key_env),
                max_attempts: options.max_attempts.unwrap_or(3),
            },
        };

        let config = RunConfig {
            output_dir: options.output_dir.unwrap_or_else(|| PathBuf::from(".")),
            input,
            history: options.history,
            ground_truth: options.ground_truth,
            candidates: options.candidates.unwrap_or(candidate_defaults.initial_candidates),
            demonstrations: options.demonstrations.unwrap_or(candidate_defaults.demonstrations),
            max_candidates: options.max_candidates.unwrap_or(candidate_defaults.max_candidates),
            selection_tokens: options.selection_tokens.unwrap_or_default(),
            similarity_threshold: options.similarity_threshold.unwrap_or(tree_defaults.similarity_threshold),
            divergence_threshold: options.divergence_threshold.unwrap_or(tree_defaults.divergence_threshold),
            alpha: options.alpha.unwrap_or(corrector_defaults.alpha),
            max_iterations: options.max_iterations.unwrap_or(corrector_defaults.max_iterations),
            keywords: options.keywords,
            keyword_list,
            backend,
            seed: options.seed.unwrap_or(completion_defaults.seed),
            model,
            log_format: options.log_format,
            header_pattern: options.header_pattern,
            warm_tree: options.warm_tree,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            bail!("--similarity-threshold must be in (0, 1], got {}", self.similarity_threshold);
        }
        if self.candidates > 0 && self.demonstrations > self.candidates {
            bail!(
                "--demonstrations ({}) exceeds --candidates ({})",
                self.demonstrations,
                self.candidates
            );
        }
        if self.max_candidates < self.candidates {
            bail!(
                "--max-candidates ({}) is below --candidates ({})",
                self.max_candidates,
                self.candidates
            );
        }
        self.pipeline_config().corrector.validate()?;
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            tree: TreeConfig {
                similarity_threshold: self.similarity_threshold,
                divergence_threshold: self.divergence_threshold,
                ..TreeConfig::default()
            },
            candidates: CandidateConfig {
                initial_candidates: self.candidates,
                demonstrations: self.demonstrations,
                max_candidates: self.max_candidates,
                selection_tokens: match self.selection_tokens {
                    SelectionTokens::Fine => Tokenization::Fine,
                    SelectionTokens::Coarse => Tokenization::Coarse,
                },
            },
            corrector: CorrectorConfig {
                alpha: self.alpha,
                max_iterations: self.max_iterations,
                keywords: self.keyword_list.clone(),
                ..CorrectorConfig::default()
            },
            completion: CompletionSettings {
                seed: self.seed,
                model: self.model.clone(),
                ..CompletionSettings::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let file: RunOptions = toml::from_str("candidates = 16\ndemonstrations = 2\nalpha = 0.5").unwrap();
        let flags = RunOptions { demonstrations: Some(4), ..RunOptions::default() };
        let config = RunConfig::resolve("in.log".into(), flags.or(file)).unwrap();
        assert_eq!(config.candidates, 16);
        assert_eq!(config.demonstrations, 4);
        assert_eq!(config.alpha, 0.5);
        assert_eq!(config.max_iterations, 3);
        assert_eq!(config.similarity_threshold, 0.8);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            RunOptions { similarity_threshold: Some(0.0), ..RunOptions::default() },
            RunOptions { demonstrations: Some(5), candidates: Some(4), ..RunOptions::default() },
            RunOptions { alpha: Some(-1.0), ..RunOptions::default() },
        ];
        for options in bad {
            assert!(RunConfig::resolve("in.log".into(), options).is_err());
        }
        // Zero-shot configurations may ask for demonstrations they will not get.
        let zero = RunOptions { candidates: Some(0), max_candidates: Some(0), ..RunOptions::default() };
        assert!(RunConfig::resolve("in.log".into(), zero).is_ok());
    }

    #[test]
    fn unknown_file_keys_are_errors() {
        assert!(toml::from_str::<RunOptions>("candidatez = 3").is_err());
    }
}
