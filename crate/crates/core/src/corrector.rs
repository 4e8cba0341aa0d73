//! Verification and repair of model-generated templates.
//!
//! Two failure modes are handled. A template that does not reproduce its log
//! message is sent back with a match-correction prompt. A template that does
//! match but swallows diagnostic text (exception messages, failure
//! descriptions) into a wildcard is sent back once per distinct set of
//! suspicious captures with an abstraction-correction prompt. The `i`-th
//! correction request runs at temperature `i * alpha`. If no verified
//! template emerges within the iteration budget, a deterministic fallback
//! wildcards every digit-bearing token of the message.

use thiserror::Error;

use crate::gateway::{
    build_abstraction_correction_prompt, build_match_correction_prompt, extract_template, Backend,
    CompletionSettings, GatewayError,
};
use crate::model::{tokenize_coarse, Template, TemplateToken};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorConfig {
    /// Temperature step between correction requests.
    pub alpha: f64,
    pub max_iterations: u32,
    pub keywords: Vec<String>,
    pub keyword_case_insensitive: bool,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            max_iterations: 3,
            keywords: ["Exception", "failed", "interrupted"]
                .map(String::from)
                .to_vec(),
            keyword_case_insensitive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("alpha must be non-negative, got {0}")]
    NegativeAlpha(String),
    #[error("max_iterations must be positive")]
    NoIterations,
    #[error("alpha * max_iterations = {0} exceeds the temperature ceiling of 2")]
    TemperatureCeiling(String),
}

impl CorrectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(ConfigError::NegativeAlpha(self.alpha.to_string()));
        }
        if self.max_iterations == 0 {
            return Err(ConfigError::NoIterations);
        }
        let peak = self.alpha * self.max_iterations as f64;
        if peak > 2.0 {
            return Err(ConfigError::TemperatureCeiling(peak.to_string()));
        }
        Ok(())
    }

    /// Temperature of the `iteration`-th correction request (1-based).
    pub fn temperature(&self, iteration: u32) -> f64 {
        iteration as f64 * self.alpha
    }

    /// Parses a keyword file: one keyword per line, blank lines and `#`
    /// comments ignored.
    pub fn parse_keywords(text: &str) -> Vec<String> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect()
    }

    fn mentions_keyword(&self, text: &str) -> bool {
        if self.keyword_case_insensitive {
            let text = text.to_lowercase();
            self.keywords
                .iter()
                .any(|k| text.contains(&k.to_lowercase()))
        } else {
            self.keywords.iter().any(|k| text.contains(k.as_str()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectionOutcome {
    pub template: Template,
    /// Correction requests issued.
    pub iterations_used: u32,
    /// A model template passed matching verification.
    pub accepted: bool,
    pub fallback_used: bool,
    /// Suspicious captures left in the final template.
    pub flags_remaining: Vec<String>,
}

#[derive(Debug, Error)]
#[error("correction aborted after {iterations_used} request(s): {source}")]
pub struct CorrectionAborted {
    /// Latest template seen before the failure.
    pub best: Template,
    pub iterations_used: u32,
    #[source]
    pub source: GatewayError,
}

/// Whether `template` reproduces `content` at the character level.
pub fn verify_match(content: &str, template: &Template) -> bool {
    !template.is_empty() && template.compile().is_match(content)
}

/// Captures that contain a keyword or whose nearest preceding constant does,
/// in wildcard order.
///
/// # Panics
///
/// If `template` does not match `content`.
pub fn flag_wildcards(content: &str, template: &Template, config: &CorrectorConfig) -> Vec<String> {
    let bindings = template
        .compile()
        .extract(content)
        .expect("flag_wildcards requires a matching template");

    let mut flagged = Vec::new();
    let mut preceding: Option<&str> = None;
    let mut captures = bindings.into_iter();
    for token in template.tokens() {
        match token {
            TemplateToken::Constant(text) => preceding = Some(text),
            TemplateToken::Wildcard => {
                let value = captures.next().expect("one capture per wildcard").value;
                let after_keyword = preceding.is_some_and(|c| config.mentions_keyword(c));
                if config.mentions_keyword(&value) || after_keyword {
                    flagged.push(value);
                }
            }
        }
    }
    flagged
}

/// Template over the message's own tokens with every token that contains a
/// decimal digit replaced by a wildcard. Always matches `content`.
pub fn fallback_template(content: &str) -> Template {
    Template::from_tokens(tokenize_coarse(content).into_iter().map(|token| {
        if token.chars().any(|c| c.is_ascii_digit()) {
            TemplateToken::Wildcard
        } else {
            TemplateToken::Constant(token.to_string())
        }
    }))
}

/// Runs the correction loop on `initial`.
pub fn correct<B: Backend + ?Sized>(
    content: &str,
    initial: Template,
    backend: &mut B,
    config: &CorrectorConfig,
    settings: &CompletionSettings,
) -> Result<CorrectionOutcome, CorrectionAborted> {
    let mut current = initial;
    let mut attempted_flags: Vec<Vec<String>> = Vec::new();
    let mut calls = 0u32;

    for iteration in 1..=config.max_iterations {
        let call_settings = settings.with_temperature(config.temperature(iteration));

        if !verify_match(content, &current) {
            let prompt = build_match_correction_prompt(content, &current);
            let raw = backend
                .complete(&prompt, &call_settings)
                .map_err(|source| CorrectionAborted {
                    best: current.clone(),
                    iterations_used: calls,
                    source,
                })?;
            calls += 1;
            if let Ok(revised) = extract_template(&raw) {
                current = revised;
            }
            continue;
        }

        let flags = flag_wildcards(content, &current, config);
        if !flags.is_empty() && !attempted_flags.contains(&flags) {
            let prompt = build_abstraction_correction_prompt(content, &current, &flags);
            let raw = backend
                .complete(&prompt, &call_settings)
                .map_err(|source| CorrectionAborted {
                    best: current.clone(),
                    iterations_used: calls,
                    source,
                })?;
            calls += 1;
            if let Ok(revised) = extract_template(&raw) {
                if verify_match(content, &revised) {
                    current = revised;
                }
            }
            attempted_flags.push(flags);
            continue;
        }

        return Ok(CorrectionOutcome {
            template: current,
            iterations_used: calls,
            accepted: true,
            fallback_used: false,
            flags_remaining: flags,
        });
    }

    if verify_match(content, &current) {
        let flags_remaining = flag_wildcards(content, &current, config);
        return Ok(CorrectionOutcome {
            template: current,
            iterations_used: calls,
            accepted: true,
            fallback_used: false,
            flags_remaining,
        });
    }

    let template = fallback_template(content);
    let flags_remaining = flag_wildcards(content, &template, config);
    Ok(CorrectionOutcome {
        template,
        iterations_used: calls,
        accepted: false,
        fallback_used: true,
        flags_remaining,
    })
}
