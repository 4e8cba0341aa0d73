//! Prompt construction, language-model transport and template extraction.

mod http;
mod mock;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Template;

pub use http::{HttpBackend, HttpConfig};
pub use mock::{CallRecord, MockBackend};

/// Version tag of the bundled instruction texts.
pub const PROMPT_VERSION: &str = "v1";

const PARSE_INSTRUCTION: &str = include_str!("../../prompts/parse.txt");
const MATCH_CORRECTION_INSTRUCTION: &str = include_str!("../../prompts/match_correction.txt");
const ABSTRACTION_CORRECTION_INSTRUCTION: &str =
    include_str!("../../prompts/abstraction_correction.txt");

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("mock backend has no response for {kind} query `{query}`")]
    MockMissingFixture { kind: PromptKind, query: String },
    #[error("model output was truncated")]
    OutputTruncated,
    #[error("no template could be extracted from the model output")]
    EmptyExtraction,
    #[error("backend misconfigured: {0}")]
    Misconfigured(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Parse,
    MatchCorrection,
    AbstractionCorrection,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Parse => "parse",
            PromptKind::MatchCorrection => "match_correction",
            PromptKind::AbstractionCorrection => "abstraction_correction",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parse" => Ok(PromptKind::Parse),
            "match_correction" => Ok(PromptKind::MatchCorrection),
            "abstraction_correction" => Ok(PromptKind::AbstractionCorrection),
            other => Err(format!("unknown prompt kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub kind: PromptKind,
    pub instruction: String,
    /// `(content, rendered template)` pairs, in prompt order.
    pub demonstrations: Vec<(String, String)>,
    /// The log content being parsed or corrected.
    pub query: String,
    /// Ordered extra context (the failed template, flagged phrases).
    pub extra: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl Prompt {
    /// User-turn text: demonstrations, any extra context, then the query.
    pub fn body(&self) -> String {
        let mut out = String::new();
        for (content, template) in &self.demonstrations {
            out.push_str(&format!("Log message: `{content}`\nLog template: `{template}`\n\n"));
        }
        match self.kind {
            PromptKind::Parse => {
                out.push_str(&format!("Log message: `{}`\nLog template:", self.query));
            }
            PromptKind::MatchCorrection => {
                out.push_str(&format!("Log message: `{}`\n", self.query));
                let template = self.extra_value("template").unwrap_or_default();
                out.push_str(&format!(
                    "Generated template (does NOT match the log message): `{template}`\n"
                ));
                out.push_str("Corrected log template:");
            }
            PromptKind::AbstractionCorrection => {
                out.push_str(&format!("Log message: `{}`\n", self.query));
                let template = self.extra_value("template").unwrap_or_default();
                out.push_str(&format!("Generated template: `{template}`\n"));
                out.push_str("Phrases replaced by <*> that may not be variables:\n");
                for (key, phrase) in &self.extra {
                    if key == "flagged" {
                        out.push_str(&format!("- \"{phrase}\"\n"));
                    }
                }
                out.push_str("Corrected log template:");
            }
        }
        out
    }

    /// Full prompt as one text block.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.instruction.trim_end(), self.body())
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage {
                role: Role::System,
                content: self.instruction.trim_end().to_string(),
            },
            ChatMessage {
                role: Role::User,
                content: self.body(),
            },
        ]
    }

    pub fn extra_value(&self, key: &str) -> Option<&str> {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Parse prompt. `demonstrations` keep the order they are given in.
pub fn build_parse_prompt<C, T>(query_content: &str, demonstrations: &[(C, T)]) -> Prompt
where
    C: AsRef<str>,
    T: fmt::Display,
{
    Prompt {
        kind: PromptKind::Parse,
        instruction: PARSE_INSTRUCTION.to_string(),
        demonstrations: demonstrations
            .iter()
            .map(|(c, t)| (c.as_ref().to_string(), t.to_string()))
            .collect(),
        query: query_content.to_string(),
        extra: Vec::new(),
    }
}

pub fn build_match_correction_prompt(content: &str, failed: &Template) -> Prompt {
    Prompt {
        kind: PromptKind::MatchCorrection,
        instruction: MATCH_CORRECTION_INSTRUCTION.to_string(),
        demonstrations: Vec::new(),
        query: content.to_string(),
        extra: vec![("template".to_string(), failed.render())],
    }
}

pub fn build_abstraction_correction_prompt(
    content: &str,
    template: &Template,
    flagged: &[String],
) -> Prompt {
    debug_assert!(!flagged.is_empty());
    let mut extra = vec![("template".to_string(), template.render())];
    extra.extend(flagged.iter().map(|p| ("flagged".to_string(), p.clone())));
    Prompt {
        kind: PromptKind::AbstractionCorrection,
        instruction: ABSTRACTION_CORRECTION_INSTRUCTION.to_string(),
        demonstrations: Vec::new(),
        query: content.to_string(),
        extra,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSettings {
    pub temperature: f64,
    pub seed: i64,
    pub model: String,
    pub max_output_tokens: u32,
}

impl Default for CompletionSettings {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            seed: 0,
            model: "gpt-3.5-turbo-0125".to_string(),
            max_output_tokens: 1024,
        }
    }
}

impl CompletionSettings {
    pub fn with_temperature(&self, temperature: f64) -> Self {
        Self {
            temperature,
            ..self.clone()
        }
    }
}

/// A chat-completion service.
pub trait Backend {
    fn complete(
        &mut self,
        prompt: &Prompt,
        settings: &CompletionSettings,
    ) -> Result<String, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(
        &mut self,
        prompt: &Prompt,
        settings: &CompletionSettings,
    ) -> Result<String, GatewayError> {
        (**self).complete(prompt, settings)
    }
}

impl<B: Backend + ?Sized> Backend for &mut B {
    fn complete(
        &mut self,
        prompt: &Prompt,
        settings: &CompletionSettings,
    ) -> Result<String, GatewayError> {
        (**self).complete(prompt, settings)
    }
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```([^`]*)```").expect("valid regex"))
}

fn span_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"`([^`]*)`").expect("valid regex"))
}

/// Pulls a template out of free-form model output.
///
/// Takes the last backtick-delimited span (the last line of the last fenced
/// block if the output has one), else the last non-empty line, then strips a
/// `Log template:` label and surrounding quotes.
pub fn extract_template(raw: &str) -> Result<Template, GatewayError> {
    let candidate = if let Some(block) = fence_re().captures_iter(raw).last() {
        block[1]
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("")
            .to_string()
    } else if let Some(span) = span_re()
        .captures_iter(raw)
        .filter(|c| !c[1].trim().is_empty())
        .last()
    {
        span[1].to_string()
    } else {
        raw.lines()
            .rev()
            .map(|l| l.trim().trim_matches('`').trim())
            .find(|l| !l.is_empty())
            .unwrap_or("")
            .to_string()
    };

    let mut text = candidate.trim();
    for label in ["Log template:", "Corrected log template:", "Template:"] {
        if let Some(rest) = text.strip_prefix(label) {
            text = rest.trim();
        }
    }
    let text = strip_quotes(text);
    let template = Template::parse(text);
    if template.is_empty() {
        return Err(GatewayError::EmptyExtraction);
    }
    Ok(template)
}

fn strip_quotes(text: &str) -> &str {
    for quote in ['"', '\''] {
        if text.len() >= 2 && text.starts_with(quote) && text.ends_with(quote) {
            return text[1..text.len() - 1].trim();
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shot_prompt_has_instruction_and_query_only() {
        let p = build_parse_prompt::<&str, &str>("apmd shutdown succeeded", &[]);
        assert!(p.demonstrations.is_empty());
        assert_eq!(
            p.body(),
            "Log message: `apmd shutdown succeeded`\nLog template:"
        );
        assert!(p.text().starts_with("You will be given a log message"));
    }

    #[test]
    fn demonstrations_keep_given_order() {
        let demos = [("a 1", "a <*>"), ("b 2", "b <*>"), ("c 3", "c <*>")];
        let p = build_parse_prompt("c 4", &demos);
        let body = p.body();
        let pos: Vec<_> = ["`a 1`", "`b 2`", "`c 3`", "`c 4`"]
            .iter()
            .map(|s| body.find(s).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(build_parse_prompt("c 4", &demos).text(), p.text());
    }

    #[test]
    fn match_correction_prompt_shows_log_and_failed_template() {
        let content = "Send 0x300sent to peer";
        let failed = Template::parse("Send <*> sent to peer");
        let p = build_match_correction_prompt(content, &failed);
        let text = p.text();
        assert!(text.contains("0x300sent"));
        assert!(text.contains("`Send <*> sent to peer`"));
        assert!(text.contains("does NOT match"));
        assert!(p.demonstrations.is_empty());
        assert_eq!(build_match_correction_prompt(content, &failed), p);
    }

    #[test]
    fn abstraction_prompt_quotes_flagged_phrases_in_order() {
        let p = build_abstraction_correction_prompt(
            "IOException: Could not read from stream; reset by peer",
            &Template::parse("IOException: <*> reset by <*>"),
            &["Could not read from stream;".into(), "peer".into()],
        );
        let text = p.text();
        let first = text.find("\"Could not read from stream;\"").unwrap();
        let second = text.find("\"peer\"").unwrap();
        assert!(first < second);
        assert!(p.demonstrations.is_empty());
    }

    #[test]
    fn extraction_rules() {
        assert_eq!(
            extract_template("The template is `a <*> b`.").unwrap().render(),
            "a <*> b"
        );
        assert_eq!(extract_template("a <*> b").unwrap().render(), "a <*> b");
        assert_eq!(
            extract_template("Sure! Here:\n`x <*>`\nHope it helps `y`")
                .unwrap()
                .render(),
            "y"
        );
        assert_eq!(
            extract_template("```\nfoo <*> bar\n```").unwrap().render(),
            "foo <*> bar"
        );
        assert_eq!(extract_template("\"a <*>\"").unwrap().render(), "a <*>");
        assert_eq!(
            extract_template("Log template: x <*>").unwrap().render(),
            "x <*>"
        );
        assert!(matches!(
            extract_template("`   `"),
            Err(GatewayError::EmptyExtraction)
        ));
    }

    #[test]
    fn kind_round_trips_through_text() {
        for kind in [
            PromptKind::Parse,
            PromptKind::MatchCorrection,
            PromptKind::AbstractionCorrection,
        ] {
            assert_eq!(kind.as_str().parse::<PromptKind>().unwrap(), kind);
        }
    }
}
