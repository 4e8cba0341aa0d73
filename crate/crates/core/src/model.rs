//! Log records, templates, tokenization and variable extraction.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Rendered spelling of a wildcard token.
pub const WILDCARD: &str = "<*>";

/// One log message after header stripping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    /// 1-based position in the input.
    pub line_id: u64,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<BTreeMap<String, String>>,
}

impl LogRecord {
    /// Builds a record from raw content. Returns `None` for blank content,
    /// which ingestion skips.
    pub fn new(line_id: u64, content: impl AsRef<str>) -> Option<Self> {
        let content = content.as_ref().trim();
        if content.is_empty() {
            return None;
        }
        Some(Self {
            line_id,
            content: content.to_string(),
            header: None,
        })
    }

    pub fn with_header(mut self, header: BTreeMap<String, String>) -> Self {
        self.header = Some(header);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateToken {
    Constant(String),
    Wildcard,
}

impl TemplateToken {
    /// Classifies a single whitespace-free token.
    pub fn from_token(token: &str) -> Self {
        debug_assert!(!token.is_empty() && !token.contains(char::is_whitespace));
        if token == WILDCARD {
            TemplateToken::Wildcard
        } else {
            TemplateToken::Constant(token.to_string())
        }
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, TemplateToken::Wildcard)
    }

    pub fn as_str(&self) -> &str {
        match self {
            TemplateToken::Constant(text) => text,
            TemplateToken::Wildcard => WILDCARD,
        }
    }
}

impl fmt::Display for TemplateToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Constant skeleton of a log message with variables replaced by [`WILDCARD`].
///
/// The canonical text form joins tokens with single spaces. Construction
/// always goes through whitespace tokenization, so a constant never contains
/// whitespace and never equals `"<*>"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Template {
    tokens: Vec<TemplateToken>,
}

impl Template {
    /// Parses a template string; every `"<*>"` token becomes a wildcard.
    pub fn parse(text: &str) -> Self {
        Self {
            tokens: tokenize_coarse(text)
                .into_iter()
                .map(TemplateToken::from_token)
                .collect(),
        }
    }

    /// Builds a template from tokens. Constants are re-tokenized on
    /// whitespace so the canonical-form invariants hold.
    pub fn from_tokens(tokens: impl IntoIterator<Item = TemplateToken>) -> Self {
        let mut out = Vec::new();
        for token in tokens {
            match token {
                TemplateToken::Wildcard => out.push(TemplateToken::Wildcard),
                TemplateToken::Constant(text) => out.extend(
                    tokenize_coarse(&text)
                        .into_iter()
                        .map(TemplateToken::from_token),
                ),
            }
        }
        Self { tokens: out }
    }

    /// Template made only of constants, one per whitespace token of `content`.
    pub fn literal(content: &str) -> Self {
        Self {
            tokens: tokenize_coarse(content)
                .into_iter()
                .map(|t| TemplateToken::Constant(t.to_string()))
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[TemplateToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn wildcard_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_wildcard()).count()
    }

    pub fn constant_count(&self) -> usize {
        self.len() - self.wildcard_count()
    }

    /// Token spellings with wildcards rendered literally.
    pub fn token_strs(&self) -> Vec<&str> {
        self.tokens.iter().map(TemplateToken::as_str).collect()
    }

    pub fn render(&self) -> String {
        self.token_strs().join(" ")
    }

    /// Anchored regular expression for character-level matching.
    ///
    /// Constants are escaped and joined by `\s+`; each wildcard is a lazy
    /// capture group that may match the empty string.
    pub fn to_regex(&self) -> String {
        let body = self
            .tokens
            .iter()
            .map(|token| match token {
                TemplateToken::Constant(text) => regex::escape(text),
                TemplateToken::Wildcard => "(.*?)".to_string(),
            })
            .collect::<Vec<_>>()
            .join(r"\s+");
        format!(r"(?s)\A{body}\z")
    }

    pub fn compile(&self) -> CompiledTemplate {
        CompiledTemplate::new(self)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, token) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(token.as_str())?;
        }
        Ok(())
    }
}

impl From<&str> for Template {
    fn from(text: &str) -> Self {
        Template::parse(text)
    }
}

/// A value captured for one wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableBinding {
    /// 0-based ordinal of the wildcard within the template.
    pub wildcard_index: usize,
    pub value: String,
}

/// A template's character-level matcher, compiled once.
#[derive(Debug, Clone)]
pub struct CompiledTemplate {
    regex: Regex,
}

impl CompiledTemplate {
    pub fn new(template: &Template) -> Self {
        // Escaped literals and lazy groups always form a valid pattern.
        let regex = Regex::new(&template.to_regex()).expect("template regex is well-formed");
        Self { regex }
    }

    pub fn is_match(&self, content: &str) -> bool {
        self.regex.is_match(content)
    }

    pub fn extract(&self, content: &str) -> Option<Vec<VariableBinding>> {
        let caps = self.regex.captures(content)?;
        Some(
            caps.iter()
                .skip(1)
                .enumerate()
                .map(|(wildcard_index, m)| VariableBinding {
                    wildcard_index,
                    value: m.map_or_else(String::new, |m| m.as_str().to_string()),
                })
                .collect(),
        )
    }
}

/// Splits on runs of whitespace.
pub fn tokenize_coarse(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Splits on whitespace and on every non-alphanumeric character, dropping
/// the delimiters.
pub fn tokenize_fine(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn parse_template_string(text: &str) -> Template {
    Template::parse(text)
}

pub fn render_template(template: &Template) -> String {
    template.render()
}

pub fn template_to_regex(template: &Template) -> String {
    template.to_regex()
}

/// Captures of `template` in `content`, in wildcard order, or `None` when the
/// template does not fully match.
pub fn extract_variables(content: &str, template: &Template) -> Option<Vec<VariableBinding>> {
    template.compile().extract(content)
}
