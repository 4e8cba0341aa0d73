use std::collections::{HashMap, VecDeque};

use super::{Backend, CompletionSettings, GatewayError, Prompt, PromptKind};

/// One call observed by [`MockBackend`].
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub kind: PromptKind,
    pub query: String,
    pub temperature: f64,
    pub seed: i64,
    pub demonstrations: usize,
    pub response: String,
}

/// Deterministic backend for tests and offline runs.
///
/// A call is answered from the scripted queue for its exact `(kind, query)`
/// while that queue lasts, then from the content→template fixture (wrapped in
/// backticks); anything else is a [`GatewayError::MockMissingFixture`].
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: HashMap<String, String>,
    scripts: HashMap<(PromptKind, String), VecDeque<String>>,
    calls: Vec<CallRecord>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Backend answering every query from a content→template mapping.
    pub fn from_fixtures<I, C, T>(fixtures: I) -> Self
    where
        I: IntoIterator<Item = (C, T)>,
        C: Into<String>,
        T: Into<String>,
    {
        let mut mock = Self::new();
        for (content, template) in fixtures {
            mock.add_fixture(content, template);
        }
        mock
    }

    pub fn add_fixture(&mut self, content: impl Into<String>, template: impl Into<String>) {
        self.fixtures
            .insert(content.into().trim().to_string(), template.into());
    }

    /// Queues a raw response for one `(kind, query)`.
    pub fn script(&mut self, kind: PromptKind, query: impl Into<String>, response: impl Into<String>) {
        self.scripts
            .entry((kind, query.into().trim().to_string()))
            .or_default()
            .push_back(response.into());
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.calls.iter().map(|c| c.temperature).collect()
    }

    pub fn clear_calls(&mut self) {
        self.calls.clear();
    }
}

impl Backend for MockBackend {
    fn complete(
        &mut self,
        prompt: &Prompt,
        settings: &CompletionSettings,
    ) -> Result<String, GatewayError> {
        let query = prompt.query.trim().to_string();
        let scripted = self
            .scripts
            .get_mut(&(prompt.kind, query.clone()))
            .and_then(VecDeque::pop_front);
        let response = match scripted {
            Some(response) => response,
            None => match self.fixtures.get(&query) {
                Some(template) => format!("`{template}`"),
                None => {
                    return Err(GatewayError::MockMissingFixture {
                        kind: prompt.kind,
                        query,
                    })
                }
            },
        };
        self.calls.push(CallRecord {
            kind: prompt.kind,
            query,
            temperature: settings.temperature,
            seed: settings.seed,
            demonstrations: prompt.demonstrations.len(),
            response: response.clone(),
        });
        Ok(response)
    }
}
