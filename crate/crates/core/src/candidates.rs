//! Demonstration pool for in-context parsing.
//!
//! The pool starts from a sample of labelled history (possibly nothing) and
//! grows with every template the parser produces, so later queries can be
//! shown earlier answers as examples.

use std::collections::HashSet;
use std::marker::PhantomData;

use tracing::warn;

use crate::model::{tokenize_coarse, tokenize_fine, Template};
use crate::scalar::Score;
use crate::similarity::similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    History,
    SelfGenerated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub content: String,
    /// `content` split per [`CandidateConfig::selection_tokens`].
    pub tokens: Vec<String>,
    pub template: Template,
    pub origin: Origin,
    /// Monotone insertion sequence number.
    pub inserted_at: u64,
}

/// Token sequences compared when ranking demonstrations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Tokenization {
    /// Whitespace and punctuation both separate tokens.
    #[default]
    Fine,
    /// Whitespace only.
    Coarse,
}

impl Tokenization {
    pub fn split(self, text: &str) -> Vec<&str> {
        match self {
            Tokenization::Fine => tokenize_fine(text),
            Tokenization::Coarse => tokenize_coarse(text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateConfig {
    /// Budget for the history sample.
    pub initial_candidates: usize,
    /// Demonstrations per prompt.
    pub demonstrations: usize,
    /// Soft cap on the pool; self-generated entries beyond it are evicted
    /// oldest first.
    pub max_candidates: usize,
    pub selection_tokens: Tokenization,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            initial_candidates: 32,
            demonstrations: 3,
            max_candidates: 256,
            selection_tokens: Tokenization::Fine,
        }
    }
}

/// Picks the initial pool from labelled history.
pub trait Sampler {
    /// Indices into `history`, in selection order, at most `budget` of them.
    fn sample(&self, history: &[(String, Template)], budget: usize) -> Vec<usize>;
}

/// Buckets history by `(coarse token count, first coarse token)` and visits
/// buckets round-robin, largest first. Each visit takes the bucket entry whose
/// highest fine-token similarity to the already selected entries is lowest;
/// ties go to the earliest entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct HierarchicalSampler<S>(PhantomData<S>);

impl<S> HierarchicalSampler<S> {
    pub fn new() -> Self {
        Self(PhantomData)
    }
}

impl<S: Score> Sampler for HierarchicalSampler<S> {
    fn sample(&self, history: &[(String, Template)], budget: usize) -> Vec<usize> {
        let buckets = shape_buckets(history);
        let fine: Vec<Vec<&str>> = history.iter().map(|(c, _)| tokenize_fine(c)).collect();

        let mut remaining: Vec<Vec<usize>> = buckets;
        let mut selected: Vec<usize> = Vec::new();
        while selected.len() < budget && remaining.iter().any(|b| !b.is_empty()) {
            for bucket in remaining.iter_mut() {
                if selected.len() >= budget {
                    break;
                }
                if bucket.is_empty() {
                    continue;
                }
                let mut best: Option<(usize, S)> = None;
                for (pos, &entry) in bucket.iter().enumerate() {
                    let closeness = selected
                        .iter()
                        .map(|&s| token_similarity::<S>(&fine[entry], &fine[s]))
                        .fold(S::zero(), |acc, v| if v > acc { v } else { acc });
                    if best.is_none_or(|(_, b)| closeness < b) {
                        best = Some((pos, closeness));
                    }
                }
                let (pos, _) = best.expect("bucket is non-empty");
                selected.push(bucket.remove(pos));
            }
        }
        selected
    }
}

/// History indices grouped by shape, largest group first; equal sizes keep
/// first-appearance order.
pub fn shape_buckets(history: &[(String, Template)]) -> Vec<Vec<usize>> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    for (idx, (content, _)) in history.iter().enumerate() {
        let tokens = tokenize_coarse(content);
        let key = (tokens.len(), tokens.first().copied().unwrap_or("").to_string());
        match keys.iter().position(|k| *k == key) {
            Some(b) => buckets[b].push(idx),
            None => {
                keys.push(key);
                buckets.push(vec![idx]);
            }
        }
    }
    // Stable sort keeps first-appearance order among equal sizes.
    buckets.sort_by_key(|b| std::cmp::Reverse(b.len()));
    buckets
}

/// Token similarity; two empty sequences count as identical.
fn token_similarity<S: Score>(a: &[impl AsRef<str>], b: &[impl AsRef<str>]) -> S {
    let a: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = b.iter().map(AsRef::as_ref).collect();
    similarity::<S, _, _>(&a, &b).map_or(S::one(), |s| s.value())
}

#[derive(Debug, Clone)]
pub struct CandidateSet<S> {
    candidates: Vec<Candidate>,
    rendered: HashSet<String>,
    next_seq: u64,
    config: CandidateConfig,
    _score: PhantomData<S>,
}

impl<S: Score> CandidateSet<S> {
    pub fn new(config: CandidateConfig) -> Self {
        Self {
            candidates: Vec::new(),
            rendered: HashSet::new(),
            next_seq: 0,
            config,
            _score: PhantomData,
        }
    }

    /// Seeds the pool with [`HierarchicalSampler`].
    pub fn init_from_history(history: &[(String, Template)], config: CandidateConfig) -> Self {
        Self::init_with_sampler(history, config, &HierarchicalSampler::<S>::new())
    }

    /// Seeds the pool with `sampler`. History entries whose template does not
    /// match their content are dropped before sampling.
    pub fn init_with_sampler(
        history: &[(String, Template)],
        config: CandidateConfig,
        sampler: &dyn Sampler,
    ) -> Self {
        let usable: Vec<(String, Template)> = history
            .iter()
            .filter(|(content, template)| {
                let ok = template.compile().is_match(content);
                if !ok {
                    warn!(%content, %template, "history template does not match its content; skipped");
                }
                ok
            })
            .cloned()
            .collect();
        let mut set = Self::new(config);
        for idx in sampler.sample(&usable, config.initial_candidates) {
            let (content, template) = &usable[idx];
            set.push(content, template.clone(), Origin::History);
        }
        set
    }

    pub fn config(&self) -> &CandidateConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Candidates in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter()
    }

    /// The `k` candidates most similar to `query`, least similar first, so the
    /// closest example ends up next to the query in the prompt. Equal scores
    /// keep insertion order.
    pub fn select_demonstrations(&self, query: &str, k: usize) -> Vec<&Candidate> {
        self.ranked(query, k).into_iter().map(|(c, _)| c).collect()
    }

    /// As [`select_demonstrations`](Self::select_demonstrations), with scores.
    pub fn ranked(&self, query: &str, k: usize) -> Vec<(&Candidate, S)> {
        let query_tokens = self.config.selection_tokens.split(query);
        let mut scored: Vec<(&Candidate, S)> = self
            .candidates
            .iter()
            .map(|c| (c, token_similarity::<S>(&query_tokens, &c.tokens)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores are comparable")
                .then(a.0.inserted_at.cmp(&b.0.inserted_at))
        });
        scored.truncate(k);
        scored.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .expect("scores are comparable")
                .then(a.0.inserted_at.cmp(&b.0.inserted_at))
        });
        scored
    }

    /// Adds a self-generated example. Entries whose rendered template is
    /// already pooled are ignored. Returns whether the pool changed.
    ///
    /// # Panics
    ///
    /// If `template` does not match `content`.
    pub fn add(&mut self, content: &str, template: Template) -> bool {
        assert!(
            template.compile().is_match(content),
            "candidate template `{template}` does not match `{content}`"
        );
        if !self.push(content, template, Origin::SelfGenerated) {
            return false;
        }
        if self.candidates.len() > self.config.max_candidates {
            if let Some(oldest) = self
                .candidates
                .iter()
                .position(|c| c.origin == Origin::SelfGenerated)
            {
                let evicted = self.candidates.remove(oldest);
                self.rendered.remove(&evicted.template.render());
            }
        }
        true
    }

    fn push(&mut self, content: &str, template: Template, origin: Origin) -> bool {
        if !self.rendered.insert(template.render()) {
            return false;
        }
        self.candidates.push(Candidate {
            content: content.to_string(),
            tokens: self
                .config
                .selection_tokens
                .split(content)
                .into_iter()
                .map(str::to_string)
                .collect(),
            template,
            origin,
            inserted_at: self.next_seq,
        });
        self.next_seq += 1;
        true
    }
}
