//! Trie-based template cache.
//!
//! Every node is a template token; a node carrying a [`Leaf`] terminates a
//! stored template. Constant edges consume exactly one query token and
//! wildcard edges consume one or more. A query that reaches a leaf is served
//! from the cache. A query that stalls yields the templates under the deepest
//! node it reached, and the template later produced for it is absorbed
//! against that list: merged into a near-identical template, merged with a
//! group of templates that only differ in a highly variable position, or
//! stored as a new leaf.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::model::{Template, TemplateToken, VariableBinding};
use crate::scalar::Score;
use crate::similarity::similarity;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("line {line}: expected `<template>\\t<count>`")]
    Malformed { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig<S> {
    /// Minimum similarity for a positional merge with one relevant template.
    pub similarity_threshold: S,
    /// A group merges once a divergent position holds more distinct tokens
    /// than this.
    pub divergence_threshold: usize,
    /// Cap on the relevant templates returned by a miss.
    pub max_relevant: usize,
}

impl<S: Score> Default for TreeConfig<S> {
    fn default() -> Self {
        Self {
            similarity_threshold: S::from_ratio(4, 5),
            divergence_threshold: 5,
            max_relevant: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchOutcome {
    Hit {
        template: Template,
        bindings: Vec<VariableBinding>,
    },
    Miss {
        relevant: Vec<Template>,
    },
}

impl MatchOutcome {
    pub fn is_hit(&self) -> bool {
        matches!(self, MatchOutcome::Hit { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsorbResult {
    /// Stored templates that were replaced by the merged template.
    pub merged_with: Vec<Template>,
    /// The template the tree now holds for the absorbed input.
    pub stored: Template,
}

#[derive(Debug, Clone)]
struct Leaf {
    template: Template,
    rendered: String,
    match_count: u64,
}

#[derive(Debug, Clone, Default)]
struct Node {
    parent: Option<usize>,
    depth: usize,
    children: BTreeMap<String, usize>,
    wildcard: Option<usize>,
    leaf: Option<Leaf>,
}

impl Node {
    fn is_empty(&self) -> bool {
        self.children.is_empty() && self.wildcard.is_none() && self.leaf.is_none()
    }
}

const ROOT: usize = 0;

#[derive(Debug, Clone)]
pub struct ParseTree<S> {
    nodes: Vec<Node>,
    free: Vec<usize>,
    leaves: usize,
    config: TreeConfig<S>,
}

impl<S: Score> Default for ParseTree<S> {
    fn default() -> Self {
        Self::new(TreeConfig::default())
    }
}

/// Result of a search before it is turned into a [`MatchOutcome`].
struct Search {
    best: Option<usize>,
    deepest: usize,
}

impl<S: Score> ParseTree<S> {
    pub fn new(config: TreeConfig<S>) -> Self {
        Self {
            nodes: vec![Node::default()],
            free: Vec::new(),
            leaves: 0,
            config,
        }
    }

    pub fn config(&self) -> &TreeConfig<S> {
        &self.config
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    /// Stored templates with their hit counts, ordered by rendered text.
    pub fn templates(&self) -> Vec<(Template, u64)> {
        let mut out: Vec<_> = self
            .live_leaves()
            .map(|leaf| (leaf.rendered.as_str(), leaf))
            .collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out.into_iter()
            .map(|(_, leaf)| (leaf.template.clone(), leaf.match_count))
            .collect()
    }

    pub fn contains(&self, template: &Template) -> bool {
        self.find_node(template)
            .is_some_and(|id| self.nodes[id].leaf.is_some())
    }

    pub fn match_count(&self, template: &Template) -> Option<u64> {
        self.find_node(template)
            .and_then(|id| self.nodes[id].leaf.as_ref())
            .map(|leaf| leaf.match_count)
    }

    /// Looks `tokens` up without touching hit counts.
    ///
    /// When several stored templates match, the one whose wildcards consume
    /// the fewest tokens wins, then the one with fewest wildcards, then the
    /// lexicographically smallest rendering.
    pub fn match_tokens<T: AsRef<str>>(&self, tokens: &[T]) -> MatchOutcome {
        let search = self.search(tokens);
        self.outcome(search, tokens)
    }

    /// Like [`match_tokens`](Self::match_tokens), counting a hit on the
    /// winning leaf.
    pub fn match_and_record<T: AsRef<str>>(&mut self, tokens: &[T]) -> MatchOutcome {
        let search = self.search(tokens);
        if let Some(id) = search.best {
            if let Some(leaf) = self.nodes[id].leaf.as_mut() {
                leaf.match_count += 1;
            }
        }
        self.outcome(search, tokens)
    }

    /// Stores `template`. Inserting an already stored template is a no-op.
    pub fn insert(&mut self, template: &Template) {
        self.insert_with_count(template, 0);
    }

    /// Updates the tree with a freshly produced template, given the relevant
    /// templates of the miss that led to it.
    pub fn absorb(&mut self, corrected: &Template, relevant: &[Template]) -> AbsorbResult {
        assert!(!corrected.is_empty(), "cannot absorb an empty template");

        if let Some(target) = self.best_positional_partner(corrected, relevant) {
            let merged = positional_merge(corrected, &target);
            let replaced = if merged == target {
                Vec::new()
            } else {
                vec![target]
            };
            return self.replace(replaced, merged);
        }

        if let Some((members, merged)) = self.divergent_group(corrected, relevant) {
            return self.replace(members, merged);
        }

        self.insert(corrected);
        AbsorbResult {
            merged_with: Vec::new(),
            stored: corrected.clone(),
        }
    }

    /// Writes one `<template>\t<count>` line per stored template.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (template, count) in self.templates() {
            writeln!(out, "{template}\t{count}")?;
        }
        Ok(())
    }

    /// Loads a tree written by [`write_to`](Self::write_to). Blank lines are
    /// skipped.
    pub fn read_from<R: BufRead>(input: R, config: TreeConfig<S>) -> Result<Self, TreeError> {
        let mut tree = Self::new(config);
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (template, count) = line
                .rsplit_once('\t')
                .ok_or(TreeError::Malformed { line: idx + 1 })?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| TreeError::Malformed { line: idx + 1 })?;
            let template = Template::parse(template);
            if template.is_empty() {
                return Err(TreeError::Malformed { line: idx + 1 });
            }
            tree.insert_with_count(&template, count);
        }
        Ok(tree)
    }

    fn live_leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| n.leaf.as_ref())
    }

    fn search<T: AsRef<str>>(&self, tokens: &[T]) -> Search {
        let mut search = Search {
            best: None,
            deepest: ROOT,
        };
        let mut visited = HashSet::new();
        self.visit(ROOT, 0, tokens, &mut visited, &mut search);
        search
    }

    fn visit<T: AsRef<str>>(
        &self,
        id: usize,
        pos: usize,
        tokens: &[T],
        visited: &mut HashSet<(usize, usize)>,
        search: &mut Search,
    ) {
        if !visited.insert((id, pos)) {
            return;
        }
        let node = &self.nodes[id];
        if node.depth > self.nodes[search.deepest].depth {
            search.deepest = id;
        }
        if pos == tokens.len() {
            if let Some(leaf) = &node.leaf {
                let better = match search.best {
                    None => true,
                    Some(best) => {
                        let current = self.nodes[best].leaf.as_ref().expect("best is a leaf");
                        specificity_key(leaf, tokens.len()) < specificity_key(current, tokens.len())
                    }
                };
                if better {
                    search.best = Some(id);
                }
            }
            return;
        }
        if let Some(&child) = node.children.get(tokens[pos].as_ref()) {
            self.visit(child, pos + 1, tokens, visited, search);
        }
        if let Some(child) = node.wildcard {
            for end in pos + 1..=tokens.len() {
                self.visit(child, end, tokens, visited, search);
            }
        }
    }

    fn outcome<T: AsRef<str>>(&self, search: Search, tokens: &[T]) -> MatchOutcome {
        match search.best {
            Some(id) => {
                let template = self.nodes[id]
                    .leaf
                    .as_ref()
                    .expect("best is a leaf")
                    .template
                    .clone();
                let bindings = token_bindings(&template, tokens)
                    .expect("a tree hit implies a token-level match");
                MatchOutcome::Hit { template, bindings }
            }
            None => MatchOutcome::Miss {
                relevant: self.relevant_under(search.deepest),
            },
        }
    }

    /// Templates stored under `id`, nearest first, capped.
    fn relevant_under(&self, id: usize) -> Vec<Template> {
        if id == ROOT {
            return Vec::new();
        }
        let mut found: Vec<(usize, &Leaf)> = Vec::new();
        let mut queue = VecDeque::from([id]);
        while let Some(next) = queue.pop_front() {
            let node = &self.nodes[next];
            if let Some(leaf) = &node.leaf {
                found.push((node.depth, leaf));
            }
            queue.extend(node.children.values().copied());
            queue.extend(node.wildcard);
        }
        found.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.rendered.cmp(&b.1.rendered)));
        found
            .into_iter()
            .take(self.config.max_relevant)
            .map(|(_, leaf)| leaf.template.clone())
            .collect()
    }

    fn find_node(&self, template: &Template) -> Option<usize> {
        let mut id = ROOT;
        for token in template.tokens() {
            let node = &self.nodes[id];
            id = match token {
                TemplateToken::Constant(text) => *node.children.get(text)?,
                TemplateToken::Wildcard => node.wildcard?,
            };
        }
        Some(id)
    }

    fn alloc(&mut self, parent: usize) -> usize {
        let node = Node {
            parent: Some(parent),
            depth: self.nodes[parent].depth + 1,
            ..Node::default()
        };
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = node;
                id
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    fn insert_with_count(&mut self, template: &Template, count: u64) {
        assert!(!template.is_empty(), "cannot store an empty template");
        let mut id = ROOT;
        for token in template.tokens() {
            let existing = match token {
                TemplateToken::Constant(text) => self.nodes[id].children.get(text).copied(),
                TemplateToken::Wildcard => self.nodes[id].wildcard,
            };
            id = match existing {
                Some(child) => child,
                None => {
                    let child = self.alloc(id);
                    match token {
                        TemplateToken::Constant(text) => {
                            self.nodes[id].children.insert(text.clone(), child);
                        }
                        TemplateToken::Wildcard => self.nodes[id].wildcard = Some(child),
                    }
                    child
                }
            };
        }
        match self.nodes[id].leaf.as_mut() {
            Some(leaf) => leaf.match_count += count,
            None => {
                self.nodes[id].leaf = Some(Leaf {
                    template: template.clone(),
                    rendered: template.render(),
                    match_count: count,
                });
                self.leaves += 1;
            }
        }
    }

    /// Removes a stored template, returning its hit count.
    fn remove(&mut self, template: &Template) -> Option<u64> {
        let id = self.find_node(template)?;
        let leaf = self.nodes[id].leaf.take()?;
        self.leaves -= 1;
        let mut current = id;
        while current != ROOT && self.nodes[current].is_empty() {
            let parent = self.nodes[current].parent.expect("non-root has a parent");
            let parent_node = &mut self.nodes[parent];
            if parent_node.wildcard == Some(current) {
                parent_node.wildcard = None;
            } else {
                parent_node.children.retain(|_, child| *child != current);
            }
            self.free.push(current);
            current = parent;
        }
        Some(leaf.match_count)
    }

    fn replace(&mut self, replaced: Vec<Template>, merged: Template) -> AbsorbResult {
        let mut count = 0;
        for template in &replaced {
            count += self.remove(template).unwrap_or(0);
        }
        self.insert_with_count(&merged, count);
        AbsorbResult {
            merged_with: replaced,
            stored: merged,
        }
    }

    /// The most similar equal-length relevant template at or above the
    /// similarity threshold.
    fn best_positional_partner(&self, corrected: &Template, relevant: &[Template]) -> Option<Template> {
        let query = corrected.token_strs();
        let mut best: Option<(S, &Template)> = None;
        for candidate in relevant {
            if candidate.len() != corrected.len() {
                continue;
            }
            let score = similarity::<S, _, _>(&query, &candidate.token_strs())
                .expect("templates are non-empty")
                .value();
            if score < self.config.similarity_threshold {
                continue;
            }
            if best.is_none_or(|(top, _)| score > top) {
                best = Some((score, candidate));
            }
        }
        best.map(|(_, t)| t.clone())
    }

    /// Finds the largest group of relevant templates sharing the corrected
    /// template's length, similarity and divergent positions, whose variety
    /// at some divergent position exceeds the divergence threshold.
    fn divergent_group(
        &self,
        corrected: &Template,
        relevant: &[Template],
    ) -> Option<(Vec<Template>, Template)> {
        let query = corrected.token_strs();
        let mut groups: Vec<(S, Vec<usize>, Vec<&Template>)> = Vec::new();
        for candidate in relevant {
            if candidate.len() != corrected.len() || candidate == corrected {
                continue;
            }
            if groups.iter().any(|(_, _, members)| members.contains(&candidate)) {
                continue;
            }
            let score = similarity::<S, _, _>(&query, &candidate.token_strs())
                .expect("templates are non-empty")
                .value();
            let positions = divergent_positions(corrected, candidate);
            match groups
                .iter_mut()
                .find(|(s, p, _)| *s == score && *p == positions)
            {
                Some((_, _, members)) => members.push(candidate),
                None => groups.push((score, positions, vec![candidate])),
            }
        }

        let mut chosen: Option<(Vec<usize>, Vec<&Template>)> = None;
        for (_, positions, members) in groups {
            let diverse = positions.iter().any(|&pos| {
                let distinct: HashSet<&TemplateToken> = members
                    .iter()
                    .map(|t| &t.tokens()[pos])
                    .chain(std::iter::once(&corrected.tokens()[pos]))
                    .collect();
                distinct.len() > self.config.divergence_threshold
            });
            if diverse && chosen.as_ref().is_none_or(|(_, m)| members.len() > m.len()) {
                chosen = Some((positions, members));
            }
        }

        chosen.map(|(positions, members)| {
            let merged = Template::from_tokens(corrected.tokens().iter().enumerate().map(
                |(i, token)| {
                    if positions.contains(&i) {
                        TemplateToken::Wildcard
                    } else {
                        token.clone()
                    }
                },
            ));
            let mut replaced: Vec<Template> = members.into_iter().cloned().collect();
            replaced.retain(|t| *t != merged);
            (replaced, merged)
        })
    }
}

fn specificity_key(leaf: &Leaf, query_len: usize) -> (usize, usize, &str) {
    let wildcards = leaf.template.wildcard_count();
    (
        query_len - leaf.template.constant_count(),
        wildcards,
        leaf.rendered.as_str(),
    )
}

fn divergent_positions(a: &Template, b: &Template) -> Vec<usize> {
    a.tokens()
        .iter()
        .zip(b.tokens())
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

/// Equal-length merge: positions where the two templates differ become
/// wildcards.
fn positional_merge(a: &Template, b: &Template) -> Template {
    debug_assert_eq!(a.len(), b.len());
    Template::from_tokens(a.tokens().iter().zip(b.tokens()).map(|(x, y)| {
        if x == y {
            x.clone()
        } else {
            TemplateToken::Wildcard
        }
    }))
}

/// Token-level match of `template` against `tokens`, each wildcard taking
/// one or more tokens. Earlier wildcards take as few tokens as possible.
/// Captured values are the consumed tokens joined by single spaces.
pub fn token_bindings<T: AsRef<str>>(
    template: &Template,
    tokens: &[T],
) -> Option<Vec<VariableBinding>> {
    let parts = template.tokens();
    let (m, n) = (parts.len(), tokens.len());
    // feasible[i][j]: parts[i..] can consume exactly tokens[j..].
    let mut feasible = vec![vec![false; n + 1]; m + 1];
    feasible[m][n] = true;
    for i in (0..m).rev() {
        for j in (0..=n).rev() {
            feasible[i][j] = match &parts[i] {
                TemplateToken::Constant(text) => {
                    j < n && tokens[j].as_ref() == text && feasible[i + 1][j + 1]
                }
                TemplateToken::Wildcard => (j + 1..=n).any(|end| feasible[i + 1][end]),
            };
        }
    }
    if !feasible[0][0] {
        return None;
    }

    let mut bindings = Vec::with_capacity(template.wildcard_count());
    let mut j = 0;
    for (i, part) in parts.iter().enumerate() {
        match part {
            TemplateToken::Constant(_) => j += 1,
            TemplateToken::Wildcard => {
                let end = (j + 1..=n)
                    .find(|&end| feasible[i + 1][end])
                    .expect("feasibility table guarantees a split");
                let value = tokens[j..end]
                    .iter()
                    .map(AsRef::as_ref)
                    .collect::<Vec<_>>()
                    .join(" ");
                bindings.push(VariableBinding {
                    wildcard_index: bindings.len(),
                    value,
                });
                j = end;
            }
        }
    }
    Some(bindings)
}
