//! Independent oracles and fixture helpers shared by the integration tests.
//!
//! Nothing here calls into the code paths it is used to check: LCS is found
//! by subsequence enumeration, tree lookups by matching every stored template
//! recursively, and metrics by comparing message sets pairwise.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use logparse::{LogRecord, Rational, Template, TemplateToken};
use rand::Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

/// `(line_id, content, template)` rows of the bundled corpus.
pub fn load_corpus() -> Vec<(u64, String, String)> {
    let mut reader = csv::Reader::from_path(fixture_path("spark_200.log_structured.csv"))
        .expect("fixture corpus present");
    reader
        .records()
        .map(|r| {
            let r = r.expect("well-formed fixture row");
            (r[0].parse().unwrap(), r[1].to_string(), r[2].to_string())
        })
        .collect()
}

pub fn corpus_records(rows: &[(u64, String, String)]) -> Vec<LogRecord> {
    rows.iter()
        .map(|(id, content, _)| LogRecord::new(*id, content).unwrap())
        .collect()
}

/// Brute-force LCS: the longest subsequence of `a` (by bitmask) that is also
/// a subsequence of `b`. Only for short inputs.
pub fn brute_lcs(a: &[&str], b: &[&str]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let picked: Vec<&str> = (0..a.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| a[i])
            .collect();
        if picked.len() > best && is_subsequence(&picked, b) {
            best = picked.len();
        }
    }
    best
}

fn is_subsequence(needle: &[&str], hay: &[&str]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Brute-force similarity as an exact ratio.
pub fn brute_similarity(a: &[&str], b: &[&str]) -> Rational {
    Rational::new(2 * brute_lcs(a, b) as u64, (a.len() + b.len()) as u64)
}

/// Token-level matcher: wildcards take one or more tokens.
pub fn naive_token_match(template: &[TemplateToken], query: &[&str]) -> bool {
    match template.split_first() {
        None => query.is_empty(),
        Some((TemplateToken::Constant(c), rest)) => {
            !query.is_empty() && query[0] == c && naive_token_match(rest, &query[1..])
        }
        Some((TemplateToken::Wildcard, rest)) => {
            (1..=query.len()).any(|k| naive_token_match(rest, &query[k..]))
        }
    }
}

/// Winner among `stored` templates for `query`: fewest wildcard-consumed
/// tokens, then fewest wildcards, then smallest rendering.
pub fn naive_best_match<'a>(stored: &'a [Template], query: &[&str]) -> Option<&'a Template> {
    stored
        .iter()
        .filter(|t| naive_token_match(t.tokens(), query))
        .min_by(|a, b| {
            let key = |t: &Template| {
                let consumed = query.len()
                    - t.tokens()
                        .iter()
                        .filter(|x| !x.is_wildcard())
                        .count();
                let wildcards = t.tokens().iter().filter(|x| x.is_wildcard()).count();
                (consumed, wildcards, t.render())
            };
            key(a).cmp(&key(b))
        })
}

/// Metrics computed straight from the definitions by pairwise set comparison.
#[derive(Debug, PartialEq)]
pub struct OracleMetrics {
    pub ga: Rational,
    pub fga: Rational,
    pub pa: Rational,
    pub fta: Rational,
}

pub fn oracle_metrics(parsed: &BTreeMap<u64, String>, truth: &BTreeMap<u64, String>) -> OracleMetrics {
    let ids: Vec<u64> = parsed.keys().copied().collect();
    let members = |map: &BTreeMap<u64, String>, t: &str| -> BTreeSet<u64> {
        ids.iter().copied().filter(|i| map[i] == t).collect()
    };

    let n = ids.len() as u64;
    let grouped = ids
        .iter()
        .filter(|i| members(parsed, &parsed[*i]) == members(truth, &truth[*i]))
        .count() as u64;
    let parsed_ok = ids.iter().filter(|i| parsed[*i] == truth[*i]).count() as u64;

    let parsed_templates: BTreeSet<&String> = parsed.values().collect();
    let truth_templates: BTreeSet<&String> = truth.values().collect();
    let mut group_hits = 0u64;
    let mut template_hits = 0u64;
    for p in &parsed_templates {
        let p_ids = members(parsed, p);
        for t in &truth_templates {
            if members(truth, t) == p_ids {
                group_hits += 1;
                if p == t {
                    template_hits += 1;
                }
            }
        }
    }
    let np = parsed_templates.len() as u64;
    let ng = truth_templates.len() as u64;
    let f1 = |hits: u64| {
        if hits == 0 {
            return Rational::from_integer(0);
        }
        let precision = Rational::new(hits, np);
        let recall = Rational::new(hits, ng);
        Rational::from_integer(2) * precision * recall / (precision + recall)
    };
    OracleMetrics {
        ga: Rational::new(grouped, n),
        fga: f1(group_hits),
        pa: Rational::new(parsed_ok, n),
        fta: f1(template_hits),
    }
}

/// Random template over a small constant vocabulary.
pub fn random_template<R: Rng>(rng: &mut R, vocab: &[&str], max_len: usize, wildcard_p: f64) -> Template {
    let len = rng.gen_range(1..=max_len);
    Template::from_tokens((0..len).map(|_| {
        if rng.gen_bool(wildcard_p) {
            TemplateToken::Wildcard
        } else {
            TemplateToken::Constant(vocab[rng.gen_range(0..vocab.len())].to_string())
        }
    }))
}

/// Replaces each wildcard with 1..=max_width tokens drawn from `fill`.
pub fn instantiate<R: Rng>(rng: &mut R, template: &Template, fill: &[&str], max_width: usize) -> Vec<String> {
    let mut out = Vec::new();
    for token in template.tokens() {
        match token {
            TemplateToken::Constant(c) => out.push(c.clone()),
            TemplateToken::Wildcard => {
                for _ in 0..rng.gen_range(1..=max_width) {
                    out.push(fill[rng.gen_range(0..fill.len())].to_string());
                }
            }
        }
    }
    out
}
