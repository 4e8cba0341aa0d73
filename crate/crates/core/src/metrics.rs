//! Grouping and parsing accuracy against ground truth.
//!
//! * GA: share of messages whose parsed group (the set of messages given the
//!   same template) equals their ground-truth group.
//! * FGA: F1 over templates, a parsed template counting as correct when its
//!   message set equals that of some ground-truth template.
//! * PA: share of messages whose parsed template string equals the truth.
//! * FTA: like FGA, additionally requiring the template strings to be equal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Score;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    Empty,
    #[error(
        "parsed and ground-truth line ids differ: {} missing from truth, {} missing from parsed",
        .missing_in_truth.len(),
        .missing_in_parsed.len()
    )]
    KeyMismatch {
        /// Ids that were parsed but have no ground truth.
        missing_in_truth: Vec<u64>,
        /// Ids with ground truth that were not parsed.
        missing_in_parsed: Vec<u64>,
    },
}

/// Trims and collapses whitespace runs. Wildcards are left alone.
pub fn normalize_template(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ground-truth templates by line id.
pub type GroundTruth = BTreeMap<u64, String>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateBreakdown {
    pub template: String,
    pub occurrences: usize,
    /// Truth templates of this template's messages, most frequent first.
    pub truth_templates: Vec<String>,
    pub grouped_correctly: bool,
    pub identified_correctly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport<S> {
    pub messages: usize,
    pub ga: S,
    pub fga: S,
    pub pa: S,
    pub fta: S,
    pub pga: S,
    pub rga: S,
    /// Template-level precision and recall behind FTA.
    pub pta: S,
    pub rta: S,
    pub n_ground_truth: usize,
    pub n_parsed: usize,
    pub n_correct_group: usize,
    pub n_correct_template: usize,
    pub correctly_grouped_messages: usize,
    pub correctly_parsed_messages: usize,
    pub breakdown: Vec<TemplateBreakdown>,
}

impl<S: Score> EvaluationReport<S> {
    /// `key = value` lines, one per metric and count.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let metrics = [
            ("GA", self.ga),
            ("FGA", self.fga),
            ("PA", self.pa),
            ("FTA", self.fta),
            ("PGA", self.pga),
            ("RGA", self.rga),
            ("PTA", self.pta),
            ("RTA", self.rta),
        ];
        for (key, value) in metrics {
            let _ = writeln!(out, "{key} = {:.6}", value.to_f64());
        }
        let counts = [
            ("messages", self.messages),
            ("N_g", self.n_ground_truth),
            ("N_p", self.n_parsed),
            ("N_c_group", self.n_correct_group),
            ("N_c_template", self.n_correct_template),
            ("correctly_grouped_messages", self.correctly_grouped_messages),
            ("correctly_parsed_messages", self.correctly_parsed_messages),
        ];
        for (key, value) in counts {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

fn harmonic<S: Score>(correct: usize, parsed: usize, truth: usize) -> S {
    // 2PR/(P+R) with P = c/p and R = c/g reduces to 2c/(p+g).
    if correct == 0 {
        S::zero()
    } else {
        S::from_ratio(2 * correct, parsed + truth)
    }
}

fn ratio<S: Score>(num: usize, den: usize) -> S {
    if den == 0 {
        S::zero()
    } else {
        S::from_ratio(num, den)
    }
}

/// Scores `parsed` against `truth`. Both maps must cover the same line ids.
pub fn evaluate<S: Score>(
    parsed: &BTreeMap<u64, String>,
    truth: &GroundTruth,
) -> Result<EvaluationReport<S>, MetricsError> {
    let missing_in_truth: Vec<u64> = parsed.keys().filter(|k| !truth.contains_key(k)).copied().collect();
    let missing_in_parsed: Vec<u64> = truth.keys().filter(|k| !parsed.contains_key(k)).copied().collect();
    if !missing_in_truth.is_empty() || !missing_in_parsed.is_empty() {
        return Err(MetricsError::KeyMismatch {
            missing_in_truth,
            missing_in_parsed,
        });
    }
    if parsed.is_empty() {
        return Err(MetricsError::Empty);
    }

    let parsed: BTreeMap<u64, String> = parsed
        .iter()
        .map(|(id, t)| (*id, normalize_template(t)))
        .collect();
    let truth: BTreeMap<u64, String> = truth
        .iter()
        .map(|(id, t)| (*id, normalize_template(t)))
        .collect();

    let parsed_groups = group_ids(&parsed);
    let truth_groups = group_ids(&truth);
    let truth_sets: HashMap<&BTreeSet<u64>, &str> = truth_groups
        .iter()
        .map(|(t, ids)| (ids, t.as_str()))
        .collect();

    let mut correctly_grouped = 0;
    let mut n_correct_group = 0;
    let mut n_correct_template = 0;
    let mut breakdown = Vec::with_capacity(parsed_groups.len());
    for (template, ids) in &parsed_groups {
        let matched_truth = truth_sets.get(ids).copied();
        let grouped = matched_truth.is_some();
        let identified = matched_truth == Some(template.as_str());
        if grouped {
            n_correct_group += 1;
            correctly_grouped += ids.len();
        }
        if identified {
            n_correct_template += 1;
        }

        let mut truth_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for id in ids {
            *truth_counts.entry(truth[id].as_str()).or_default() += 1;
        }
        let mut truth_templates: Vec<(&str, usize)> = truth_counts.into_iter().collect();
        truth_templates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        breakdown.push(TemplateBreakdown {
            template: template.clone(),
            occurrences: ids.len(),
            truth_templates: truth_templates.into_iter().map(|(t, _)| t.to_string()).collect(),
            grouped_correctly: grouped,
            identified_correctly: identified,
        });
    }

    let correctly_parsed = parsed
        .iter()
        .filter(|(id, t)| truth[*id] == **t)
        .count();

    let total = parsed.len();
    let (n_p, n_g) = (parsed_groups.len(), truth_groups.len());
    Ok(EvaluationReport {
        messages: total,
        ga: ratio(correctly_grouped, total),
        fga: harmonic(n_correct_group, n_p, n_g),
        pa: ratio(correctly_parsed, total),
        fta: harmonic(n_correct_template, n_p, n_g),
        pga: ratio(n_correct_group, n_p),
        rga: ratio(n_correct_group, n_g),
        pta: ratio(n_correct_template, n_p),
        rta: ratio(n_correct_template, n_g),
        n_ground_truth: n_g,
        n_parsed: n_p,
        n_correct_group,
        n_correct_template,
        correctly_grouped_messages: correctly_grouped,
        correctly_parsed_messages: correctly_parsed,
        breakdown,
    })
}

fn group_ids(templates: &BTreeMap<u64, String>) -> BTreeMap<String, BTreeSet<u64>> {
    let mut groups: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
    for (id, t) in templates {
        groups.entry(t.clone()).or_default().insert(*id);
    }
    groups
}
