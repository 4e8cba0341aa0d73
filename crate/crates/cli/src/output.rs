//! Structured result files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use logparse::{CandidateSet, ParseResult, ParseTree, RunStats};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Output file names derived from the input file name.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub structured: PathBuf,
    pub templates: PathBuf,
    pub stats: PathBuf,
    pub tree: PathBuf,
    pub candidates: PathBuf,
    pub report: PathBuf,
    pub breakdown: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path, input: &Path) -> Self {
        let name = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".to_string());
        let name = name.strip_suffix(".csv").unwrap_or(&name).to_string();
        let file = |suffix: &str| dir.join(format!("{name}_{suffix}"));
        Self {
            structured: file("structured.csv"),
            templates: file("templates.csv"),
            stats: file("stats.json"),
            tree: file("tree.tsv"),
            candidates: file("candidates.csv"),
            report: file("report.txt"),
            breakdown: file("breakdown.csv"),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Writes `LineId,Content,EventTemplate` rows.
pub struct StructuredWriter {
    writer: csv::Writer<BufWriter<File>>,
    occurrences: BTreeMap<String, u64>,
}

impl StructuredWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(create(path)?);
        writer.write_record(["LineId", "Content", "EventTemplate"])?;
        Ok(Self { writer, occurrences: BTreeMap::new() })
    }

    pub fn write(&mut self, result: &ParseResult) -> Result<()> {
        let template = result.template.render();
        self.writer.write_record([
            result.record.line_id.to_string().as_str(),
            result.record.content.as_str(),
            template.as_str(),
        ])?;
        *self.occurrences.entry(template).or_default() += 1;
        Ok(())
    }

    /// Flushes rows and returns per-template counts.
    pub fn finish(mut self) -> Result<BTreeMap<String, u64>> {
        self.writer.flush()?;
        Ok(self.occurrences)
    }
}

/// `EventTemplate,Occurrences`, most frequent first, ties by template text.
pub fn write_templates(path: &Path, occurrences: &BTreeMap<String, u64>) -> Result<()> {
    let mut rows: Vec<(&String, &u64)> = occurrences.iter().collect();
    rows.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    let mut writer = csv::Writer::from_writer(create(path)?);
    writer.write_record(["EventTemplate", "Occurrences"])?;
    for (template, count) in rows {
        writer.write_record([template.as_str(), count.to_string().as_str()])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_tree(path: &Path, tree: &ParseTree) -> Result<()> {
    let mut out = create(path)?;
    tree.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

/// The final candidate set in history format, oldest first.
pub fn write_candidates(path: &Path, candidates: &CandidateSet) -> Result<()> {
    let mut writer = csv::Writer::from_writer(create(path)?);
    writer.write_record(["Content", "EventTemplate"])?;
    for c in candidates.iter() {
        writer.write_record([c.content.as_str(), c.template.render().as_str()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Contents of the stats file.
#[derive(Debug, Serialize, Deserialize)]
pub struct StatsDocument {
    pub input: String,
    pub stats: RunStats,
    pub templates: usize,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn write_stats(path: &Path, config: &RunConfig, stats: &RunStats, templates: usize) -> Result<()> {
    let doc = StatsDocument {
        input: config.input.display().to_string(),
        stats: stats.clone(),
        templates,
        config: serde_json::to_value(config)?,
    };
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_report(paths: &OutputPaths, report: &logparse::EvaluationReport) -> Result<()> {
    let mut out = create(&paths.report)?;
    out.write_all(report.to_key_values().as_bytes())?;
    out.flush()?;

    let mut writer = csv::Writer::from_writer(create(&paths.breakdown)?);
    writer.write_record(["EventTemplate", "Occurrences", "GroupedCorrectly", "IdentifiedCorrectly", "TruthTemplates"])?;
    for row in &report.breakdown {
        writer.write_record([
            row.template.as_str(),
            row.occurrences.to_string().as_str(),
            row.grouped_correctly.to_string().as_str(),
            row.identified_correctly.to_string().as_str(),
            row.truth_templates.join(" | ").as_str(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
