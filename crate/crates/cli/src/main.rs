mod config;
mod input;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use logparse::candidates::{HierarchicalSampler, Sampler};
use logparse::gateway::{HttpBackend, HttpConfig};
use logparse::metrics::evaluate;
use logparse::{Backend, CandidateSet, EvaluationReport, MetricsError, ParseTree, Pipeline};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

use config::{RunConfig, RunOptions};
use input::HeaderFormat;
use output::{OutputPaths, StatsDocument, StructuredWriter};

#[derive(Debug, Parser)]
#[command(name = "logparse", version, about = "Extract log templates with a trie cache and an LLM backend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a log file and write structured results.
    Parse {
        /// Raw log file, or a CSV with a Content column.
        input: PathBuf,
        /// TOML file with the same keys as the long flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        options: Box<RunOptions>,
    },
    /// Score a structured file against ground truth.
    Evaluate {
        /// Parsed structured CSV (LineId, EventTemplate).
        #[arg(long)]
        parsed: PathBuf,
        /// Ground-truth structured CSV (LineId, EventTemplate).
        #[arg(long)]
        truth: PathBuf,
        /// Where to write the report; defaults to the parsed file's directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Pick the initial candidate set from labelled history.
    Sample {
        /// Labelled CSV (Content, EventTemplate).
        #[arg(long)]
        history: PathBuf,
        #[arg(long, default_value_t = 32)]
        candidates: usize,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarise the stats file of an earlier run.
    Stats {
        stats: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Parse { input, config, options } => parse_command(input, config, *options),
        Command::Evaluate { parsed, truth, output_dir } => evaluate_command(&parsed, &truth, output_dir),
        Command::Sample { history, candidates, output } => sample_command(&history, candidates, output),
        Command::Stats { stats } => stats_command(&stats),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn make_backend(config: &RunConfig) -> Result<Box<dyn Backend>> {
    Ok(match &config.backend {
        config::Backend::Mock { fixtures, script } => {
            if fixtures.is_none() && script.is_none() {
                warn!("mock backend has no fixtures or script; every miss will use the fallback template");
            }
            Box::new(input::load_mock(fixtures.as_deref(), script.as_deref())?)
        }
        config::Backend::Http { base_url, api_key_env, max_attempts, .. } => {
            if std::env::var_os(api_key_env).is_none() {
                warn!(variable = %api_key_env, "API key variable is not set; sending requests without credentials");
            }
            let http = HttpConfig {
                base_url: base_url.clone(),
                api_key_env: api_key_env.clone(),
                max_attempts: *max_attempts,
                ..HttpConfig::default()
            };
            Box::new(HttpBackend::new(http).context("configuring HTTP backend")?)
        }
    })
}

fn header_format(config: &RunConfig) -> Result<Option<HeaderFormat>> {
    match (&config.header_pattern, &config.log_format) {
        (Some(pattern), _) => HeaderFormat::from_pattern(pattern).map(Some),
        (None, Some(format)) => HeaderFormat::from_log_format(format).map(Some),
        (None, None) => Ok(None),
    }
}

fn parse_command(input: PathBuf, config_file: Option<PathBuf>, flags: RunOptions) -> Result<()> {
    let file_options = match &config_file {
        Some(path) => RunOptions::from_file(path)?,
        None => RunOptions::default(),
    };
    let config = RunConfig::resolve(input, flags.or(file_options))?;
    let pipeline_config = config.pipeline_config();
    let format = header_format(&config)?;
    let backend = make_backend(&config)?;

    let candidates = match &config.history {
        Some(path) => {
            let history = input::read_labelled(path).context("reading history")?;
            CandidateSet::init_from_history(&history, pipeline_config.candidates)
        }
        None => {
            if config.candidates > 0 {
                warn!("no --history given; starting with an empty candidate set");
            }
            CandidateSet::new(pipeline_config.candidates)
        }
    };
    let tree = match &config.warm_tree {
        Some(path) => {
            let file = std::fs::File::open(path).with_context(|| format!("opening warm tree {}", path.display()))?;
            ParseTree::read_from(std::io::BufReader::new(file), pipeline_config.tree)
                .with_context(|| format!("reading warm tree {}", path.display()))?
        }
        None => ParseTree::new(pipeline_config.tree),
    };

    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating output directory {}", config.output_dir.display()))?;
    let paths = OutputPaths::new(&config.output_dir, &config.input);
    let records = input::read_records(&config.input, format)?;

    let mut pipeline = Pipeline::new(pipeline_config, backend)
        .with_tree(tree)
        .with_candidates(candidates);
    let mut writer = StructuredWriter::create(&paths.structured)?;
    let started = Instant::now();
    for record in records {
        let record = record.with_context(|| format!("reading {}", config.input.display()))?;
        let result = pipeline.process_record(record);
        writer.write(&result)?;
    }
    let occurrences = writer.finish()?;
    let mut stats = pipeline.stats();
    stats.wall_time_seconds = started.elapsed().as_secs_f64();

    output::write_templates(&paths.templates, &occurrences)?;
    output::write_tree(&paths.tree, pipeline.tree())?;
    output::write_candidates(&paths.candidates, pipeline.candidates())?;
    output::write_stats(&paths.stats, &config, &stats, occurrences.len())?;
    info!(
        records = stats.records_total,
        cache_hits = stats.cache_hits,
        llm_parse_calls = stats.llm_parse_calls,
        "parse finished"
    );
    println!(
        "parsed {} records into {} templates ({} cache hits, {} LLM parse calls, {} fallbacks)",
        stats.records_total,
        occurrences.len(),
        stats.cache_hits,
        stats.llm_parse_calls,
        stats.fallbacks
    );
    println!("wrote {}", paths.structured.display());

    if let Some(truth_path) = &config.ground_truth {
        let parsed: BTreeMap<u64, String> = input::read_templates_by_id(&paths.structured)?;
        let truth = input::read_templates_by_id(truth_path)?;
        let report = score(&parsed, &truth)?;
        output::write_report(&paths, &report)?;
        print!("{}", report.to_key_values());
    }
    Ok(())
}

fn score(parsed: &BTreeMap<u64, String>, truth: &BTreeMap<u64, String>) -> Result<EvaluationReport> {
    match evaluate(parsed, truth) {
        Ok(report) => Ok(report),
        Err(MetricsError::KeyMismatch { missing_in_truth, missing_in_parsed }) => {
            let mut lines = Vec::new();
            let listed = missing_in_parsed
                .iter()
                .map(|id| format!("  LineId {id}: in truth, not parsed"))
                .chain(missing_in_truth.iter().map(|id| format!("  LineId {id}: parsed, not in truth")));
            lines.extend(listed.take(10));
            let total = missing_in_truth.len() + missing_in_parsed.len();
            bail!("line ids differ in {total} places:\n{}", lines.join("\n"))
        }
        Err(e) => Err(e.into()),
    }
}

fn evaluate_command(parsed_path: &Path, truth_path: &Path, output_dir: Option<PathBuf>) -> Result<()> {
    let parsed = input::read_templates_by_id(parsed_path)?;
    let truth = input::read_templates_by_id(truth_path)?;
    let report = score(&parsed, &truth)?;

    let dir = output_dir.unwrap_or_else(|| parsed_path.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = parsed_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let name = name.strip_suffix("_structured.csv").unwrap_or(&name).to_string();
    let paths = OutputPaths::new(&dir, Path::new(&name));
    output::write_report(&paths, &report)?;

    print!("{}", report.to_key_values());
    println!();
    println!("{:>8}  {:<5} {:<5} template", "count", "group", "exact");
    for row in &report.breakdown {
        println!(
            "{:>8}  {:<5} {:<5} {}",
            row.occurrences, row.grouped_correctly, row.identified_correctly, row.template
        );
    }
    Ok(())
}

fn sample_command(history_path: &Path, budget: usize, output: Option<PathBuf>) -> Result<()> {
    let history = input::read_labelled(history_path)?;
    let usable: Vec<_> = history
        .into_iter()
        .filter(|(content, template)| {
            let ok = template.compile().is_match(content);
            if !ok {
                warn!(%content, %template, "history template does not match its content; skipped");
            }
            ok
        })
        .collect();
    let picks = HierarchicalSampler::<f64>::new().sample(&usable, budget);

    let sink: Box<dyn std::io::Write> = match &output {
        Some(path) => Box::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["Content", "EventTemplate"])?;
    for idx in picks {
        let (content, template) = &usable[idx];
        writer.write_record([content.as_str(), template.render().as_str()])?;
    }
    writer.flush()?;
    Ok(())
}

fn stats_command(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: StatsDocument = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let s = &doc.stats;
    let share = |n: u64| {
        if s.records_total == 0 {
            0.0
        } else {
            100.0 * n as f64 / s.records_total as f64
        }
    };
    println!("input:            {}", doc.input);
    println!("records:          {}", s.records_total);
    println!("templates:        {}", doc.templates);
    println!("cache hits:       {} ({:.1}%)", s.cache_hits, share(s.cache_hits));
    println!("LLM parse calls:  {} ({:.1}%)", s.llm_parse_calls, share(s.llm_parse_calls));
    println!("correction calls: {}", s.correction_calls);
    println!("fallbacks:        {}", s.fallbacks);
    println!("gateway failures: {}", s.gateway_failures);
    println!("tree leaves:      {}", s.tree_leaves_final);
    println!("candidates:       {}", s.candidates_final);
    let rate = if s.wall_time_seconds > 0.0 { s.records_total as f64 / s.wall_time_seconds } else { 0.0 };
    println!("wall time:        {:.3} s ({rate:.0} records/s)", s.wall_time_seconds);
    if !s.fallback_line_ids.is_empty() {
        let shown: Vec<String> = s.fallback_line_ids.iter().take(10).map(u64::to_string).collect();
        println!("fallback lines:   {}", shown.join(", "));
    }
    Ok(())
}
