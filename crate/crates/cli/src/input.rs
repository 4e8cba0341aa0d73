//! Reading logs, labelled CSVs and mock backend files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use logparse::{LogRecord, MockBackend, PromptKind, Template};
use regex::Regex;

/// Loghub line formats for the bundled presets.
pub const PRESETS: &[(&str, &str)] = &[
    ("@spark", "<Date> <Time> <Level> <Component>: <Content>"),
    ("@hdfs", "<Date> <Time> <Pid> <Level> <Component>: <Content>"),
    ("@linux", r"<Month> <Date> <Time> <Level> <Component>(\[<PID>\])?: <Content>"),
];

/// Splits raw lines into header fields and message content.
#[derive(Debug, Clone)]
pub struct HeaderFormat {
    regex: Regex,
    fields: Vec<String>,
}

impl HeaderFormat {
    /// Builds the line regex from a Loghub format string: each `<Field>`
    /// becomes a lazy named group, runs of spaces match any whitespace, and
    /// other text is used as regex source.
    pub fn from_log_format(format: &str) -> Result<Self> {
        let format = match PRESETS.iter().find(|(name, _)| *name == format) {
            Some((_, preset)) => *preset,
            None if format.starts_with('@') => {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                bail!("unknown log format preset `{format}`; known: {}", names.join(", "))
            }
            None => format,
        };
        let placeholder = Regex::new(r"<([^<>]+)>").expect("static regex");
        let spaces = Regex::new(r" +").expect("static regex");
        let mut pattern = String::from("^");
        let mut last = 0;
        for m in placeholder.captures_iter(format) {
            let whole = m.get(0).expect("group 0");
            pattern.push_str(&spaces.replace_all(&format[last..whole.start()], r"\s+"));
            pattern.push_str(&format!("(?P<{}>.*?)", &m[1]));
            last = whole.end();
        }
        pattern.push_str(&spaces.replace_all(&format[last..], r"\s+"));
        pattern.push('$');
        Self::from_pattern(&pattern)
    }

    /// A regex with a named `Content` group.
    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let regex = Regex::new(pattern).with_context(|| format!("invalid header pattern `{pattern}`"))?;
        if !regex.capture_names().any(|n| n == Some("Content")) {
            bail!("header pattern `{pattern}` has no named `Content` group");
        }
        let fields = regex
            .capture_names()
            .flatten()
            .filter(|n| *n != "Content")
            .map(str::to_string)
            .collect();
        Ok(Self { regex, fields })
    }

    /// Header fields and content, or `None` when the line does not fit.
    pub fn split<'a>(&self, line: &'a str) -> Option<(BTreeMap<String, String>, &'a str)> {
        let caps = self.regex.captures(line)?;
        let content = caps.name("Content")?.as_str();
        let header = self
            .fields
            .iter()
            .filter_map(|f| caps.name(f).map(|m| (f.clone(), m.as_str().to_string())))
            .collect();
        Some((header, content))
    }
}

/// Lazily yields records from `path`: a CSV with a `Content` column (and
/// optionally `LineId`) when the name ends in `.csv`, raw lines otherwise.
/// Blank lines are skipped; raw line ids count the remaining lines from 1.
pub fn read_records(
    path: &Path,
    format: Option<HeaderFormat>,
) -> Result<Box<dyn Iterator<Item = io::Result<LogRecord>>>> {
    let file = File::open(path).with_context(|| format!("opening input {}", path.display()))?;
    if is_csv(path) {
        return read_csv_records(file, path);
    }
    let mut next_id = 0u64;
    let mut unmatched = 0u64;
    let lines = BufReader::new(file).lines();
    Ok(Box::new(lines.filter_map(move |line| {
        let line = match line {
            Ok(line) => line,
            Err(e) => return Some(Err(e)),
        };
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            return None;
        }
        let (header, content) = match &format {
            Some(format) => match format.split(line) {
                Some((header, content)) if !content.trim().is_empty() => (Some(header), content),
                _ => {
                    unmatched += 1;
                    if unmatched <= 5 {
                        tracing::warn!(line, "line does not fit the log format; keeping it whole");
                    }
                    (None, line)
                }
            },
            None => (None, line),
        };
        next_id += 1;
        let record = LogRecord::new(next_id, content).expect("non-blank content");
        Some(Ok(match header {
            Some(h) => record.with_header(h),
            None => record,
        }))
    })))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_csv_records(file: File, path: &Path) -> Result<Box<dyn Iterator<Item = io::Result<LogRecord>>>> {
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let content = column(&headers, "Content", path)?;
    let line_id = headers.iter().position(|h| h == "LineId");
    let mut next_id = 0u64;
    Ok(Box::new(reader.into_records().filter_map(move |row| {
        let row = match row {
            Ok(row) => row,
            Err(e) => return Some(Err(io::Error::new(io::ErrorKind::InvalidData, e))),
        };
        next_id += 1;
        let id = match line_id.map(|i| row[i].trim().parse::<u64>()) {
            Some(Ok(id)) => id,
            Some(Err(_)) => {
                return Some(Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("row {next_id}: LineId `{}` is not a number", &row[line_id.unwrap()]),
                )))
            }
            None => next_id,
        };
        LogRecord::new(id, &row[content]).map(Ok)
    })))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{} has no `{name}` column", path.display()))
}

/// `(Content, EventTemplate)` pairs from a labelled CSV.
pub fn read_labelled(path: &Path) -> Result<Vec<(String, Template)>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let content = column(&headers, "Content", path)?;
    let template = column(&headers, "EventTemplate", path)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{}: malformed row {}", path.display(), i + 1))?;
        out.push((row[content].trim().to_string(), Template::parse(&row[template])));
    }
    Ok(out)
}

/// `LineId -> EventTemplate` from a structured CSV.
pub fn read_templates_by_id(path: &Path) -> Result<BTreeMap<u64, String>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let line_id = column(&headers, "LineId", path)?;
    let template = column(&headers, "EventTemplate", path)?;
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{}: malformed row {}", path.display(), i + 1))?;
        let id: u64 = row[line_id]
            .trim()
            .parse()
            .with_context(|| format!("{}: row {} has a bad LineId", path.display(), i + 1))?;
        if out.insert(id, row[template].to_string()).is_some() {
            bail!("{}: duplicate LineId {id}", path.display());
        }
    }
    Ok(out)
}

/// Undoes the `\n`, `\t` and `\\` escapes used in script files.
fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Mock backend from a fixture CSV and/or a script file. Script lines are
/// `kind<TAB>query<TAB>response`; blank lines and `#` comments are ignored.
pub fn load_mock(fixtures: Option<&Path>, script: Option<&Path>) -> Result<MockBackend> {
    let mut mock = MockBackend::new();
    if let Some(path) = fixtures {
        for (content, template) in read_labelled(path)? {
            mock.add_fixture(content, template.render());
        }
    }
    if let Some(path) = script {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.splitn(3, '\t').collect();
            let [kind, query, response] = parts[..] else {
                bail!("{}:{}: expected kind<TAB>query<TAB>response", path.display(), n + 1);
            };
            let kind: PromptKind = kind
                .parse()
                .map_err(|e| anyhow!("{}:{}: {e}", path.display(), n + 1))?;
            mock.script(kind, unescape(query), unescape(response));
        }
    }
    Ok(mock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spark_preset_splits_header() {
        let format = HeaderFormat::from_log_format("@spark").unwrap();
        let (header, content) = format
            .split("17/06/09 20:40:21 INFO spark.SecurityManager: Changing view acls to: spark")
            .unwrap();
        assert_eq!(content, "Changing view acls to: spark");
        assert_eq!(header["Level"], "INFO");
        assert_eq!(header["Component"], "spark.SecurityManager");
    }

    #[test]
    fn linux_preset_handles_optional_pid() {
        let format = HeaderFormat::from_log_format("@linux").unwrap();
        let (h, content) = format.split("Jun 14 15:16:01 combo sshd(pam_unix)[19939]: check pass; user unknown").unwrap();
        assert_eq!(content, "check pass; user unknown");
        assert_eq!(h["PID"], "19939");
        let (_, content) = format.split("Jun 15 04:06:18 combo su: session opened").unwrap();
        assert_eq!(content, "session opened");
    }

    #[test]
    fn pattern_needs_content_group() {
        assert!(HeaderFormat::from_pattern(r"^(?P<Level>\w+) (?P<Content>.*)$").is_ok());
        assert!(HeaderFormat::from_pattern(r"^(\w+) (.*)$").is_err());
        assert!(HeaderFormat::from_log_format("@nope").is_err());
    }

    #[test]
    fn script_escapes() {
        assert_eq!(unescape(r"a\tb\nc\\d"), "a\tb\nc\\d");
    }
}
