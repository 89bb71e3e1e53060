//! Discovery and parsing of a failing test's log directory.
//!
//! Ingestion is total over file contents: anything odd about the directory
//! (a missing driver log, a truncated or non-UTF-8 file, lines without a
//! timestamp) becomes an [`IngestionNote`] on the bundle instead of an error.
//! Only an unreadable root directory fails.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Read;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};

use crate::error::IngestError;
use crate::model::{
    parse_timestamp, split_file_name, IngestionNote, LogBundle, LogFile, LogLevel, LogLine,
    Timestamp,
};

pub const DEFAULT_MAX_FILE_BYTES: usize = 32 * 1024 * 1024;
pub const FIELD_DELIMITER: &str = " | ";

static FAILED_COMPONENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bcomponent ([A-Za-z0-9_-]+) failed").unwrap());

/// Component names reported as failed by a driver message, in order of
/// appearance.
pub fn failed_components(message: &str) -> Vec<String> {
    FAILED_COMPONENT
        .captures_iter(message)
        .map(|c| c[1].to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestionConfig {
    pub driver_component_names: BTreeSet<String>,
    pub min_level: LogLevel,
    pub max_file_bytes: usize,
}

impl Default for IngestionConfig {
    fn default() -> Self {
        Self {
            driver_component_names: BTreeSet::from(["test_driver".to_string()]),
            min_level: LogLevel::Info,
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
        }
    }
}

impl IngestionConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.driver_component_names.is_empty() {
            return Err(IngestError::InvalidConfig("driver_component_names is empty"));
        }
        if self.max_file_bytes == 0 {
            return Err(IngestError::InvalidConfig("max_file_bytes must be positive"));
        }
        Ok(())
    }

    pub fn is_driver(&self, component: &str) -> bool {
        self.driver_component_names.contains(component)
    }
}

/// Result of parsing one physical line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Line {
        timestamp: Timestamp,
        datacenter: String,
        process: String,
        thread: String,
        callsite: String,
        message: String,
    },
    Continuation(String),
}

/// Parses `ts | dc | process | thread | callsite | message`. The message is
/// everything after the fifth delimiter, so it may itself contain ` | `.
/// Anything else, including a line whose message is blank, is continuation
/// text.
pub fn parse_log_line(text: &str) -> ParsedLine {
    let fields: Vec<&str> = text.split(FIELD_DELIMITER).collect();
    if fields.len() < 6 {
        return ParsedLine::Continuation(text.to_string());
    }
    let Some(timestamp) = parse_timestamp(fields[0]) else {
        return ParsedLine::Continuation(text.to_string());
    };
    let message = fields[5..].join(FIELD_DELIMITER);
    if message.trim().is_empty() {
        return ParsedLine::Continuation(text.to_string());
    }
    ParsedLine::Line {
        timestamp,
        datacenter: fields[1].to_string(),
        process: fields[2].to_string(),
        thread: fields[3].to_string(),
        callsite: fields[4].to_string(),
        message,
    }
}

/// Cuts `content` at the last full line within `max_bytes`.
fn truncate_to_cap(content: &str, max_bytes: usize) -> Option<&str> {
    if content.len() <= max_bytes {
        return None;
    }
    let head = &content.as_bytes()[..max_bytes];
    let keep = head.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
    Some(&content[..keep])
}

/// Parses one file's content. Lines without a timestamp are folded into the
/// preceding line; leading ones are dropped and noted.
pub fn parse_log_file(
    file_name: &str,
    content: &str,
    rank: usize,
    config: &IngestionConfig,
) -> (LogFile, Vec<IngestionNote>) {
    let mut notes = Vec::new();
    let content = match truncate_to_cap(content, config.max_file_bytes) {
        Some(kept) => {
            notes.push(IngestionNote::corrupt(
                file_name,
                format!(
                    "file exceeds {} bytes; truncated to {} bytes at the last full line",
                    config.max_file_bytes,
                    kept.len()
                ),
            ));
            kept
        }
        None => content,
    };

    let ends_with_newline = content.ends_with('\n');
    let body = content.strip_suffix('\n').unwrap_or(content);
    let mut lines: Vec<LogLine> = Vec::new();
    let mut leading_dropped = 0usize;
    let mut first_dropped: Option<String> = None;

    if !content.is_empty() {
        for physical in body.split('\n') {
            match parse_log_line(physical) {
                ParsedLine::Line { timestamp, datacenter, process, thread, callsite, message } => {
                    lines.push(LogLine {
                        timestamp,
                        datacenter,
                        process,
                        thread,
                        callsite,
                        message,
                        source_file_rank: rank,
                        line_index: lines.len(),
                        raw: physical.to_string(),
                    });
                }
                ParsedLine::Continuation(text) => match lines.last_mut() {
                    Some(prev) => {
                        prev.message.push('\n');
                        prev.message.push_str(&text);
                        prev.raw.push('\n');
                        prev.raw.push_str(&text);
                    }
                    None => {
                        leading_dropped += 1;
                        first_dropped.get_or_insert(text);
                    }
                },
            }
        }
    }

    if leading_dropped > 0 {
        let excerpt: String = first_dropped.unwrap_or_default().chars().take(80).collect();
        notes.push(IngestionNote::unparseable(
            file_name,
            format!(
                "{leading_dropped} leading line(s) without a timestamp dropped; first: {excerpt:?}"
            ),
        ));
    }

    let (component, level) = split_file_name(file_name)
        .map(|(c, l)| (c.to_string(), l))
        .unwrap_or_else(|_| (file_name.to_string(), LogLevel::Info));
    let file = LogFile {
        file_name: file_name.to_string(),
        is_driver: config.is_driver(&component),
        component,
        level,
        lines,
        ends_with_newline,
    };
    (file, notes)
}

struct Scan {
    accepted: Vec<(String, bool)>,
    rejected: Vec<IngestionNote>,
    /// Every component with at least one recognized log file, at any level.
    components: HashSet<String>,
}

fn scan_dir(root_dir: &Path, config: &IngestionConfig) -> Result<Scan, IngestError> {
    let unreadable = |source| IngestError::RootDirUnreadable {
        path: root_dir.to_path_buf(),
        source,
    };
    let entries = fs::read_dir(root_dir).map_err(unreadable)?;
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut components = HashSet::new();

    for entry in entries {
        let entry = entry.map_err(unreadable)?;
        let path = entry.path();
        if !fs::metadata(&path).map(|m| m.is_file()).unwrap_or(false) {
            continue;
        }
        let Some(name) = entry.file_name().to_str().map(str::to_string) else {
            rejected.push(IngestionNote::corrupt(
                entry.file_name().to_string_lossy(),
                "file name is not valid UTF-8; skipped",
            ));
            continue;
        };
        match split_file_name(&name) {
            Ok((component, level)) => {
                components.insert(component.to_string());
                if level >= config.min_level {
                    accepted.push((name.clone(), config.is_driver(component)));
                }
            }
            Err(e) => rejected.push(IngestionNote::corrupt(name, format!("{e}; skipped"))),
        }
    }

    accepted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rejected.sort_by(|a, b| a.file_name.cmp(&b.file_name));
    Ok(Scan { accepted, rejected, components })
}

/// Lists `<component>.<level>` files at or above `config.min_level`,
/// driver files first, then by name.
pub fn discover_log_files(
    root_dir: &Path,
    config: &IngestionConfig,
) -> Result<Vec<(String, bool)>, IngestError> {
    Ok(scan_dir(root_dir, config)?.accepted)
}

fn read_capped(path: &Path, cap: usize) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?
        .take(cap as u64 + 1)
        .read_to_end(&mut buf)?;
    Ok(buf)
}

fn bundle_id_for(root_dir: &Path) -> String {
    root_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .or_else(|| {
            root_dir
                .canonicalize()
                .ok()
                .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        })
        .unwrap_or_else(|| "bundle".to_string())
}

/// Loads every discovered file of `root_dir` into a [`LogBundle`].
pub fn load_bundle(root_dir: &Path, config: &IngestionConfig) -> Result<LogBundle, IngestError> {
    config.validate()?;
    let scan = scan_dir(root_dir, config)?;
    let mut notes = scan.rejected;
    let mut files = Vec::with_capacity(scan.accepted.len());
    let mut hasher = Sha256::new();

    for (rank, (name, _)) in scan.accepted.iter().enumerate() {
        let path = root_dir.join(name);
        let bytes = match read_capped(&path, config.max_file_bytes) {
            Ok(b) => b,
            Err(e) => {
                notes.push(IngestionNote::corrupt(name, format!("read failed: {e}; skipped")));
                continue;
            }
        };
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);

        let content = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => {
                notes.push(IngestionNote::corrupt(
                    name,
                    "invalid UTF-8; undecodable bytes replaced with U+FFFD",
                ));
                String::from_utf8_lossy(e.as_bytes()).into_owned()
            }
        };
        let (file, file_notes) = parse_log_file(name, &content, rank, config);
        notes.extend(file_notes);
        files.push(file);
    }

    if !files.iter().any(|f| f.is_driver) {
        let expected: Vec<_> = config.driver_component_names.iter().cloned().collect();
        notes.push(IngestionNote::missing_driver(format!(
            "no test driver log file found (expected one of: {})",
            expected.join(", ")
        )));
    }

    let mut reported = BTreeSet::new();
    for file in files.iter().filter(|f| f.is_driver) {
        for line in &file.lines {
            for component in failed_components(&line.message) {
                if !scan.components.contains(&component) && reported.insert(component.clone()) {
                    notes.push(IngestionNote::missing_component(format!(
                        "driver reports component {component} failed ({}:{}) but {component} has no log files",
                        file.file_name, line.line_index
                    )));
                }
            }
        }
    }

    // Ranks were assigned from the discovery order; files skipped on read
    // errors leave gaps, which LogBundle::new renumbers.
    let mut bundle = LogBundle::new(bundle_id_for(root_dir), files, notes)
        .expect("discovered file names are unique");
    bundle.content_hash = hex::encode(hasher.finalize());
    Ok(bundle)
}
