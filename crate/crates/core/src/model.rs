//! Immutable log data types shared by every stage of the pipeline.
//!
//! A failing test leaves behind a flat directory of log files, one per
//! component and level (`server-a.info`, `server-a.error`, ...). Those files
//! are parsed into [`LogFile`]s and collected into a [`LogBundle`] whose file
//! order is fixed: driver files first, then component files by name.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Timestamp format used by every log line, e.g. `2025-09-17-14:12:32`.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d-%H:%M:%S";

/// Naive (timezone-less) second-resolution timestamp.
pub type Timestamp = NaiveDateTime;

/// Parses a strict `YYYY-MM-DD-hh:mm:ss` timestamp.
pub fn parse_timestamp(text: &str) -> Option<Timestamp> {
    let bytes = text.as_bytes();
    if bytes.len() != 19 {
        return None;
    }
    let shape_ok = bytes.iter().enumerate().all(|(i, b)| match i {
        4 | 7 | 10 => *b == b'-',
        13 | 16 => *b == b':',
        _ => b.is_ascii_digit(),
    });
    if !shape_ok {
        return None;
    }
    NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Debug,
    Info,
    Warning,
    Error,
    Fatal,
}

impl LogLevel {
    pub const ALL: [LogLevel; 5] = [
        LogLevel::Debug,
        LogLevel::Info,
        LogLevel::Warning,
        LogLevel::Error,
        LogLevel::Fatal,
    ];

    /// The lowercase file-name suffix for this level.
    pub fn suffix(self) -> &'static str {
        match self {
            LogLevel::Debug => "debug",
            LogLevel::Info => "info",
            LogLevel::Warning => "warning",
            LogLevel::Error => "error",
            LogLevel::Fatal => "fatal",
        }
    }

    pub fn from_suffix(suffix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.suffix() == suffix)
    }

    pub fn is_error_or_worse(self) -> bool {
        self >= LogLevel::Error
    }
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.suffix().to_uppercase())
    }
}

impl FromStr for LogLevel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_suffix(&s.to_ascii_lowercase())
            .ok_or_else(|| ModelError::UnknownLevel(s.to_string()))
    }
}

/// Returns true for a component token: non-empty, no dots, made of
/// alphanumerics, `-` and `_`.
pub fn is_component_token(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Splits `server-a.error` into (`server-a`, Error). The final dot separates
/// the component from the level suffix.
pub fn split_file_name(file_name: &str) -> Result<(&str, LogLevel), ModelError> {
    let (component, suffix) = file_name
        .rsplit_once('.')
        .ok_or_else(|| ModelError::BadFileName(file_name.to_string()))?;
    if !is_component_token(component) {
        return Err(ModelError::BadFileName(file_name.to_string()));
    }
    let level = LogLevel::from_suffix(suffix)
        .ok_or_else(|| ModelError::UnknownLevel(suffix.to_string()))?;
    Ok((component, level))
}

/// One logical log line. `raw` holds the physical text the line was parsed
/// from, continuation lines included, joined by `\n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub timestamp: Timestamp,
    pub datacenter: String,
    pub process: String,
    pub thread: String,
    pub callsite: String,
    pub message: String,
    pub source_file_rank: usize,
    pub line_index: usize,
    pub raw: String,
}

impl LogLine {
    /// Ordering key used for merging: (timestamp, file rank, line index).
    pub fn merge_key(&self) -> (Timestamp, usize, usize) {
        (self.timestamp, self.source_file_rank, self.line_index)
    }

    /// First line of the message, without continuation text.
    pub fn headline(&self) -> &str {
        self.message.lines().next().unwrap_or("")
    }

    /// Physical lines this logical line was built from.
    pub fn physical_lines(&self) -> impl Iterator<Item = &str> {
        self.raw.split('\n')
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogFile {
    pub file_name: String,
    pub component: String,
    pub level: LogLevel,
    pub lines: Vec<LogLine>,
    pub is_driver: bool,
    /// Whether the retained content ended with a newline.
    pub ends_with_newline: bool,
}

impl LogFile {
    pub fn new(
        file_name: impl Into<String>,
        lines: Vec<LogLine>,
        is_driver: bool,
    ) -> Result<Self, ModelError> {
        let file_name = file_name.into();
        let (component, level) = split_file_name(&file_name)?;
        let component = component.to_string();
        for (i, line) in lines.iter().enumerate() {
            if line.line_index != i {
                return Err(ModelError::LineOrder {
                    file_name,
                    expected: i,
                    found: line.line_index,
                });
            }
            if line.message.trim().is_empty() {
                return Err(ModelError::EmptyMessage { file_name, line_index: i });
            }
        }
        Ok(Self {
            file_name,
            component,
            level,
            ends_with_newline: !lines.is_empty(),
            lines,
            is_driver,
        })
    }

    /// Re-joins the physical lines of every retained log line.
    pub fn reconstruct(&self) -> String {
        let mut out = self
            .lines
            .iter()
            .map(|l| l.raw.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        if self.ends_with_newline && !self.lines.is_empty() {
            out.push('\n');
        }
        out
    }

    fn with_rank(mut self, rank: usize) -> Self {
        for line in &mut self.lines {
            line.source_file_rank = rank;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoteKind {
    MissingDriverLog,
    MissingComponentLog,
    CorruptFile,
    UnparseableLine,
}

impl fmt::Display for NoteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoteKind::MissingDriverLog => "MissingDriverLog",
            NoteKind::MissingComponentLog => "MissingComponentLog",
            NoteKind::CorruptFile => "CorruptFile",
            NoteKind::UnparseableLine => "UnparseableLine",
        };
        f.write_str(s)
    }
}

/// A degradation observed while ingesting a bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionNote {
    pub kind: NoteKind,
    pub file_name: Option<String>,
    pub detail: String,
}

impl IngestionNote {
    pub fn new(
        kind: NoteKind,
        file_name: Option<String>,
        detail: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if kind == NoteKind::UnparseableLine && file_name.is_none() {
            return Err(ModelError::NoteWithoutFile);
        }
        Ok(Self { kind, file_name, detail: detail.into() })
    }

    pub fn missing_driver(detail: impl Into<String>) -> Self {
        Self { kind: NoteKind::MissingDriverLog, file_name: None, detail: detail.into() }
    }

    pub fn missing_component(detail: impl Into<String>) -> Self {
        Self { kind: NoteKind::MissingComponentLog, file_name: None, detail: detail.into() }
    }

    pub fn corrupt(file_name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            kind: NoteKind::CorruptFile,
            file_name: Some(file_name.into()),
            detail: detail.into(),
        }
    }

    pub fn unparseable(file_name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            kind: NoteKind::UnparseableLine,
            file_name: Some(file_name.into()),
            detail: detail.into(),
        }
    }

    pub fn is_missing_log(&self) -> bool {
        matches!(self.kind, NoteKind::MissingDriverLog | NoteKind::MissingComponentLog)
    }

    /// Single-line rendering used in prompt and finding bodies.
    pub fn one_line(&self) -> String {
        let detail = self.detail.replace('\n', " ");
        match &self.file_name {
            Some(f) => format!("{} [{}]: {}", self.kind, f, detail),
            None => format!("{}: {}", self.kind, detail),
        }
    }
}

fn bundle_order(a: &LogFile, b: &LogFile) -> Ordering {
    b.is_driver
        .cmp(&a.is_driver)
        .then_with(|| a.file_name.cmp(&b.file_name))
}

/// The parsed output directory of one failing test run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogBundle {
    pub bundle_id: String,
    pub files: Vec<LogFile>,
    pub ingestion_notes: Vec<IngestionNote>,
    /// Hex SHA-256 over the discovered files' names and bytes. Empty for
    /// bundles built in memory.
    #[serde(default)]
    pub content_hash: String,
}

impl LogBundle {
    /// Builds a bundle, sorting files into bundle order and assigning each
    /// line the rank of its owning file.
    pub fn new(
        bundle_id: impl Into<String>,
        mut files: Vec<LogFile>,
        ingestion_notes: Vec<IngestionNote>,
    ) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for f in &files {
            if !seen.insert(f.file_name.clone()) {
                return Err(ModelError::DuplicateFile(f.file_name.clone()));
            }
        }
        files.sort_by(bundle_order);
        let files = files
            .into_iter()
            .enumerate()
            .map(|(rank, f)| f.with_rank(rank))
            .collect();
        Ok(Self {
            bundle_id: bundle_id.into(),
            files,
            ingestion_notes,
            content_hash: String::new(),
        })
    }

    pub fn empty(bundle_id: impl Into<String>) -> Self {
        Self {
            bundle_id: bundle_id.into(),
            files: Vec::new(),
            ingestion_notes: Vec::new(),
            content_hash: String::new(),
        }
    }

    pub fn file(&self, file_name: &str) -> Option<&LogFile> {
        self.files.iter().find(|f| f.file_name == file_name)
    }

    pub fn line_count(&self) -> usize {
        self.files.iter().map(|f| f.lines.len()).sum()
    }

    pub fn drivers(&self) -> impl Iterator<Item = &LogFile> {
        self.files.iter().filter(|f| f.is_driver)
    }

    pub fn is_sorted(&self) -> bool {
        self.files
            .windows(2)
            .all(|w| bundle_order(&w[0], &w[1]) == Ordering::Less)
    }
}
