//! Level filtering, timestamp merging and per-file prompt sections.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::model::{format_timestamp, IngestionNote, LogBundle, LogLevel, LogLine, Timestamp};

pub const NOTES_HEADER: &str = "== INGESTION NOTES ==";

pub fn file_header(file_name: &str) -> String {
    format!("== FILE: {file_name} ==")
}

/// Extracts the file name from a `== FILE: <name> ==` header line.
pub fn header_file_name(header: &str) -> Option<&str> {
    header.strip_prefix("== FILE: ")?.strip_suffix(" ==")
}

/// Keeps only files whose level is at least `min_level`.
pub fn filter_by_level(bundle: &LogBundle, min_level: LogLevel) -> LogBundle {
    LogBundle {
        bundle_id: bundle.bundle_id.clone(),
        files: bundle
            .files
            .iter()
            .filter(|f| f.level >= min_level)
            .cloned()
            .collect(),
        ingestion_notes: bundle.ingestion_notes.clone(),
        content_hash: bundle.content_hash.clone(),
    }
}

/// All lines of a bundle in (timestamp, file rank, line index) order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergedStream<'a> {
    pub entries: Vec<(&'a str, &'a LogLine)>,
}

impl MergedStream<'_> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// K-way merge of the bundle's files. Each file is assumed to be roughly
/// chronological, but files that are not are still merged correctly: a
/// file's lines are first sorted by key, which is a no-op for ordered files.
pub fn merge_streams(bundle: &LogBundle) -> MergedStream<'_> {
    let runs: Vec<Vec<&LogLine>> = bundle
        .files
        .iter()
        .map(|f| {
            let mut run: Vec<&LogLine> = f.lines.iter().collect();
            if !run.windows(2).all(|w| w[0].merge_key() <= w[1].merge_key()) {
                run.sort_by_key(|l| l.merge_key());
            }
            run
        })
        .collect();

    let mut heap = BinaryHeap::with_capacity(runs.len());
    for (file_idx, run) in runs.iter().enumerate() {
        if let Some(first) = run.first() {
            heap.push(Reverse((first.merge_key(), file_idx, 0usize)));
        }
    }

    let mut entries = Vec::with_capacity(bundle.line_count());
    while let Some(Reverse((_, file_idx, pos))) = heap.pop() {
        let line = runs[file_idx][pos];
        entries.push((bundle.files[file_idx].file_name.as_str(), line));
        if let Some(next) = runs[file_idx].get(pos + 1) {
            heap.push(Reverse((next.merge_key(), file_idx, pos + 1)));
        }
    }
    MergedStream { entries }
}

/// How a log line is written into its prompt section.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineRender {
    /// The original physical text, continuation lines included.
    #[default]
    Original,
    /// `timestamp | callsite | message`, dropping datacenter/process/thread.
    Compact,
}

impl LineRender {
    fn render(self, line: &LogLine) -> String {
        match self {
            LineRender::Original => line.raw.clone(),
            LineRender::Compact => format!(
                "{} | {} | {}",
                format_timestamp(&line.timestamp),
                line.callsite,
                line.message
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionLine {
    pub timestamp: Timestamp,
    pub callsite: String,
    pub message: String,
    pub rank: usize,
    pub line_index: usize,
    pub text: String,
    chars: usize,
}

impl SectionLine {
    fn from_line(line: &LogLine, render: LineRender) -> Self {
        let text = render.render(line);
        Self {
            timestamp: line.timestamp,
            callsite: line.callsite.clone(),
            message: line.message.clone(),
            rank: line.source_file_rank,
            line_index: line.line_index,
            chars: text.chars().count(),
            text,
        }
    }

    pub fn headline(&self) -> &str {
        self.message.lines().next().unwrap_or("")
    }

    pub(crate) fn order_key(&self) -> (Timestamp, usize, usize) {
        (self.timestamp, self.rank, self.line_index)
    }
}

pub fn truncation_marker(dropped: usize) -> String {
    format!("[... {dropped} lines truncated ...]")
}

/// The prompt section for one log file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileSection {
    pub file_name: String,
    pub component: String,
    pub level: LogLevel,
    pub is_driver: bool,
    pub header: String,
    pub lines: Vec<SectionLine>,
    pub truncated_lines: usize,
}

impl FileSection {
    pub fn body(&self) -> String {
        let mut out = String::new();
        if self.truncated_lines > 0 {
            out.push_str(&truncation_marker(self.truncated_lines));
            out.push('\n');
        }
        for line in &self.lines {
            out.push_str(&line.text);
            out.push('\n');
        }
        out
    }

    pub(crate) fn char_len_with(&self, kept_chars: usize, dropped: usize) -> usize {
        let marker = if dropped > 0 { truncation_marker(dropped).chars().count() + 1 } else { 0 };
        self.header.chars().count() + 1 + marker + kept_chars
    }

    fn char_len(&self) -> usize {
        let kept = self.lines.iter().map(|l| l.chars + 1).sum();
        self.char_len_with(kept, self.truncated_lines)
    }

    pub(crate) fn line_chars(line: &SectionLine) -> usize {
        line.chars + 1
    }
}

/// Per-file sections plus an optional trailing ingestion-notes section.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SectionedLogs {
    pub files: Vec<FileSection>,
    pub notes: Vec<IngestionNote>,
}

impl SectionedLogs {
    /// `(header, body)` pairs in prompt order, the notes section last.
    pub fn sections(&self) -> Vec<(String, String)> {
        let mut out: Vec<_> = self.files.iter().map(|s| (s.header.clone(), s.body())).collect();
        if !self.notes.is_empty() {
            out.push((NOTES_HEADER.to_string(), self.notes_body()));
        }
        out
    }

    fn notes_body(&self) -> String {
        self.notes.iter().map(|n| n.one_line() + "\n").collect()
    }

    pub fn render(&self) -> String {
        self.sections()
            .into_iter()
            .map(|(h, b)| format!("{h}\n{b}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn total_chars(&self) -> usize {
        let file_chars: usize = self.files.iter().map(FileSection::char_len).sum();
        let notes_chars = if self.notes.is_empty() {
            0
        } else {
            NOTES_HEADER.chars().count() + 1 + self.notes_body().chars().count()
        };
        let count = self.files.len() + usize::from(!self.notes.is_empty());
        file_chars + notes_chars + count.saturating_sub(1)
    }

    pub fn line_count(&self) -> usize {
        self.files.iter().map(|s| s.lines.len()).sum()
    }

    pub fn file_names(&self) -> Vec<String> {
        self.files.iter().map(|s| s.file_name.clone()).collect()
    }

    pub fn section(&self, file_name: &str) -> Option<&FileSection> {
        self.files.iter().find(|s| s.file_name == file_name)
    }
}

/// One section per file in bundle order, plus the notes section when the
/// bundle carries ingestion notes.
pub fn assemble_sections(bundle: &LogBundle, render: LineRender) -> SectionedLogs {
    let files = bundle
        .files
        .iter()
        .map(|f| FileSection {
            file_name: f.file_name.clone(),
            component: f.component.clone(),
            level: f.level,
            is_driver: f.is_driver,
            header: file_header(&f.file_name),
            lines: f.lines.iter().map(|l| SectionLine::from_line(l, render)).collect(),
            truncated_lines: 0,
        })
        .collect();
    SectionedLogs { files, notes: bundle.ingestion_notes.clone() }
}
