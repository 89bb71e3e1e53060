//! Feedback on findings and the engagement metrics derived from it.
//!
//! Three actions exist: a reviewer's "Please fix" (PF) and an author's
//! "Helpful" (H) or "Not helpful" (N). From their counts:
//!
//! * helpfulness rate = H / (H + N)
//! * not-helpful rate = N / (PF + H + N), expected to stay below 10%
//! * feedback rate = findings with any feedback / all findings

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::StoreError;

pub const NOT_HELPFUL_GUIDELINE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    PleaseFix,
    Helpful,
    NotHelpful,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub finding_id: String,
    pub kind: FeedbackKind,
    pub user: String,
    pub at: DateTime<Utc>,
}

type EventKey = (String, String, FeedbackKind);

/// Feedback events, unique per (finding, user, kind). Backed by an
/// append-only JSON-lines file when opened from a path.
#[derive(Debug, Default)]
pub struct FeedbackStore {
    findings: BTreeSet<String>,
    events: BTreeMap<EventKey, FeedbackEvent>,
    log_path: Option<PathBuf>,
}

impl FeedbackStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads events from `path` (missing file means no events). Later
    /// duplicates of a key replace earlier ones.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut store = Self { log_path: Some(path.clone()), ..Self::default() };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(store),
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let event: FeedbackEvent = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                detail: format!("line {}: {e}", i + 1),
            })?;
            store.insert(event);
        }
        Ok(store)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    pub fn register_finding(&mut self, finding_id: impl Into<String>) {
        self.findings.insert(finding_id.into());
    }

    pub fn has_finding(&self, finding_id: &str) -> bool {
        self.findings.contains(finding_id)
    }

    fn insert(&mut self, event: FeedbackEvent) -> bool {
        let key = (event.finding_id.clone(), event.user.clone(), event.kind);
        self.events.insert(key, event).is_none()
    }

    /// Records an event. Returns false when the (finding, user, kind) triple
    /// was already present, in which case only its timestamp is updated.
    pub fn record(&mut self, event: FeedbackEvent) -> Result<bool, StoreError> {
        if !self.findings.contains(&event.finding_id) {
            return Err(StoreError::UnknownFinding(event.finding_id));
        }
        if let Some(path) = &self.log_path {
            let line = serde_json::to_string(&event).expect("event serializes");
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| StoreError::io(path, e))?;
            writeln!(file, "{line}").map_err(|e| StoreError::io(path, e))?;
        }
        Ok(self.insert(event))
    }

    pub fn events(&self) -> impl Iterator<Item = &FeedbackEvent> {
        self.events.values()
    }

    pub fn findings_total(&self) -> usize {
        self.findings.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub findings_total: usize,
    pub findings_with_feedback: usize,
    pub pf: usize,
    pub h: usize,
    pub n: usize,
    pub feedback_rate: Option<f64>,
    pub helpfulness_rate: Option<f64>,
    pub not_helpful_rate: Option<f64>,
    pub guideline_violated: bool,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Metrics from raw counts.
pub fn metrics_from_counts(findings_total: usize, findings_with_feedback: usize, pf: usize, h: usize, n: usize) -> MetricsReport {
    let not_helpful_rate = ratio(n, pf + h + n);
    MetricsReport {
        findings_total,
        findings_with_feedback,
        pf,
        h,
        n,
        feedback_rate: ratio(findings_with_feedback, findings_total),
        helpfulness_rate: ratio(h, h + n),
        not_helpful_rate,
        guideline_violated: not_helpful_rate.is_some_and(|r| r > NOT_HELPFUL_GUIDELINE),
    }
}

pub fn compute_metrics(store: &FeedbackStore) -> MetricsReport {
    let (mut pf, mut h, mut n) = (0, 0, 0);
    let mut with_feedback = BTreeSet::new();
    for e in store.events() {
        match e.kind {
            FeedbackKind::PleaseFix => pf += 1,
            FeedbackKind::Helpful => h += 1,
            FeedbackKind::NotHelpful => n += 1,
        }
        if store.findings.contains(&e.finding_id) {
            with_feedback.insert(e.finding_id.as_str());
        }
    }
    metrics_from_counts(store.findings_total(), with_feedback.len(), pf, h, n)
}

impl MetricsReport {
    pub fn render_text(&self) -> String {
        let pct = |r: Option<f64>| r.map_or("n/a".to_string(), |r| format!("{:.2}%", r * 100.0));
        format!(
            "findings: {}\nfindings with feedback: {}\nfeedback rate: {}\nplease fix (PF): {}\nhelpful (H): {}\nnot helpful (N): {}\nhelpfulness rate H/(H+N): {}\nnot-helpful rate N/(PF+H+N): {}\nnot-helpful guideline (< {:.0}%): {}\n",
            self.findings_total,
            self.findings_with_feedback,
            pct(self.feedback_rate),
            self.pf,
            self.h,
            self.n,
            pct(self.helpfulness_rate),
            pct(self.not_helpful_rate),
            NOT_HELPFUL_GUIDELINE * 100.0,
            if self.guideline_violated { "VIOLATED" } else { "ok" },
        )
    }
}
