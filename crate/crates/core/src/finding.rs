//! Markdown findings with links to the cited log lines.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnosis::{Outcome, ResolvedDiagnosis};
use crate::error::StoreError;
use crate::model::{format_timestamp, LogBundle};

pub const DEFAULT_LINK_SCHEME: &str = "log://{bundle}/{file}#L{line}";

/// URI template with `{bundle}`, `{file}` and `{line}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkScheme(pub String);

impl Default for LinkScheme {
    fn default() -> Self {
        Self(DEFAULT_LINK_SCHEME.to_string())
    }
}

impl LinkScheme {
    pub fn link(&self, bundle: &str, file: &str, line: usize) -> String {
        self.0
            .replace("{bundle}", bundle)
            .replace("{file}", file)
            .replace("{line}", &line.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub text: String,
    pub uri: String,
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub finding_id: String,
    pub bundle_id: String,
    pub outcome: Outcome,
    pub body_markdown: String,
    pub links: Vec<Link>,
    pub created_at: DateTime<Utc>,
    #[serde(rename = "generation_latency_ms", with = "duration_ms")]
    pub generation_latency: Duration,
}

/// Stable id derived from the bundle's name and content.
pub fn finding_id_for(bundle: &LogBundle) -> String {
    let mut h = Sha256::new();
    h.update(bundle.bundle_id.as_bytes());
    h.update([0]);
    h.update(bundle.content_hash.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

pub fn render_finding(resolved: &ResolvedDiagnosis, bundle: &LogBundle, scheme: &LinkScheme) -> Finding {
    let d = &resolved.diagnosis;
    let mut body = String::new();
    let mut links = Vec::new();
    let _ = writeln!(
        body,
        "**Integration test failure diagnosis: {}** (bundle `{}`)",
        resolved.outcome.label(),
        bundle.bundle_id
    );

    match resolved.outcome {
        Outcome::InsufficientInformation => {
            let _ = writeln!(body, "\nDiagnosis incomplete: more information is needed to diagnose the root cause.");
            let missing: Vec<_> = bundle.ingestion_notes.iter().filter(|n| n.is_missing_log()).collect();
            if !missing.is_empty() {
                let _ = writeln!(body, "\n### Missing logs");
                for n in missing {
                    let _ = writeln!(body, "- {}", n.one_line());
                }
            }
        }
        Outcome::Unparseable => {
            let _ = writeln!(body, "\nThe diagnosis response could not be parsed.");
            if !d.parse_warnings.is_empty() {
                let _ = writeln!(body, "\n### Parse warnings");
                for w in &d.parse_warnings {
                    let _ = writeln!(body, "- {w}");
                }
            }
        }
        Outcome::Conclusive => {}
    }

    if let Some(c) = &d.conclusion {
        let _ = writeln!(body, "\n### Conclusion\n{c}");
    }

    if !resolved.resolutions.is_empty() {
        let _ = writeln!(body, "\n### Most relevant log lines");
        for r in &resolved.resolutions {
            let c = &r.citation;
            let mut meta = String::new();
            if let Some(ts) = &c.timestamp {
                let _ = write!(meta, " `{}`", format_timestamp(ts));
            }
            if let Some(cs) = &c.callsite {
                let _ = write!(meta, " `{cs}`");
            }
            match &r.location {
                Some(loc) => {
                    let link = Link {
                        text: format!("{}:{}", loc.file_name, loc.line_index),
                        uri: scheme.link(&bundle.bundle_id, &loc.file_name, loc.line_index),
                    };
                    let _ = writeln!(body, "- [{}]({}){meta}: {}", link.text, link.uri, c.content);
                    links.push(link);
                }
                None => {
                    let _ = writeln!(body, "- {}{meta}: {} (unresolved)", c.log_file_name, c.content);
                }
            }
        }
    }

    if let Some(s) = &d.investigation_steps {
        let _ = writeln!(body, "\n### Investigation steps\n{s}");
    }

    Finding {
        finding_id: finding_id_for(bundle),
        bundle_id: bundle.bundle_id.clone(),
        outcome: resolved.outcome,
        body_markdown: body,
        links,
        created_at: Utc::now(),
        generation_latency: Duration::ZERO,
    }
}

/// Findings persisted as one JSON file per finding.
#[derive(Debug)]
pub struct FindingStore {
    dir: Option<PathBuf>,
    findings: BTreeMap<String, Finding>,
}

impl FindingStore {
    pub fn in_memory() -> Self {
        Self { dir: None, findings: BTreeMap::new() }
    }

    /// Opens (creating if needed) a directory store and loads its findings.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        let mut findings = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))? {
            let path = entry.map_err(|e| StoreError::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let f = read_finding(&path)?;
                findings.insert(f.finding_id.clone(), f);
            }
        }
        Ok(Self { dir: Some(dir), findings })
    }

    pub fn path_for(&self, finding_id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{finding_id}.json")))
    }

    pub fn save(&mut self, finding: Finding) -> Result<Option<PathBuf>, StoreError> {
        let path = self.path_for(&finding.finding_id);
        if let Some(path) = &path {
            let json = serde_json::to_string_pretty(&finding).expect("finding serializes");
            fs::write(path, json + "\n").map_err(|e| StoreError::io(path, e))?;
        }
        self.findings.insert(finding.finding_id.clone(), finding);
        Ok(path)
    }

    pub fn get(&self, finding_id: &str) -> Option<&Finding> {
        self.findings.get(finding_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.findings.keys()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

fn read_finding(path: &Path) -> Result<Finding, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), detail: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnosis::{resolve_citations, CitedLogLine, Diagnosis};
    use crate::model::{parse_timestamp, IngestionNote, LogFile, LogLine};

    fn bundle() -> LogBundle {
        let l = LogLine {
            timestamp: parse_timestamp("2025-09-17-16:59:41").unwrap(),
            datacenter: "dc3".into(),
            process: "p13".into(),
            thread: "t-7".into(),
            callsite: "file2.py:41".into(),
            message: "Server encountered an error, shutting down".into(),
            source_file_rank: 0,
            line_index: 0,
            raw: "2025-09-17-16:59:41 | dc3 | p13 | t-7 | file2.py:41 | Server encountered an error, shutting down".into(),
        };
        LogBundle::new("case-7", vec![LogFile::new("server-a.error", vec![l], false).unwrap()], vec![]).unwrap()
    }

    fn cite(file: &str, content: &str) -> CitedLogLine {
        CitedLogLine { log_file_name: file.into(), timestamp: None, callsite: None, content: content.into() }
    }

    #[test]
    fn conclusive_finding_links_resolved_citation() {
        let b = bundle();
        let d = Diagnosis {
            conclusion: Some("server-a crashed".into()),
            cited_lines: vec![cite("server-a.error", "shutting down")],
            ..Default::default()
        };
        let f = render_finding(&resolve_citations(&d, &b), &b, &LinkScheme::default());
        assert_eq!(f.links.len(), 1);
        assert_eq!(f.links[0].uri, "log://case-7/server-a.error#L0");
        assert!(f.body_markdown.contains("(log://case-7/server-a.error#L0)"));
        let banner = f.body_markdown.lines().next().unwrap();
        assert!(banner.contains("conclusive"));
        let c = f.body_markdown.find("### Conclusion").unwrap();
        let l = f.body_markdown.find("### Most relevant").unwrap();
        assert!(c < l);
    }

    #[test]
    fn unresolved_citations_are_plain_text() {
        let b = bundle();
        let d = Diagnosis {
            conclusion: Some("x".into()),
            cited_lines: vec![cite("server-q.error", "nope")],
            ..Default::default()
        };
        let f = render_finding(&resolve_citations(&d, &b), &b, &LinkScheme::default());
        assert!(f.links.is_empty());
        assert!(f.body_markdown.contains("- server-q.error: nope (unresolved)"));
    }

    #[test]
    fn conclusion_without_citations_has_banner_and_no_links() {
        let b = bundle();
        let d = Diagnosis { conclusion: Some("x".into()), ..Default::default() };
        let f = render_finding(&resolve_citations(&d, &b), &b, &LinkScheme::default());
        assert!(f.links.is_empty());
        assert!(f.body_markdown.starts_with("**Integration test failure diagnosis:"));
    }

    #[test]
    fn insufficient_finding_quotes_missing_notes() {
        let mut b = bundle();
        b.ingestion_notes.push(IngestionNote::missing_driver("no test driver log file found"));
        let d = Diagnosis { investigation_steps: Some("I need access to those logs".into()), ..Default::default() };
        let f = render_finding(&resolve_citations(&d, &b), &b, &LinkScheme::default());
        assert_eq!(f.outcome, Outcome::InsufficientInformation);
        assert!(f.body_markdown.contains("more information is needed"));
        assert!(f.body_markdown.contains("MissingDriverLog: no test driver log file found"));
    }

    #[test]
    fn custom_scheme_substitutes_all_placeholders() {
        let s = LinkScheme("https://logs.example/{bundle}?f={file}&l={line}".into());
        assert_eq!(s.link("b1", "x.info", 12), "https://logs.example/b1?f=x.info&l=12");
    }

    #[test]
    fn store_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle();
        let d = Diagnosis { conclusion: Some("x".into()), ..Default::default() };
        let mut f = render_finding(&resolve_citations(&d, &b), &b, &LinkScheme::default());
        f.generation_latency = Duration::from_millis(1234);
        let mut store = FindingStore::open(dir.path()).unwrap();
        let path = store.save(f.clone()).unwrap().unwrap();
        assert!(path.exists());
        let reopened = FindingStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&f.finding_id), Some(&f));
        assert_eq!(reopened.len(), 1);
    }
}
