//! Parsing of diagnosis responses and resolution of cited log lines.
//!
//! The expected response shape is three headed sections:
//!
//! ```text
//! ==Conclusion==
//! <free text>
//!
//! ==Investigation Steps==
//! <free text>
//!
//! ==Most Relevant Log Lines==
//! - log-file-name: server-a.error
//! - timestamp: 2025-09-17-16:59:41
//! - callsite: file2.py:41
//! **content**: Server encountered an error, shutting down
//! ```
//!
//! Parsing is lenient: headers may carry markdown decoration, fields may
//! lack the `- ` bullet, and malformed citation groups become warnings.

use serde::{Deserialize, Serialize};

use crate::backend::RawResponse;
use crate::model::{format_timestamp, parse_timestamp, LogBundle, LogLine, Timestamp};
use crate::prompt::{CONCLUSION_HEADER, LOG_LINES_HEADER, STEPS_HEADER};

pub const INSUFFICIENT_PHRASES: [&str; 3] =
    ["need access", "not enough information", "must not draw any conclusion"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedLogLine {
    pub log_file_name: String,
    pub timestamp: Option<Timestamp>,
    pub callsite: Option<String>,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// Text before the first header, or the whole response when it has no
    /// recognizable header.
    pub preamble: Option<String>,
    pub conclusion: Option<String>,
    pub investigation_steps: Option<String>,
    pub cited_lines: Vec<CitedLogLine>,
    pub parse_warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Conclusive,
    InsufficientInformation,
    Unparseable,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Conclusive => "conclusive",
            Outcome::InsufficientInformation => "insufficient information",
            Outcome::Unparseable => "unparseable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Header {
    Conclusion,
    Steps,
    LogLines,
}

fn match_header(line: &str) -> Option<Header> {
    let mut s = line.trim().trim_start_matches('#').trim();
    loop {
        let stripped = s
            .strip_prefix("**")
            .and_then(|x| x.strip_suffix("**"))
            .or_else(|| s.strip_prefix('*').and_then(|x| x.strip_suffix('*')))
            .or_else(|| s.strip_prefix('`').and_then(|x| x.strip_suffix('`')));
        match stripped {
            Some(inner) => s = inner.trim(),
            None => break,
        }
    }
    let s = s.strip_suffix(':').unwrap_or(s).trim();
    [
        (CONCLUSION_HEADER, Header::Conclusion),
        (STEPS_HEADER, Header::Steps),
        (LOG_LINES_HEADER, Header::LogLines),
    ]
    .into_iter()
    .find(|(text, _)| s.eq_ignore_ascii_case(text))
    .map(|(_, h)| h)
}

fn non_empty(text: &str) -> Option<String> {
    let t = text.trim();
    (!t.is_empty()).then(|| t.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    FileName,
    Timestamp,
    Callsite,
    Content,
}

fn match_field(line: &str) -> Option<(Field, &str)> {
    let mut s = line.trim();
    for bullet in ["- ", "* "] {
        if let Some(rest) = s.strip_prefix(bullet) {
            s = rest.trim_start();
            break;
        }
    }
    let (key, value) = s.split_once(':')?;
    let key = key.trim().trim_matches('*').trim().to_ascii_lowercase();
    // `**content:**` puts the colon inside the emphasis.
    let value = value.trim_start_matches('*');
    let field = match key.as_str() {
        "log-file-name" | "log file name" | "log_file_name" => Field::FileName,
        "timestamp" => Field::Timestamp,
        "callsite" => Field::Callsite,
        "content" => Field::Content,
        _ => return None,
    };
    Some((field, value.trim().trim_matches('`').trim()))
}

#[derive(Default)]
struct PendingCitation {
    file_name: String,
    timestamp: Option<Timestamp>,
    callsite: Option<String>,
}

fn parse_cited_block(block: &str, warnings: &mut Vec<String>) -> Vec<CitedLogLine> {
    let mut out = Vec::new();
    let mut pending: Option<PendingCitation> = None;
    for line in block.lines().filter(|l| !l.trim().is_empty()) {
        let Some((field, value)) = match_field(line) else {
            warnings.push(format!("unrecognized line in cited log lines: {:?}", line.trim()));
            continue;
        };
        match field {
            Field::FileName => {
                if let Some(p) = pending.take() {
                    warnings.push(format!("citation of {} has no content", p.file_name));
                }
                pending = Some(PendingCitation { file_name: value.to_string(), ..Default::default() });
            }
            Field::Timestamp | Field::Callsite => {
                let Some(p) = pending.as_mut() else {
                    warnings.push(format!("{:?} field outside a citation: {:?}", field, line.trim()));
                    continue;
                };
                if field == Field::Callsite {
                    p.callsite = non_empty(value);
                } else if !value.is_empty() {
                    p.timestamp = parse_timestamp(value);
                    if p.timestamp.is_none() {
                        warnings.push(format!("unparseable timestamp {value:?} in citation of {}", p.file_name));
                    }
                }
            }
            Field::Content => {
                let Some(p) = pending.take() else {
                    warnings.push(format!("content without log-file-name: {value:?}"));
                    continue;
                };
                if p.file_name.is_empty() || value.is_empty() {
                    warnings.push(format!("citation with empty file name or content: {:?}", line.trim()));
                    continue;
                }
                out.push(CitedLogLine {
                    log_file_name: p.file_name,
                    timestamp: p.timestamp,
                    callsite: p.callsite,
                    content: value.to_string(),
                });
            }
        }
    }
    if let Some(p) = pending {
        warnings.push(format!("citation of {} has no content", p.file_name));
    }
    out
}

/// Parses a response. Never fails; problems become `parse_warnings`.
pub fn parse_response(raw: &RawResponse) -> Diagnosis {
    parse_text(&raw.text)
}

pub fn parse_text(text: &str) -> Diagnosis {
    let mut d = Diagnosis::default();
    let lines: Vec<&str> = text.lines().collect();
    let headers: Vec<(usize, Header)> = lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match_header(l).map(|h| (i, h)))
        .collect();

    if headers.is_empty() {
        d.preamble = non_empty(text);
        d.parse_warnings.push("no headers found".to_string());
        return d;
    }

    d.preamble = non_empty(&lines[..headers[0].0].join("\n"));
    let mut seen = Vec::new();
    for (k, &(start, header)) in headers.iter().enumerate() {
        let end = headers.get(k + 1).map_or(lines.len(), |h| h.0);
        let body = lines[start + 1..end].join("\n");
        if seen.contains(&header) {
            d.parse_warnings.push(format!("duplicate header {:?} ignored", lines[start].trim()));
            continue;
        }
        seen.push(header);
        match header {
            Header::Conclusion => d.conclusion = non_empty(&body),
            Header::Steps => d.investigation_steps = non_empty(&body),
            Header::LogLines => d.cited_lines = parse_cited_block(&body, &mut d.parse_warnings),
        }
    }
    if seen.contains(&Header::Conclusion) && d.conclusion.is_none() {
        d.parse_warnings.push("empty conclusion".to_string());
    }
    d
}

/// Canonical text for a diagnosis; `parse_text(&render_diagnosis(d))`
/// reproduces `d` for well-formed diagnoses.
pub fn render_diagnosis(d: &Diagnosis) -> String {
    let mut parts = Vec::new();
    if let Some(p) = &d.preamble {
        parts.push(format!("{p}\n"));
    }
    if let Some(c) = &d.conclusion {
        parts.push(format!("{CONCLUSION_HEADER}\n{c}\n"));
    }
    if let Some(s) = &d.investigation_steps {
        parts.push(format!("{STEPS_HEADER}\n{s}\n"));
    }
    if !d.cited_lines.is_empty() {
        let groups: Vec<String> = d
            .cited_lines
            .iter()
            .map(|c| {
                let field = |name: &str, value: Option<String>| match value {
                    Some(v) => format!("- {name}: {v}\n"),
                    None => format!("- {name}:\n"),
                };
                format!(
                    "- log-file-name: {}\n{}{}**content**: {}\n",
                    c.log_file_name,
                    field("timestamp", c.timestamp.as_ref().map(format_timestamp)),
                    field("callsite", c.callsite.clone()),
                    c.content
                )
            })
            .collect();
        parts.push(format!("{LOG_LINES_HEADER}\n{}", groups.join("\n")));
    }
    parts.join("\n")
}

/// Trailing whitespace removed per line, surrounding blank lines removed,
/// one final newline.
pub fn normalize(text: &str) -> String {
    let joined = text.lines().map(str::trim_end).collect::<Vec<_>>().join("\n");
    format!("{}\n", joined.trim_matches('\n'))
}

pub fn classify_outcome(d: &Diagnosis) -> Outcome {
    if d.conclusion.is_some() && !d.cited_lines.is_empty() {
        return Outcome::Conclusive;
    }
    if d.conclusion.is_none() {
        let body = [d.preamble.as_deref(), d.investigation_steps.as_deref()]
            .into_iter()
            .flatten()
            .collect::<Vec<_>>()
            .join("\n")
            .to_lowercase();
        if INSUFFICIENT_PHRASES.iter().any(|p| body.contains(p)) {
            return Outcome::InsufficientInformation;
        }
    }
    Outcome::Unparseable
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file_name: String,
    pub line_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub citation: CitedLogLine,
    pub location: Option<SourceLocation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedDiagnosis {
    pub diagnosis: Diagnosis,
    pub resolutions: Vec<Resolution>,
    pub outcome: Outcome,
}

impl ResolvedDiagnosis {
    pub fn resolved(&self) -> impl Iterator<Item = (&CitedLogLine, &SourceLocation)> {
        self.resolutions
            .iter()
            .filter_map(|r| r.location.as_ref().map(|l| (&r.citation, l)))
    }
}

/// Narrows `candidates` by `keep`, unless nothing would remain.
fn narrow(candidates: Vec<&LogLine>, keep: impl Fn(&LogLine) -> bool) -> Vec<&LogLine> {
    let narrowed: Vec<_> = candidates.iter().copied().filter(|l| keep(l)).collect();
    if narrowed.is_empty() { candidates } else { narrowed }
}

fn resolve_one(citation: &CitedLogLine, bundle: &LogBundle) -> Result<SourceLocation, String> {
    let file = bundle
        .file(&citation.log_file_name)
        .ok_or_else(|| format!("cited file {} is not in the bundle", citation.log_file_name))?;
    let content = citation.content.trim();
    let mut candidates: Vec<&LogLine> =
        file.lines.iter().filter(|l| l.message.contains(content)).collect();
    if candidates.is_empty() {
        candidates = file.lines.iter().filter(|l| l.raw.contains(content)).collect();
    }
    if candidates.is_empty() {
        return Err(format!("no line of {} contains {:?}", file.file_name, content));
    }
    if let Some(ts) = citation.timestamp {
        candidates = narrow(candidates, |l| l.timestamp == ts);
    }
    if let Some(cs) = &citation.callsite {
        candidates = narrow(candidates, |l| l.callsite == *cs || l.callsite.ends_with(cs.as_str()));
    }
    let best = candidates.into_iter().min_by_key(|l| l.line_index).expect("non-empty");
    Ok(SourceLocation { file_name: file.file_name.clone(), line_index: best.line_index })
}

/// Maps each citation to a concrete line of the bundle, when one matches.
pub fn resolve_citations(diagnosis: &Diagnosis, bundle: &LogBundle) -> ResolvedDiagnosis {
    let mut diagnosis = diagnosis.clone();
    let resolutions = diagnosis
        .cited_lines
        .clone()
        .into_iter()
        .map(|citation| {
            let location = match resolve_one(&citation, bundle) {
                Ok(loc) => Some(loc),
                Err(warning) => {
                    diagnosis.parse_warnings.push(format!("unresolved citation: {warning}"));
                    None
                }
            };
            Resolution { citation, location }
        })
        .collect();
    let outcome = classify_outcome(&diagnosis);
    ResolvedDiagnosis { diagnosis, resolutions, outcome }
}

/// Checks that a location exists and that its line contains the cited text.
pub fn location_contains(bundle: &LogBundle, loc: &SourceLocation, content: &str) -> bool {
    bundle
        .file(&loc.file_name)
        .and_then(|f| f.lines.get(loc.line_index))
        .is_some_and(|l| l.message.contains(content.trim()) || l.raw.contains(content.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LogFile;
    use proptest::prelude::*;

    const SAMPLE: &str = "==Conclusion==
server-a crashed.

==Investigation Steps==
1. Looked at the driver.
2. Looked at server-a.

==Most Relevant Log Lines==
- log-file-name: server-a.error
- timestamp: 2025-09-17-16:59:41
- callsite: file2.py:41
**content**: Server encountered an error, shutting down

- log-file-name: server-a.info
- timestamp:
- callsite: file.py:444
**content**: Server is starting
";

    fn line(ts: &str, cs: &str, msg: &str, idx: usize) -> LogLine {
        LogLine {
            timestamp: parse_timestamp(ts).unwrap(),
            datacenter: "dc3".into(),
            process: "p13".into(),
            thread: "t-7".into(),
            callsite: cs.into(),
            message: msg.into(),
            source_file_rank: 0,
            line_index: idx,
            raw: format!("{ts} | dc3 | p13 | t-7 | {cs} | {msg}"),
        }
    }

    fn reference_bundle() -> LogBundle {
        LogBundle::new(
            "b",
            vec![
                LogFile::new("server-a.info", vec![line("2025-09-17-14:12:32", "file.py:444", "Server is starting", 0)], false).unwrap(),
                LogFile::new(
                    "server-a.error",
                    vec![line("2025-09-17-16:59:41", "file2.py:41", "Server encountered an error, shutting down", 0)],
                    false,
                )
                .unwrap(),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn parses_well_formed_response() {
        let d = parse_text(SAMPLE);
        assert_eq!(d.conclusion.as_deref(), Some("server-a crashed."));
        assert_eq!(d.investigation_steps.as_deref(), Some("1. Looked at the driver.\n2. Looked at server-a."));
        assert_eq!(d.cited_lines.len(), 2);
        assert!(d.parse_warnings.is_empty(), "{:?}", d.parse_warnings);
        assert_eq!(d.cited_lines[1].timestamp, None);
        assert_eq!(d.cited_lines[1].callsite.as_deref(), Some("file.py:444"));
        assert_eq!(render_diagnosis(&d), normalize(SAMPLE));
        assert_eq!(classify_outcome(&d), Outcome::Conclusive);
    }

    #[test]
    fn empty_text_has_one_warning() {
        let d = parse_text("");
        assert_eq!(d, Diagnosis { parse_warnings: vec!["no headers found".into()], ..Default::default() });
        assert_eq!(classify_outcome(&d), Outcome::Unparseable);
    }

    #[test]
    fn decorated_headers_are_recognized() {
        let text = "## **==Conclusion==**\nok\n### ==investigation steps==:\nsteps\n**==Most Relevant Log Lines==**\nlog-file-name: a.error\n* timestamp: `2025-09-17-16:59:41`\ncallsite: f:1\n- **content:** boom\n";
        let d = parse_text(text);
        assert_eq!(d.conclusion.as_deref(), Some("ok"));
        assert_eq!(d.investigation_steps.as_deref(), Some("steps"));
        assert_eq!(d.cited_lines.len(), 1, "{:?}", d.parse_warnings);
        assert_eq!(d.cited_lines[0].content, "boom");
        assert!(d.cited_lines[0].timestamp.is_some());
    }

    #[test]
    fn malformed_groups_become_warnings() {
        let text = "==Conclusion==\nx\n==Most Relevant Log Lines==\n**content**: orphan\n- log-file-name: a.info\n- log-file-name: b.info\n- timestamp: 2025-03-27-06:00:000\n**content**: kept\nrandom chatter\n";
        let d = parse_text(text);
        assert_eq!(d.cited_lines.len(), 1);
        assert_eq!(d.cited_lines[0].log_file_name, "b.info");
        assert_eq!(d.cited_lines[0].timestamp, None);
        assert_eq!(d.parse_warnings.len(), 4, "{:?}", d.parse_warnings);
    }

    #[test]
    fn classification() {
        let insufficient = parse_text("==Investigation Steps==\n1. The server-b logs are missing. I NEED ACCESS to those logs.\n");
        assert_eq!(classify_outcome(&insufficient), Outcome::InsufficientInformation);
        let refusal = parse_text("There is not enough information to conclude.");
        assert_eq!(classify_outcome(&refusal), Outcome::InsufficientInformation);
        let free = parse_text("The server crashed because of a null pointer.");
        assert_eq!(classify_outcome(&free), Outcome::Unparseable);
        let no_cites = parse_text("==Conclusion==\nIt crashed.\n");
        assert_eq!(classify_outcome(&no_cites), Outcome::Unparseable);
        let conflicting = parse_text("==Conclusion==\nI need access to more logs.\n");
        assert_eq!(classify_outcome(&conflicting), Outcome::Unparseable);
    }

    #[test]
    fn resolves_reference_error_line() {
        let d = parse_text("==Conclusion==\nx\n==Most Relevant Log Lines==\n- log-file-name: server-a.error\n- timestamp:\n- callsite:\n**content**: shutting down\n");
        let r = resolve_citations(&d, &reference_bundle());
        assert_eq!(
            r.resolutions[0].location,
            Some(SourceLocation { file_name: "server-a.error".into(), line_index: 0 })
        );
        assert_eq!(r.outcome, Outcome::Conclusive);
    }

    #[test]
    fn unknown_file_is_unresolved_with_warning() {
        let d = parse_text("==Conclusion==\nx\n==Most Relevant Log Lines==\n- log-file-name: server-z.error\n**content**: shutting down\n");
        let r = resolve_citations(&d, &reference_bundle());
        assert_eq!(r.resolutions[0].location, None);
        assert_eq!(r.diagnosis.parse_warnings.len(), 1);
    }

    #[test]
    fn timestamp_disambiguates_repeated_content() {
        let file = LogFile::new(
            "svc.error",
            vec![
                line("2025-09-17-10:00:00", "a.py:1", "connection reset", 0),
                line("2025-09-17-11:00:00", "a.py:1", "connection reset", 1),
            ],
            false,
        )
        .unwrap();
        let bundle = LogBundle::new("b", vec![file], vec![]).unwrap();
        // Exhaustive: each timestamp picks its own line; none picks the earliest.
        for (ts, expected) in [(Some("2025-09-17-11:00:00"), 1), (Some("2025-09-17-10:00:00"), 0), (None, 0), (Some("2025-09-17-12:00:00"), 0)] {
            let citation = CitedLogLine {
                log_file_name: "svc.error".into(),
                timestamp: ts.and_then(parse_timestamp),
                callsite: None,
                content: "connection reset".into(),
            };
            let d = Diagnosis { conclusion: Some("x".into()), cited_lines: vec![citation], ..Default::default() };
            let r = resolve_citations(&d, &bundle);
            assert_eq!(r.resolutions[0].location.as_ref().unwrap().line_index, expected);
        }
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[A-Za-z0-9][A-Za-z0-9 ,.()-]{0,30}[A-Za-z0-9.]".prop_map(|s| s)
    }

    fn arb_citation() -> impl Strategy<Value = CitedLogLine> {
        (
            "[a-z][a-z0-9-]{0,8}\\.(info|error|warning)",
            proptest::option::of(0i64..100_000),
            proptest::option::of("[a-z]{1,6}\\.py:[0-9]{1,3}"),
            arb_text(),
        )
            .prop_map(|(f, ts, cs, content)| CitedLogLine {
                log_file_name: f,
                timestamp: ts.map(|s| parse_timestamp("2025-01-01-00:00:00").unwrap() + chrono::Duration::seconds(s)),
                callsite: cs,
                content,
            })
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(
            conclusion in proptest::option::of(arb_text()),
            steps in proptest::option::of(arb_text()),
            cited in proptest::collection::vec(arb_citation(), 0..4),
        ) {
            prop_assume!(conclusion.is_some() || steps.is_some() || !cited.is_empty());
            let d = Diagnosis { preamble: None, conclusion, investigation_steps: steps, cited_lines: cited, parse_warnings: vec![] };
            let back = parse_text(&render_diagnosis(&d));
            prop_assert_eq!(back, d);
        }

        #[test]
        fn parsing_and_classification_are_total(text in "(?s).{0,200}") {
            let d = parse_text(&text);
            let _ = classify_outcome(&d);
        }
    }
}
