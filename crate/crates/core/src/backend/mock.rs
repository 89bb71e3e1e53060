//! Deterministic rule-based stand-in for the LLM.
//!
//! The mock reads the same sections the prompt was built from and answers
//! in the prompt's output grammar:
//!
//! 1. When ingestion recorded missing driver or component logs, it refuses
//!    to conclude and says it needs access to those logs.
//! 2. When a driver line reports `component <name> failed`, it cites the
//!    last (up to three) ERROR/FATAL lines of that component.
//! 3. Otherwise it cites the last ERROR/FATAL line across all sections.

use std::fmt::Write;
use std::time::Instant;

use crate::error::BackendError;
use crate::ingest::failed_components;
use crate::merge::{SectionLine, SectionedLogs};
use crate::model::{format_timestamp, IngestionNote};
use crate::prompt::{estimate_tokens, DiagnosisPrompt, CONCLUSION_HEADER, LOG_LINES_HEADER, STEPS_HEADER};

use super::{check_request, CompletionBackend, LlmParams, RawResponse};

const MAX_CITED: usize = 3;

#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

impl CompletionBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(
        &self,
        prompt: &DiagnosisPrompt,
        params: &LlmParams,
    ) -> Result<RawResponse, BackendError> {
        check_request(prompt, params)?;
        let mut response = mock_diagnose(&prompt.logs, &prompt.logs.notes);
        response.input_tokens = prompt.estimated_tokens;
        Ok(response)
    }
}

struct Cited<'a> {
    file_name: &'a str,
    line: &'a SectionLine,
}

fn write_citation(out: &mut String, c: &Cited<'_>) {
    let _ = writeln!(out, "- log-file-name: {}", c.file_name);
    let _ = writeln!(out, "- timestamp: {}", format_timestamp(&c.line.timestamp));
    let _ = writeln!(out, "- callsite: {}", c.line.callsite);
    let _ = writeln!(out, "**content**: {}", c.line.headline().trim());
}

fn insufficient(sections: &SectionedLogs, notes: &[&IngestionNote]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{STEPS_HEADER}");
    let _ = writeln!(out, "1. Scanned {} log sections.", sections.files.len());
    let _ = writeln!(out, "2. The ingestion notes report log files that were not saved:");
    for n in notes {
        let _ = writeln!(out, "   - {}", n.one_line());
    }
    let _ = writeln!(
        out,
        "3. Without those logs the failing component cannot be inspected. I need access to those logs; no conclusion can be drawn from the information available."
    );
    out
}

fn no_errors(sections: &SectionedLogs) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{STEPS_HEADER}");
    let _ = writeln!(out, "1. Scanned {} log sections.", sections.files.len());
    let _ = writeln!(out, "2. No ERROR or FATAL lines were found in any section.");
    let _ = writeln!(
        out,
        "3. There is not enough information to identify the root cause; I need access to more detailed logs."
    );
    out
}

fn conclusive(conclusion: &str, steps: &[String], cited: &[Cited<'_>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CONCLUSION_HEADER}");
    let _ = writeln!(out, "{conclusion}");
    let _ = writeln!(out);
    let _ = writeln!(out, "{STEPS_HEADER}");
    for (i, s) in steps.iter().enumerate() {
        let _ = writeln!(out, "{}. {s}", i + 1);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{LOG_LINES_HEADER}");
    for (i, c) in cited.iter().enumerate() {
        if i > 0 {
            let _ = writeln!(out);
        }
        write_citation(&mut out, c);
    }
    out
}

/// ERROR/FATAL lines of the selected sections in merged order.
fn error_lines<'a>(sections: &'a SectionedLogs, component: Option<&str>) -> Vec<Cited<'a>> {
    let mut lines: Vec<Cited<'a>> = sections
        .files
        .iter()
        .filter(|s| s.level.is_error_or_worse())
        .filter(|s| component.is_none_or(|c| s.component == c))
        .flat_map(|s| s.lines.iter().map(move |line| Cited { file_name: &s.file_name, line }))
        .collect();
    lines.sort_by_key(|c| c.line.order_key());
    lines
}

/// The most recently reported failed component in the driver sections.
fn reported_failure(sections: &SectionedLogs) -> Option<(String, &SectionLine)> {
    let mut driver_lines: Vec<&SectionLine> = sections
        .files
        .iter()
        .filter(|s| s.is_driver)
        .flat_map(|s| s.lines.iter())
        .collect();
    driver_lines.sort_by_key(|l| l.order_key());
    driver_lines
        .into_iter()
        .rev()
        .find_map(|l| failed_components(&l.message).pop().map(|c| (c, l)))
}

pub fn mock_diagnose(sections: &SectionedLogs, notes: &[IngestionNote]) -> RawResponse {
    let started = Instant::now();
    let missing: Vec<&IngestionNote> = notes.iter().filter(|n| n.is_missing_log()).collect();

    let text = if !missing.is_empty() {
        insufficient(sections, &missing)
    } else {
        let scanned = format!("Scanned {} log sections.", sections.files.len());
        let by_component = reported_failure(sections).and_then(|(component, driver_line)| {
            let errors = error_lines(sections, Some(&component));
            (!errors.is_empty()).then_some((component, driver_line, errors))
        });
        match by_component {
            Some((component, driver_line, mut errors)) => {
                let cited: Vec<Cited<'_>> = errors.split_off(errors.len().saturating_sub(MAX_CITED));
                let last = cited.last().expect("non-empty");
                let conclusion = format!(
                    "Component {component} failed. Its last error before the failure was: {}",
                    last.line.headline().trim()
                );
                let steps = vec![
                    scanned,
                    format!("The test driver reports: {}", driver_line.headline().trim()),
                    format!("Inspected the ERROR and FATAL sections of {component}."),
                    format!("Selected the last {} error line(s) of {component} as the most relevant.", cited.len()),
                ];
                conclusive(&conclusion, &steps, &cited)
            }
            None => {
                let mut errors = error_lines(sections, None);
                match errors.pop() {
                    Some(last) => {
                        let conclusion = format!(
                            "The test failed after an error logged in {}: {}",
                            last.file_name,
                            last.line.headline().trim()
                        );
                        let steps = vec![
                            scanned,
                            "The test driver does not name a failed component.".to_string(),
                            "Selected the most recent ERROR or FATAL line across all sections.".to_string(),
                        ];
                        conclusive(&conclusion, &steps, &[last])
                    }
                    None => no_errors(sections),
                }
            }
        }
    };

    RawResponse {
        output_tokens: estimate_tokens(&text),
        input_tokens: 0,
        latency: started.elapsed(),
        backend: "mock".into(),
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::{assemble_sections, LineRender};
    use crate::model::{LogBundle, LogFile, LogLine, parse_timestamp};

    fn mk(ts: &str, msg: &str, idx: usize) -> LogLine {
        LogLine {
            timestamp: parse_timestamp(ts).unwrap(),
            datacenter: "dc1".into(),
            process: "p1".into(),
            thread: "t-1".into(),
            callsite: "f.py:9".into(),
            message: msg.into(),
            source_file_rank: 0,
            line_index: idx,
            raw: format!("{ts} | dc1 | p1 | t-1 | f.py:9 | {msg}"),
        }
    }

    fn sections(files: Vec<LogFile>, notes: Vec<IngestionNote>) -> SectionedLogs {
        assemble_sections(&LogBundle::new("b", files, notes).unwrap(), LineRender::Original)
    }

    #[test]
    fn missing_logs_produce_refusal() {
        let s = sections(vec![], vec![IngestionNote::missing_driver("no driver")]);
        let r = mock_diagnose(&s, &s.notes);
        assert!(!r.text.contains(CONCLUSION_HEADER));
        assert!(r.text.contains("need access"));
    }

    #[test]
    fn cites_last_three_errors_of_failed_component() {
        let s = sections(
            vec![
                LogFile::new("test_driver.error", vec![mk("2025-09-17-17:00:09", "component server-a failed", 0)], true).unwrap(),
                LogFile::new(
                    "server-a.error",
                    (0..5).map(|i| mk(&format!("2025-09-17-17:00:0{i}"), &format!("e{i}"), i)).collect(),
                    false,
                )
                .unwrap(),
                LogFile::new("server-b.error", vec![mk("2025-09-17-17:00:08", "other", 0)], false).unwrap(),
            ],
            vec![],
        );
        let r = mock_diagnose(&s, &[]);
        assert!(r.text.starts_with(CONCLUSION_HEADER));
        assert_eq!(r.text.matches("- log-file-name: server-a.error").count(), 3);
        assert!(r.text.contains("**content**: e4"));
        assert!(!r.text.contains("**content**: e1"));
        assert!(!r.text.contains("other"));
    }

    #[test]
    fn falls_back_to_last_error_overall() {
        let s = sections(
            vec![
                LogFile::new("test_driver.info", vec![mk("2025-09-17-17:00:00", "starting", 0)], true).unwrap(),
                LogFile::new("a.error", vec![mk("2025-09-17-17:00:05", "late", 0)], false).unwrap(),
                LogFile::new("b.error", vec![mk("2025-09-17-17:00:03", "early", 0)], false).unwrap(),
            ],
            vec![],
        );
        let r = mock_diagnose(&s, &[]);
        assert_eq!(r.text.matches("- log-file-name:").count(), 1);
        assert!(r.text.contains("- log-file-name: a.error\n"));
        assert!(r.text.contains("**content**: late"));
    }

    #[test]
    fn output_is_deterministic() {
        let s = sections(
            vec![LogFile::new("a.error", vec![mk("2025-09-17-17:00:05", "boom", 0)], false).unwrap()],
            vec![],
        );
        assert_eq!(mock_diagnose(&s, &[]).text, mock_diagnose(&s, &[]).text);
    }
}
