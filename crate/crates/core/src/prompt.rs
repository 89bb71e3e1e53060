//! Diagnostic prompt assembly under a token budget.
//!
//! The bundled template carries two `%s` slots: the first follows the
//! `<LOGS=>` marker line and receives the sectioned logs, the second follows
//! `<CONTEXT=>` and receives component metadata.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::PromptError;
use crate::merge::{FileSection, SectionedLogs};
use crate::model::LogLevel;

pub const LOGS_MARKER: &str = "<LOGS=>";
pub const CONTEXT_MARKER: &str = "<CONTEXT=>";
pub const CONCLUSION_HEADER: &str = "==Conclusion==";
pub const STEPS_HEADER: &str = "==Investigation Steps==";
pub const LOG_LINES_HEADER: &str = "==Most Relevant Log Lines==";
pub const OUTPUT_HEADERS: [&str; 3] = [CONCLUSION_HEADER, STEPS_HEADER, LOG_LINES_HEADER];

const SLOT: &str = "%s";
const BUNDLED_V1: &str = include_str!("../resources/prompt_template_v1.txt");

pub const DEFAULT_BUDGET_TOKENS: usize = 200_000;

/// ceil(chars / 4).
pub fn estimate_tokens(text: &str) -> usize {
    tokens_for_chars(text.chars().count())
}

fn tokens_for_chars(chars: usize) -> usize {
    chars.div_ceil(4)
}

/// Number of lines in `text` that consist solely of `marker`.
pub fn count_marker_lines(text: &str, marker: &str) -> usize {
    text.lines().filter(|l| l.trim_end() == marker).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
    version: String,
    /// Template split around the two slots.
    parts: [String; 3],
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>, version: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        let invalid = |m: &str| Err(PromptError::InvalidTemplate(m.to_string()));

        let pieces: Vec<&str> = text.split(SLOT).collect();
        if pieces.len() != 3 {
            return invalid("expected exactly two %s slots");
        }
        for marker in [LOGS_MARKER, CONTEXT_MARKER] {
            if count_marker_lines(&text, marker) != 1 {
                return Err(PromptError::InvalidTemplate(format!(
                    "expected exactly one `{marker}` marker line"
                )));
            }
        }
        for header in OUTPUT_HEADERS {
            if text.matches(header).count() != 1 {
                return Err(PromptError::InvalidTemplate(format!(
                    "expected `{header}` exactly once"
                )));
            }
        }
        if count_marker_lines(pieces[0], LOGS_MARKER) != 1
            || count_marker_lines(pieces[1], CONTEXT_MARKER) != 1
        {
            return invalid("slots must follow the <LOGS=> and <CONTEXT=> marker lines in order");
        }
        let parts = [pieces[0].to_string(), pieces[1].to_string(), pieces[2].to_string()];
        Ok(Self { text, version: version.into(), parts })
    }

    /// The template shipped with the crate.
    pub fn bundled() -> Self {
        Self::new(BUNDLED_V1, "v1").expect("bundled template is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::InvalidTemplate(format!("{}: {e}", path.display())))?;
        let version = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Self::new(text, version)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    fn fixed_chars(&self) -> usize {
        self.parts.iter().map(|p| p.chars().count()).sum()
    }

    pub fn fill(&self, logs: &str, context: &str) -> String {
        let mut out = String::with_capacity(self.text.len() + logs.len() + context.len());
        out.push_str(&self.parts[0]);
        out.push_str(logs);
        out.push_str(&self.parts[1]);
        out.push_str(context);
        out.push_str(&self.parts[2]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub component: String,
    pub description: String,
    pub command_line: String,
}

/// Component metadata substituted under `<CONTEXT=>`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentContext {
    entries: Vec<ContextEntry>,
}

impl ComponentContext {
    pub fn new(entries: Vec<ContextEntry>) -> Result<Self, PromptError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.component.as_str()) {
                return Err(PromptError::DuplicateComponent(e.component.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ContextEntry] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "component: {}\ndescription: {}\nargs: {}\n",
                    e.component, e.description, e.command_line
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Sectioned logs after fitting them to a budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub logs: SectionedLogs,
    pub dropped_lines: usize,
    pub error_lines_dropped: bool,
}

fn drop_tier(level: LogLevel) -> u8 {
    match level {
        LogLevel::Debug => 0,
        LogLevel::Info => 1,
        LogLevel::Warning => 2,
        LogLevel::Error | LogLevel::Fatal => 3,
    }
}

/// Drops whole lines until the filled template fits `budget_tokens`.
///
/// Lines go in tiers: DEBUG, INFO, WARNING, then ERROR and FATAL together,
/// oldest first within a tier. Every section that lost lines starts with a
/// `[... N lines truncated ...]` marker. Fails only when the template,
/// context, headers and markers alone exceed the budget.
pub fn truncate_to_budget(
    template: &PromptTemplate,
    sectioned: &SectionedLogs,
    context: &ComponentContext,
    budget_tokens: usize,
) -> Result<Truncation, PromptError> {
    let fixed = template.fixed_chars() + context.render().chars().count();
    let current = fixed + sectioned.total_chars();
    if tokens_for_chars(current) <= budget_tokens {
        return Ok(Truncation { logs: sectioned.clone(), dropped_lines: 0, error_lines_dropped: false });
    }

    let files = &sectioned.files;
    let mut kept_chars: Vec<usize> = files
        .iter()
        .map(|s| s.lines.iter().map(FileSection::line_chars).sum())
        .collect();
    let mut dropped: Vec<usize> = files.iter().map(|s| s.truncated_lines).collect();
    let section_len = |i: usize, kept: &[usize], dropped: &[usize]| {
        files[i].char_len_with(kept[i], dropped[i])
    };
    let others = sectioned.total_chars()
        - (0..files.len()).map(|i| section_len(i, &kept_chars, &dropped)).sum::<usize>();

    let floor: usize = fixed
        + others
        + (0..files.len())
            .map(|i| files[i].char_len_with(0, dropped[i] + files[i].lines.len()))
            .sum::<usize>();
    if tokens_for_chars(floor) > budget_tokens {
        return Err(PromptError::BudgetTooSmall {
            budget: budget_tokens,
            required: tokens_for_chars(floor),
        });
    }

    let mut order: Vec<(usize, usize)> = files
        .iter()
        .enumerate()
        .flat_map(|(si, s)| (0..s.lines.len()).map(move |li| (si, li)))
        .collect();
    order.sort_by_key(|&(si, li)| (drop_tier(files[si].level), files[si].lines[li].order_key()));

    let mut removed: Vec<Vec<bool>> = files.iter().map(|s| vec![false; s.lines.len()]).collect();
    let mut total = current;
    let mut count = 0usize;
    let mut error_lines_dropped = false;
    for (si, li) in order {
        if tokens_for_chars(total) <= budget_tokens {
            break;
        }
        let before = section_len(si, &kept_chars, &dropped);
        kept_chars[si] -= FileSection::line_chars(&files[si].lines[li]);
        dropped[si] += 1;
        let after = section_len(si, &kept_chars, &dropped);
        total = total + after - before;
        removed[si][li] = true;
        count += 1;
        error_lines_dropped |= files[si].level.is_error_or_worse();
    }

    let files = files
        .iter()
        .zip(removed)
        .zip(dropped)
        .map(|((s, gone), truncated_lines)| FileSection {
            lines: s
                .lines
                .iter()
                .zip(gone)
                .filter(|(_, g)| !g)
                .map(|(l, _)| l.clone())
                .collect(),
            truncated_lines,
            ..s.clone()
        })
        .collect();
    Ok(Truncation {
        logs: SectionedLogs { files, notes: sectioned.notes.clone() },
        dropped_lines: count,
        error_lines_dropped,
    })
}

/// The assembled prompt and its accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosisPrompt {
    pub text: String,
    pub estimated_tokens: usize,
    pub budget_tokens: usize,
    pub truncated: bool,
    pub dropped_lines: usize,
    pub error_lines_dropped: bool,
    pub sections_included: Vec<String>,
    pub template_version: String,
    /// The logs as they appear in `text`, kept for backends that work on
    /// structure rather than text.
    pub logs: SectionedLogs,
}

pub fn build_prompt(
    template: &PromptTemplate,
    sectioned: &SectionedLogs,
    context: &ComponentContext,
    budget_tokens: usize,
) -> Result<DiagnosisPrompt, PromptError> {
    let t = truncate_to_budget(template, sectioned, context, budget_tokens)?;
    let text = template.fill(&t.logs.render(), &context.render());
    let estimated_tokens = estimate_tokens(&text);
    debug_assert!(estimated_tokens <= budget_tokens);
    Ok(DiagnosisPrompt {
        estimated_tokens,
        budget_tokens,
        truncated: t.dropped_lines > 0,
        dropped_lines: t.dropped_lines,
        error_lines_dropped: t.error_lines_dropped,
        sections_included: t.logs.file_names(),
        template_version: template.version().to_string(),
        logs: t.logs,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::{assemble_sections, LineRender};
    use crate::model::{format_timestamp, parse_timestamp, LogBundle, LogFile, LogLine};
    use proptest::prelude::*;

    fn line(ts_offset: i64, msg: &str, idx: usize) -> LogLine {
        let ts = parse_timestamp("2025-09-17-14:00:00").unwrap() + chrono::Duration::seconds(ts_offset);
        let ts_s = format_timestamp(&ts);
        LogLine {
            timestamp: ts,
            datacenter: "dc1".into(),
            process: "p1".into(),
            thread: "t-1".into(),
            callsite: "f.py:1".into(),
            message: msg.into(),
            source_file_rank: 0,
            line_index: idx,
            raw: format!("{ts_s} | dc1 | p1 | t-1 | f.py:1 | {msg}"),
        }
    }

    fn bundle(info: usize, errors: usize) -> LogBundle {
        let info_lines = (0..info).map(|i| line(i as i64, &format!("info {i}"), i)).collect();
        let err_lines = (0..errors).map(|i| line(i as i64 * 2, &format!("error {i}"), i)).collect();
        LogBundle::new(
            "b",
            vec![
                LogFile::new("svc.info", info_lines, false).unwrap(),
                LogFile::new("svc.error", err_lines, false).unwrap(),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn token_estimate_is_ceiling_of_quarter() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
        assert_eq!(estimate_tokens("ééééé"), 2);
    }

    #[test]
    fn bundled_template_is_valid_and_verbatim() {
        let t = PromptTemplate::bundled();
        assert!(t.text().starts_with("You are helping developers at Google understand the root cause"));
        assert!(t.text().contains("you should mention in your response that you need access to those logs"));
        for h in OUTPUT_HEADERS {
            assert_eq!(t.text().matches(h).count(), 1);
        }
        assert_eq!(count_marker_lines(t.text(), LOGS_MARKER), 1);
        assert_eq!(count_marker_lines(t.text(), CONTEXT_MARKER), 1);
    }

    #[test]
    fn template_validation_rejects_bad_templates() {
        let good = format!("{CONCLUSION_HEADER} {STEPS_HEADER} {LOG_LINES_HEADER}\n<LOGS=>\n%s\n<CONTEXT=>\n%s\n");
        assert!(PromptTemplate::new(good.clone(), "t").is_ok());
        assert!(PromptTemplate::new(good.replace("%s\n<CONTEXT", "\n<CONTEXT"), "t").is_err());
        assert!(PromptTemplate::new(good.replace(STEPS_HEADER, ""), "t").is_err());
        assert!(PromptTemplate::new(good.replace("<LOGS=>\n", ""), "t").is_err());
        assert!(PromptTemplate::new(format!("{good}<LOGS=>\n"), "t").is_err());
        assert!(PromptTemplate::new(format!("{good}{CONCLUSION_HEADER}"), "t").is_err());
    }

    #[test]
    fn empty_inputs_fill_template_with_empty_slots() {
        let t = PromptTemplate::bundled();
        let p = build_prompt(&t, &SectionedLogs::default(), &ComponentContext::default(), DEFAULT_BUDGET_TOKENS)
            .unwrap();
        assert_eq!(p.text, t.text().replace("%s", ""));
        assert_eq!(count_marker_lines(&p.text, LOGS_MARKER), 1);
        assert!(!p.truncated);
        assert!(p.sections_included.is_empty());
    }

    #[test]
    fn context_renders_each_entry() {
        let ctx = ComponentContext::new(vec![
            ContextEntry { component: "server-a".into(), description: "frontend".into(), command_line: "--port=1".into() },
            ContextEntry { component: "server-b".into(), description: "db".into(), command_line: "".into() },
        ])
        .unwrap();
        assert_eq!(
            ctx.render(),
            "component: server-a\ndescription: frontend\nargs: --port=1\n\ncomponent: server-b\ndescription: db\nargs: \n"
        );
        let dup = ctx.entries()[0].clone();
        assert!(matches!(
            ComponentContext::new(vec![dup.clone(), dup]),
            Err(PromptError::DuplicateComponent(_))
        ));
    }

    #[test]
    fn fitting_prompt_is_untouched() {
        let s = assemble_sections(&bundle(5, 2), LineRender::Original);
        let t = PromptTemplate::bundled();
        let out = truncate_to_budget(&t, &s, &ComponentContext::default(), DEFAULT_BUDGET_TOKENS).unwrap();
        assert_eq!(out.logs, s);
        assert_eq!(out.dropped_lines, 0);
        assert!(!out.logs.render().contains("truncated"));
    }

    /// Independent oracle: drop the oldest INFO lines one by one, rebuild the
    /// prompt text from scratch each time, and stop at the first fit.
    fn greedy_info_drops(t: &PromptTemplate, s: &SectionedLogs, budget: usize) -> usize {
        for k in 0..=s.files[1].lines.len() {
            let mut c = s.clone();
            c.files[1].lines.drain(..k);
            c.files[1].truncated_lines = k;
            let text = t.fill(&c.render(), "");
            if text.chars().count().div_ceil(4) <= budget {
                return k;
            }
        }
        panic!("no fit");
    }

    #[test]
    fn drops_exactly_the_oldest_info_lines() {
        let t = PromptTemplate::bundled();
        let s = assemble_sections(&bundle(40, 3), LineRender::Original);
        let full = estimate_tokens(&t.fill(&s.render(), ""));
        // Find a budget at which the oracle drops exactly ten lines.
        let budget = (0..full)
            .rev()
            .find(|&b| greedy_info_drops(&t, &s, b) == 10)
            .unwrap();
        let out = truncate_to_budget(&t, &s, &ComponentContext::default(), budget).unwrap();
        assert_eq!(out.dropped_lines, 10);
        let info = out.logs.section("svc.info").unwrap();
        assert_eq!(info.lines.first().unwrap().message, "info 10");
        assert!(info.body().starts_with("[... 10 lines truncated ...]\n"));
        let p = build_prompt(&t, &s, &ComponentContext::default(), budget).unwrap();
        assert!(p.truncated);
        assert!(p.estimated_tokens <= budget);
        for i in 0..10 {
            assert!(!p.text.contains(&format!("| info {i}\n")));
        }
        assert!(p.text.contains("[... 10 lines truncated ...]"));
        assert!(!out.error_lines_dropped);
    }

    #[test]
    fn error_lines_go_last_and_oldest_first() {
        let t = PromptTemplate::bundled();
        let s = assemble_sections(&bundle(5, 40), LineRender::Original);
        let floor_logs = {
            let mut c = s.clone();
            for f in &mut c.files {
                f.truncated_lines = f.lines.len();
                f.lines.clear();
            }
            c
        };
        let floor = estimate_tokens(&t.fill(&floor_logs.render(), ""));
        let out = truncate_to_budget(&t, &s, &ComponentContext::default(), floor + 50).unwrap();
        assert!(out.error_lines_dropped);
        assert!(out.logs.section("svc.info").unwrap().lines.is_empty());
        let errs = &out.logs.section("svc.error").unwrap().lines;
        assert!(!errs.is_empty());
        assert_eq!(errs.last().unwrap().message, "error 39");
        let first_kept: usize = errs[0].message.trim_start_matches("error ").parse().unwrap();
        assert_eq!(first_kept, 40 - errs.len());

        let p = build_prompt(&t, &s, &ComponentContext::default(), floor + 50).unwrap();
        assert!(p.truncated && p.error_lines_dropped);

        assert!(matches!(
            build_prompt(&t, &s, &ComponentContext::default(), floor - 1),
            Err(PromptError::BudgetTooSmall { .. })
        ));
    }

    proptest! {
        #[test]
        fn larger_budgets_keep_at_least_as_many_lines(info in 0usize..60, errors in 0usize..30, b1 in 900usize..2200, extra in 0usize..800) {
            let t = PromptTemplate::bundled();
            let s = assemble_sections(&bundle(info, errors), LineRender::Original);
            let ctx = ComponentContext::default();
            if let (Ok(small), Ok(large)) = (
                truncate_to_budget(&t, &s, &ctx, b1),
                truncate_to_budget(&t, &s, &ctx, b1 + extra),
            ) {
                prop_assert!(large.logs.line_count() >= small.logs.line_count());
                let p = build_prompt(&t, &s, &ctx, b1).unwrap();
                prop_assert!(p.estimated_tokens <= b1);
                prop_assert_eq!(p.estimated_tokens, estimate_tokens(&t.fill(&small.logs.render(), "")));
            }
        }

        #[test]
        fn prompts_are_deterministic(info in 0usize..20, errors in 0usize..5) {
            let t = PromptTemplate::bundled();
            let s = assemble_sections(&bundle(info, errors), LineRender::Original);
            let a = build_prompt(&t, &s, &ComponentContext::default(), 1500);
            let b = build_prompt(&t, &s, &ComponentContext::default(), 1500);
            prop_assert_eq!(a, b);
        }
    }
}
