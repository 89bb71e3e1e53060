//! Desk-scale evaluation: generate bundles with known root causes, run the
//! pipeline on them and score the diagnoses.
//!
//! The scoring rule is a mechanical stand-in for a human judging whether a
//! diagnosis gives accurate context for the root cause.

pub mod generator;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::CompletionBackend;
use crate::diagnosis::{Outcome, ResolvedDiagnosis};
use crate::latency::{LatencyRecorder, LatencyStats};
use crate::pipeline::{diagnose_dir, PipelineConfig, PipelineRun};

pub use generator::{component_names, generate_bundle, CaseSpec, FaultCategory, FaultKind, GroundTruth};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accurate: bool,
    pub reason: String,
}

fn overlaps(a: &str, b: &str) -> bool {
    let (a, b) = (a.trim(), b.trim());
    !a.is_empty() && !b.is_empty() && (a.contains(b) || b.contains(a))
}

pub fn score_diagnosis(resolved: &ResolvedDiagnosis, truth: &GroundTruth) -> Verdict {
    let verdict = |accurate, reason: String| Verdict { accurate, reason };
    if truth.expect_insufficient {
        return match resolved.outcome {
            Outcome::InsufficientInformation => verdict(true, "insufficient information reported".into()),
            other => verdict(false, format!("expected insufficient information, got {}", other.label())),
        };
    }
    match resolved.outcome {
        Outcome::Conclusive => {}
        Outcome::Unparseable => return verdict(false, "unparseable".into()),
        Outcome::InsufficientInformation => return verdict(false, "reported insufficient information".into()),
    }
    let (Some(file), Some(content)) = (&truth.culprit_file, &truth.culprit_line_content) else {
        return verdict(false, "ground truth has no culprit".into());
    };
    let cited = resolved
        .resolved()
        .find(|(c, loc)| &loc.file_name == file && overlaps(&c.content, content));
    if let Some((_, loc)) = cited {
        return verdict(true, format!("culprit cited at {}:{}", loc.file_name, loc.line_index));
    }
    let conclusion = resolved.diagnosis.conclusion.as_deref().unwrap_or("");
    if conclusion.contains(content.as_str()) {
        return verdict(true, "conclusion names the culprit line".into());
    }
    verdict(false, "culprit not cited".into())
}

/// One of the fault classes selectable for a corpus. `Missing` alternates
/// between a missing driver log and a missing component log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultClass {
    Crash,
    Timeout,
    Assertion,
    MissingDriver,
    MissingComponent,
    Missing,
}

impl FaultClass {
    pub const DEFAULT: [FaultClass; 4] = [FaultClass::Crash, FaultClass::Timeout, FaultClass::Assertion, FaultClass::Missing];
}

impl FromStr for FaultClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "crash" => FaultClass::Crash,
            "timeout" => FaultClass::Timeout,
            "assertion" => FaultClass::Assertion,
            "missing-driver" => FaultClass::MissingDriver,
            "missing-component" => FaultClass::MissingComponent,
            "missing" => FaultClass::Missing,
            other => {
                return Err(format!(
                    "unknown fault `{other}` (expected crash, timeout, assertion, missing, missing-driver, missing-component)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOptions {
    pub cases: usize,
    pub seed: u64,
    pub faults: Vec<FaultClass>,
    pub components: usize,
    pub lines_per_file: std::ops::RangeInclusive<usize>,
    pub noise_error_rate: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            cases: 60,
            seed: 0,
            faults: FaultClass::DEFAULT.to_vec(),
            components: 5,
            lines_per_file: 200..=2000,
            noise_error_rate: 0.05,
        }
    }
}

/// Case i uses fault class `faults[i % faults.len()]`; every other choice
/// comes from a generator seeded with `seed`.
pub fn build_corpus(opts: &CorpusOptions) -> Vec<CaseSpec> {
    if opts.faults.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let names = component_names(opts.components.max(1));
    let mut missing_turn = 0usize;
    (0..opts.cases)
        .map(|i| {
            let component = names.choose(&mut rng).expect("non-empty").clone();
            let fault = match opts.faults[i % opts.faults.len()] {
                FaultClass::Crash => FaultKind::ComponentCrash(component),
                FaultClass::Timeout => FaultKind::StartupTimeout(component),
                FaultClass::Assertion => {
                    let msg = generator::ASSERTION_MESSAGES.choose(&mut rng).expect("non-empty");
                    FaultKind::AssertionFailure(msg.to_string())
                }
                FaultClass::MissingDriver => FaultKind::MissingDriverLog,
                FaultClass::MissingComponent => FaultKind::MissingComponentLog(component),
                FaultClass::Missing => {
                    missing_turn += 1;
                    if missing_turn % 2 == 1 {
                        FaultKind::MissingDriverLog
                    } else {
                        FaultKind::MissingComponentLog(component)
                    }
                }
            };
            CaseSpec {
                components: opts.components,
                lines_per_file: opts.lines_per_file.clone(),
                noise_error_rate: opts.noise_error_rate,
                fault,
                seed: rng.random(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub index: usize,
    pub seed: u64,
    pub fault: FaultKind,
    pub outcome: Option<Outcome>,
    pub accurate: bool,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultStats {
    pub cases: usize,
    pub accurate: usize,
    pub accuracy: Option<f64>,
}

/// Aggregated results. Latency is kept out of serialization and the text
/// rendering so that reports for the same corpus are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: usize,
    pub accurate: usize,
    pub accuracy: Option<f64>,
    pub per_fault_breakdown: BTreeMap<FaultCategory, FaultStats>,
    pub results: Vec<CaseResult>,
    #[serde(skip)]
    pub mean_latency: Option<Duration>,
    #[serde(skip)]
    pub latency: Option<LatencyStats>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn pct(r: Option<f64>) -> String {
    r.map_or("n/a".into(), |r| format!("{:.2}%", r * 100.0))
}

impl EvalReport {
    pub fn from_results(mut results: Vec<CaseResult>, latencies: &[Duration]) -> Self {
        results.sort_by_key(|r| r.index);
        let mut per_fault: BTreeMap<FaultCategory, FaultStats> = BTreeMap::new();
        for r in &results {
            let s = per_fault.entry(r.fault.category()).or_default();
            s.cases += 1;
            s.accurate += usize::from(r.accurate);
        }
        for s in per_fault.values_mut() {
            s.accuracy = ratio(s.accurate, s.cases);
        }
        let accurate = results.iter().filter(|r| r.accurate).count();
        let mut rec = LatencyRecorder::default();
        latencies.iter().for_each(|d| rec.record(*d));
        Self {
            cases: results.len(),
            accurate,
            accuracy: ratio(accurate, results.len()),
            per_fault_breakdown: per_fault,
            results,
            mean_latency: rec.mean(),
            latency: rec.snapshot(),
        }
    }

    /// Accuracy over the cases whose category matches `pred`.
    pub fn accuracy_where(&self, pred: impl Fn(FaultCategory) -> bool) -> Option<f64> {
        let (a, n) = self
            .per_fault_breakdown
            .iter()
            .filter(|(c, _)| pred(**c))
            .fold((0, 0), |(a, n), (_, s)| (a + s.accurate, n + s.cases));
        ratio(a, n)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "cases: {}", self.cases);
        let _ = writeln!(out, "accurate: {}", self.accurate);
        let _ = writeln!(out, "accuracy: {}", pct(self.accuracy));
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<24}{:>7}{:>10}{:>10}", "fault", "cases", "accurate", "accuracy");
        for (c, s) in &self.per_fault_breakdown {
            let _ = writeln!(out, "{:<24}{:>7}{:>10}{:>10}", c.label(), s.cases, s.accurate, pct(s.accuracy));
        }
        let misses: Vec<_> = self.results.iter().filter(|r| !r.accurate).collect();
        if !misses.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "inaccurate cases:");
            for r in misses {
                let _ = writeln!(out, "  #{} {} (seed {}): {}", r.index, r.fault.category().label(), r.seed, r.reason);
            }
        }
        out
    }

    pub fn render_latency(&self) -> String {
        match (self.latency, self.mean_latency) {
            (Some(s), Some(mean)) => format!(
                "latency: mean {} ms, p50 {} ms, p90 {} ms over {} cases\n",
                mean.as_millis(),
                s.p50.as_millis(),
                s.p90.as_millis(),
                s.count
            ),
            _ => "latency: no cases\n".into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// A single evaluated case with the pipeline artifacts, when the run got
/// that far.
pub struct EvaluatedCase {
    pub result: CaseResult,
    pub truth: GroundTruth,
    pub run: Option<PipelineRun>,
    pub latency: Duration,
}

/// Generates case `index` under `workdir`, runs the pipeline and scores it.
pub fn evaluate_case(
    index: usize,
    spec: &CaseSpec,
    workdir: &std::path::Path,
    config: &PipelineConfig,
    backend: &dyn CompletionBackend,
) -> EvaluatedCase {
    let dir = workdir.join(format!("case-{index:04}"));
    let started = std::time::Instant::now();
    let fail = |reason: String, truth: GroundTruth| EvaluatedCase {
        result: CaseResult { index, seed: spec.seed, fault: spec.fault.clone(), outcome: None, accurate: false, reason },
        truth,
        run: None,
        latency: started.elapsed(),
    };
    let truth = match generate_bundle(spec, &dir) {
        Ok(t) => t,
        Err(e) => {
            let truth = GroundTruth {
                fault: spec.fault.clone(),
                culprit_file: None,
                culprit_line_content: None,
                expect_insufficient: spec.fault.category().is_missing_log(),
            };
            return fail(format!("generation failed: {e}"), truth);
        }
    };
    match diagnose_dir(&dir, config, backend) {
        Ok(run) => {
            let v = score_diagnosis(&run.resolved, &truth);
            EvaluatedCase {
                result: CaseResult {
                    index,
                    seed: spec.seed,
                    fault: spec.fault.clone(),
                    outcome: Some(run.resolved.outcome),
                    accurate: v.accurate,
                    reason: v.reason,
                },
                truth,
                latency: run.latency,
                run: Some(run),
            }
        }
        Err(e) => fail(format!("pipeline error: {e}"), truth),
    }
}

/// Runs every case on a small pool of threads. Never fails as a whole: a
/// case that cannot be generated or diagnosed is scored inaccurate.
pub fn run_eval(corpus: &[CaseSpec], config: &PipelineConfig, backend: &dyn CompletionBackend) -> EvalReport {
    run_eval_with(corpus, config, backend, |_| {})
}

/// Like [`run_eval`], handing each evaluated case to `inspect` before its
/// bundle is deleted.
pub fn run_eval_with(
    corpus: &[CaseSpec],
    config: &PipelineConfig,
    backend: &dyn CompletionBackend,
    inspect: impl Fn(&EvaluatedCase) + Sync,
) -> EvalReport {
    let workdir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => {
            let results = corpus
                .iter()
                .enumerate()
                .map(|(index, s)| CaseResult {
                    index,
                    seed: s.seed,
                    fault: s.fault.clone(),
                    outcome: None,
                    accurate: false,
                    reason: format!("no work directory: {e}"),
                })
                .collect();
            return EvalReport::from_results(results, &[]);
        }
    };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let collected = std::sync::Mutex::new(Vec::with_capacity(corpus.len()));
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(spec) = corpus.get(i) else { break };
                let case = evaluate_case(i, spec, workdir.path(), config, backend);
                inspect(&case);
                let _ = std::fs::remove_dir_all(workdir.path().join(format!("case-{i:04}")));
                collected.lock().unwrap_or_else(|e| e.into_inner()).push((case.result, case.latency));
            });
        }
    });
    let collected = collected.into_inner().unwrap_or_else(|e| e.into_inner());
    let latencies: Vec<Duration> = collected.iter().map(|(_, d)| *d).collect();
    EvalReport::from_results(collected.into_iter().map(|(r, _)| r).collect(), &latencies)
}
