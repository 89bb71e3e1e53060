//! Synthetic failing-test bundles with one injected root cause.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{format_timestamp, Timestamp};

pub const DRIVER: &str = "test_driver";
pub const CRASH_MESSAGE: &str = "Server encountered an error, shutting down";
pub const EXIT_MESSAGE: &str = "Test exiting due to SIGINT";

/// Benign ERROR messages unrelated to any failure.
pub const NOISE_ERRORS: &[&str] = &[
    "retry succeeded",
    "transient RPC error, recovered",
    "slow disk write detected, retry succeeded",
    "stale cache entry evicted after lookup error",
    "connection reset by peer, reconnected",
];

const INFO_MESSAGES: &[&str] = &[
    "Handling request",
    "Health check passed",
    "Processed batch",
    "Cache hit ratio within bounds",
    "Flushed write buffer",
    "Accepted connection",
    "Lease renewed",
];

const DRIVER_MESSAGES: &[&str] = &[
    "Running test step",
    "RPC Checkout returned OK",
    "Waiting for replication",
    "Verified response payload",
];

const LEAD_UP_ERRORS: &[&str] = &[
    "Failed to open database handle: permission denied",
    "Shard map lookup returned no owner for key range",
    "Dependency backend-store unreachable after 3 attempts",
    "Invariant violated: negative inventory count",
];

const STARTUP_ERRORS: &[&str] = &[
    "Startup probe failed: port 8080 not bound within deadline",
    "Startup blocked: config flag --backend_address is empty",
    "Startup blocked waiting for schema migration lock",
];

pub const ASSERTION_MESSAGES: &[&str] = &[
    "AssertionError: expected order status SHIPPED but got PENDING",
    "AssertionError: expected 3 items in cart, found 2",
    "AssertionError: response code DEADLINE_EXCEEDED, expected OK",
    "AssertionError: ledger balance mismatch 120 != 100",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "snake_case")]
pub enum FaultKind {
    ComponentCrash(String),
    StartupTimeout(String),
    AssertionFailure(String),
    MissingDriverLog,
    MissingComponentLog(String),
}

/// Fault kinds without their arguments, used to group results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCategory {
    ComponentCrash,
    StartupTimeout,
    AssertionFailure,
    MissingDriverLog,
    MissingComponentLog,
}

impl FaultCategory {
    pub const ALL: [FaultCategory; 5] = [
        FaultCategory::ComponentCrash,
        FaultCategory::StartupTimeout,
        FaultCategory::AssertionFailure,
        FaultCategory::MissingDriverLog,
        FaultCategory::MissingComponentLog,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FaultCategory::ComponentCrash => "component_crash",
            FaultCategory::StartupTimeout => "startup_timeout",
            FaultCategory::AssertionFailure => "assertion_failure",
            FaultCategory::MissingDriverLog => "missing_driver_log",
            FaultCategory::MissingComponentLog => "missing_component_log",
        }
    }

    pub fn is_missing_log(self) -> bool {
        matches!(self, FaultCategory::MissingDriverLog | FaultCategory::MissingComponentLog)
    }
}

impl FaultKind {
    pub fn category(&self) -> FaultCategory {
        match self {
            FaultKind::ComponentCrash(_) => FaultCategory::ComponentCrash,
            FaultKind::StartupTimeout(_) => FaultCategory::StartupTimeout,
            FaultKind::AssertionFailure(_) => FaultCategory::AssertionFailure,
            FaultKind::MissingDriverLog => FaultCategory::MissingDriverLog,
            FaultKind::MissingComponentLog(_) => FaultCategory::MissingComponentLog,
        }
    }

    fn component(&self) -> Option<&str> {
        match self {
            FaultKind::ComponentCrash(c) | FaultKind::StartupTimeout(c) | FaultKind::MissingComponentLog(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub components: usize,
    pub lines_per_file: RangeInclusive<usize>,
    pub noise_error_rate: f64,
    pub fault: FaultKind,
    pub seed: u64,
}

impl CaseSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.components == 0 {
            return Err("components must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise_error_rate) {
            return Err(format!("noise_error_rate {} outside [0, 1]", self.noise_error_rate));
        }
        if self.lines_per_file.is_empty() {
            return Err("lines_per_file is empty".into());
        }
        if let Some(c) = self.fault.component() {
            if !component_names(self.components).iter().any(|n| n == c) {
                return Err(format!("fault names unknown component {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub fault: FaultKind,
    pub culprit_file: Option<String>,
    pub culprit_line_content: Option<String>,
    pub expect_insufficient: bool,
}

/// `server-a`, `server-b`, ... (then `server-26`, `server-27`, ...).
pub fn component_names(count: usize) -> Vec<String> {
    (0..count)
        .map(|i| match u8::try_from(i).ok().filter(|&i| i < 26) {
            Some(i) => format!("server-{}", (b'a' + i) as char),
            None => format!("server-{i}"),
        })
        .collect()
}

/// Lines of one file plus the clock that produced them.
struct Writer {
    component: String,
    process: String,
    clock: Timestamp,
    text: String,
}

impl Writer {
    fn new(component: &str, process: String, clock: Timestamp) -> Self {
        Self { component: component.to_string(), process, clock, text: String::new() }
    }

    fn line(&mut self, rng: &mut ChaCha8Rng, at: Timestamp, message: &str) {
        let module = self.component.replace('-', "_");
        let _ = writeln!(
            self.text,
            "{} | dc{} | {} | t-{} | {module}.py:{} | {message}",
            format_timestamp(&at),
            rng.random_range(1..=9),
            self.process,
            rng.random_range(0..8),
            rng.random_range(10..900),
        );
    }

    fn tick(&mut self, rng: &mut ChaCha8Rng) -> Timestamp {
        self.clock += Duration::seconds(rng.random_range(0..=3));
        self.clock
    }
}

struct ComponentLogs {
    info: Writer,
    error: Writer,
}

fn info_message(rng: &mut ChaCha8Rng) -> String {
    let base = INFO_MESSAGES.choose(rng).expect("non-empty");
    if rng.random_bool(0.01) {
        // Multi-line message exercising continuation folding.
        return format!("{base}; config dump follows\n  max_inflight = {}\n  region = us-east", rng.random_range(1..64));
    }
    format!("{base} {}", rng.random_range(1..100_000))
}

fn benign(
    rng: &mut ChaCha8Rng,
    logs: &mut ComponentLogs,
    lines: usize,
    noise_rate: f64,
    pool: &[&str],
    first: &str,
) {
    let at = logs.info.tick(rng);
    logs.info.line(rng, at, first);
    for _ in 1..lines {
        let at = logs.info.tick(rng);
        let msg = if pool.is_empty() {
            info_message(rng)
        } else {
            format!("{} {}", pool.choose(rng).expect("non-empty"), rng.random_range(1..1000))
        };
        logs.info.line(rng, at, &msg);
        if rng.random_bool(noise_rate) {
            let noise = NOISE_ERRORS.choose(rng).expect("non-empty");
            logs.error.clock = at;
            logs.error.line(rng, at, noise);
        }
    }
}

/// Writes the bundle for `spec` into `dir` (created if needed) and returns
/// the injected root cause. Output depends only on `spec`.
pub fn generate_bundle(spec: &CaseSpec, dir: &Path) -> io::Result<GroundTruth> {
    spec.validate().map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = NaiveDate::from_ymd_opt(2025, 9, 17)
        .and_then(|d| d.and_hms_opt(rng.random_range(0..20), rng.random_range(0..60), rng.random_range(0..60)))
        .expect("valid start time");

    let names = component_names(spec.components);
    let culprit = spec.fault.component().map(str::to_string);
    let timeout = matches!(spec.fault, FaultKind::StartupTimeout(_));

    let mut driver = ComponentLogs {
        info: Writer::new(DRIVER, "p1".into(), start),
        error: Writer::new(DRIVER, "p1".into(), start),
    };
    let mut components = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let clock = start + Duration::seconds(rng.random_range(0..=3));
        let process = format!("p{}", 10 + i);
        let mut logs = ComponentLogs {
            info: Writer::new(name, process.clone(), clock),
            error: Writer::new(name, process, clock),
        };
        let mut lines = rng.random_range(spec.lines_per_file.clone());
        if timeout && culprit.as_deref() == Some(name) {
            // Stuck during startup: only a short prefix of the usual log.
            lines = lines.clamp(1, 30);
        }
        benign(&mut rng, &mut logs, lines, spec.noise_error_rate, &[], "Server is starting");
        components.push(logs);
    }
    let driver_lines = rng.random_range(spec.lines_per_file.clone());
    benign(&mut rng, &mut driver, driver_lines, spec.noise_error_rate, DRIVER_MESSAGES, "Starting test setup");

    let end = components
        .iter()
        .chain(std::iter::once(&driver))
        .map(|l| l.info.clock.max(l.error.clock))
        .max()
        .expect("driver exists");

    let mut truth = GroundTruth {
        fault: spec.fault.clone(),
        culprit_file: None,
        culprit_line_content: None,
        expect_insufficient: false,
    };

    let inject_component_failure = |rng: &mut ChaCha8Rng, comps: &mut [ComponentLogs], drv: &mut ComponentLogs, c: &str, timeout: bool| {
        let logs = comps.iter_mut().find(|l| l.info.component == c).expect("validated component");
        let mut at = logs.info.clock.max(logs.error.clock);
        for _ in 0..2 {
            at += Duration::seconds(1);
            let msg = LEAD_UP_ERRORS.choose(rng).expect("non-empty");
            logs.error.line(rng, at, msg);
        }
        at += Duration::seconds(1);
        let culprit_msg = if timeout {
            STARTUP_ERRORS.choose(rng).expect("non-empty").to_string()
        } else {
            CRASH_MESSAGE.to_string()
        };
        logs.error.line(rng, at, &culprit_msg);
        if timeout {
            // The info log stops mid-line.
            let at = logs.info.tick(rng);
            logs.info.line(rng, at, "Loading shard assignments from /var/lib/server/shards.cfg");
            let cut = logs.info.text.len() - 20;
            logs.info.text.truncate(cut);
        }
        let driver_at = end.max(at) + Duration::seconds(2);
        let report = if timeout {
            format!("component {c} failed to become healthy within 60s (startup timeout)")
        } else {
            format!("component {c} failed: process exited unexpectedly")
        };
        drv.error.line(rng, driver_at, &report);
        (format!("{c}.error"), culprit_msg, driver_at)
    };

    let finish_at = match &spec.fault {
        FaultKind::ComponentCrash(c) | FaultKind::StartupTimeout(c) | FaultKind::MissingComponentLog(c) => {
            let (file, content, at) = inject_component_failure(&mut rng, &mut components, &mut driver, c, timeout);
            if !matches!(spec.fault, FaultKind::MissingComponentLog(_)) {
                truth.culprit_file = Some(file);
                truth.culprit_line_content = Some(content);
            }
            at
        }
        FaultKind::AssertionFailure(msg) => {
            let at = end + Duration::seconds(2);
            driver.error.line(&mut rng, at, msg);
            truth.culprit_file = Some(format!("{DRIVER}.error"));
            truth.culprit_line_content = Some(msg.clone());
            at
        }
        FaultKind::MissingDriverLog => {
            // Something broke, but the driver's logs were never saved.
            let c = names.choose(&mut rng).expect("components >= 1").clone();
            inject_component_failure(&mut rng, &mut components, &mut driver, &c, false).2
        }
    };
    driver.info.line(&mut rng, finish_at + Duration::seconds(1), EXIT_MESSAGE);
    truth.expect_insufficient = spec.fault.category().is_missing_log();

    fs::create_dir_all(dir)?;
    let write = |w: &Writer, level: &str| fs::write(dir.join(format!("{}.{level}", w.component)), &w.text);
    if spec.fault != FaultKind::MissingDriverLog {
        write(&driver.info, "info")?;
        write(&driver.error, "error")?;
    }
    for logs in &components {
        if culprit.as_deref() == Some(logs.info.component.as_str())
            && matches!(spec.fault, FaultKind::MissingComponentLog(_))
        {
            continue;
        }
        write(&logs.info, "info")?;
        write(&logs.error, "error")?;
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_bundle, IngestionConfig};
    use crate::model::NoteKind;

    fn spec(fault: FaultKind, seed: u64) -> CaseSpec {
        CaseSpec { components: 3, lines_per_file: 50..=120, noise_error_rate: 0.1, fault, seed }
    }

    fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let s = spec(FaultKind::ComponentCrash("server-b".into()), 7);
        assert_eq!(generate_bundle(&s, a.path()).unwrap(), generate_bundle(&s, b.path()).unwrap());
        assert_eq!(listing(a.path()), listing(b.path()));
        let c = tempfile::tempdir().unwrap();
        generate_bundle(&spec(s.fault.clone(), 8), c.path()).unwrap();
        assert_ne!(listing(a.path()), listing(c.path()));
    }

    #[test]
    fn crash_ends_culprit_error_file() {
        let dir = tempfile::tempdir().unwrap();
        let truth = generate_bundle(&spec(FaultKind::ComponentCrash("server-a".into()), 1), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("server-a.error")).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.ends_with("| Server encountered an error, shutting down"), "{last}");
        assert!(last.contains("shutting down"));
        assert_eq!(truth.culprit_file.as_deref(), Some("server-a.error"));
        let driver = fs::read_to_string(dir.path().join("test_driver.error")).unwrap();
        assert!(driver.contains("component server-a failed"));
    }

    #[test]
    fn missing_driver_leaves_no_driver_file() {
        let dir = tempfile::tempdir().unwrap();
        let truth = generate_bundle(&spec(FaultKind::MissingDriverLog, 2), dir.path()).unwrap();
        assert!(truth.expect_insufficient);
        assert!(listing(dir.path()).iter().all(|(n, _)| !n.starts_with(DRIVER)));
    }

    #[test]
    fn missing_component_omits_both_files() {
        let dir = tempfile::tempdir().unwrap();
        generate_bundle(&spec(FaultKind::MissingComponentLog("server-c".into()), 3), dir.path()).unwrap();
        let names: Vec<_> = listing(dir.path()).into_iter().map(|(n, _)| n).collect();
        assert!(!names.iter().any(|n| n.starts_with("server-c")));
        let bundle = load_bundle(dir.path(), &IngestionConfig::default()).unwrap();
        assert!(bundle.ingestion_notes.iter().any(|n| n.kind == NoteKind::MissingComponentLog));
    }

    #[test]
    fn generated_files_parse_cleanly() {
        let faults = [
            FaultKind::ComponentCrash("server-a".into()),
            FaultKind::StartupTimeout("server-b".into()),
            FaultKind::AssertionFailure(ASSERTION_MESSAGES[0].into()),
        ];
        for (i, fault) in faults.into_iter().enumerate() {
            let dir = tempfile::tempdir().unwrap();
            let mut s = spec(fault, 100 + i as u64);
            s.lines_per_file = 300..=600;
            let truth = generate_bundle(&s, dir.path()).unwrap();
            let bundle = load_bundle(dir.path(), &IngestionConfig::default()).unwrap();
            assert!(bundle.ingestion_notes.is_empty(), "{:?}", bundle.ingestion_notes);
            assert!(bundle.is_sorted());
            let culprit = bundle.file(truth.culprit_file.as_deref().unwrap()).unwrap();
            let content = truth.culprit_line_content.as_deref().unwrap();
            assert!(culprit.lines.iter().any(|l| l.message == content));
        }
    }

    #[test]
    fn assertion_is_latest_line() {
        let dir = tempfile::tempdir().unwrap();
        let msg = ASSERTION_MESSAGES[1];
        generate_bundle(&spec(FaultKind::AssertionFailure(msg.into()), 5), dir.path()).unwrap();
        let bundle = load_bundle(dir.path(), &IngestionConfig::default()).unwrap();
        let assertion = bundle.file("test_driver.error").unwrap().lines.last().unwrap();
        assert_eq!(assertion.message, msg);
        let others = bundle.files.iter().filter(|f| f.level.is_error_or_worse()).flat_map(|f| &f.lines);
        assert!(others.filter(|l| l.message != msg).all(|l| l.timestamp < assertion.timestamp));
    }

    #[test]
    fn timeout_truncates_culprit_info_mid_line() {
        let dir = tempfile::tempdir().unwrap();
        generate_bundle(&spec(FaultKind::StartupTimeout("server-a".into()), 9), dir.path()).unwrap();
        let info = fs::read_to_string(dir.path().join("server-a.info")).unwrap();
        assert!(!info.ends_with('\n'));
        assert!(info.lines().filter(|l| l.contains(" | ")).count() <= 31);
    }
}
