//! Command-line front end. `run` returns the process exit status:
//!
//! * `diagnose`: 0 conclusive, 2 insufficient information, 3 unparseable
//!   response, 1 operational error
//! * everything else: 0 on success, 1 on error (including bad flags)

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{BackendKind, ServiceConfig};
use crate::diagnosis::Outcome;
use crate::eval::{build_corpus, run_eval, CorpusOptions, FaultClass};
use crate::feedback::{compute_metrics, FeedbackStore};
use crate::finding::FindingStore;
use crate::pipeline::diagnose_dir;

#[derive(Debug, Parser)]
#[command(name = "logdiag", version, about = "Diagnose integration test failures from their logs")]
pub struct Cli {
    /// Key-value config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diagnose one failing test's log directory and store the finding.
    Diagnose {
        dir: PathBuf,
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long)]
        findings_dir: Option<PathBuf>,
        #[arg(long)]
        budget_tokens: Option<usize>,
    },
    /// Run the synthetic evaluation corpus.
    Eval {
        #[arg(long, default_value_t = 60)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated: crash, timeout, assertion, missing,
        /// missing-driver, missing-component.
        #[arg(long, value_delimiter = ',', default_values_t = ["crash".to_string(), "timeout".into(), "assertion".into(), "missing".into()])]
        faults: Vec<String>,
        #[arg(long, default_value_t = 5)]
        components: usize,
        #[arg(long)]
        backend: Option<BackendKind>,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print feedback metrics for the stored findings.
    Metrics {
        #[arg(long)]
        findings_dir: Option<PathBuf>,
        #[arg(long)]
        feedback_file: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INSUFFICIENT: i32 = 2;
pub const EXIT_UNPARSEABLE: i32 = 3;

pub fn exit_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Conclusive => EXIT_OK,
        Outcome::InsufficientInformation => EXIT_INSUFFICIENT,
        Outcome::Unparseable => EXIT_UNPARSEABLE,
    }
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).try_init();
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}

pub fn load_config(path: Option<&PathBuf>) -> Result<ServiceConfig, String> {
    match path {
        Some(p) => ServiceConfig::load(p),
        None => Ok(ServiceConfig::default()),
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let mut config = load_config(cli.config.as_ref())?;
    let io = |e: std::io::Error| e.to_string();
    match cli.command {
        Command::Diagnose { dir, backend, findings_dir, budget_tokens } => {
            if let Some(b) = backend {
                config.backend = b;
            }
            if let Some(d) = findings_dir {
                config.findings_dir = d;
            }
            if let Some(b) = budget_tokens {
                config.budget_tokens = b;
            }
            let pipeline = config.pipeline_config()?;
            let backend = config.build_backend()?;
            let run = diagnose_dir(&dir, &pipeline, backend.as_ref()).map_err(|e| e.to_string())?;
            let mut store = FindingStore::open(&config.findings_dir).map_err(|e| e.to_string())?;
            let outcome = run.finding.outcome;
            write!(out, "{}", run.finding.body_markdown).map_err(io)?;
            let path = store.save(run.finding).map_err(|e| e.to_string())?;
            if let Some(p) = path {
                writeln!(err, "finding written to {}", p.display()).map_err(io)?;
            }
            writeln!(
                err,
                "outcome: {}; prompt {} tokens ({} lines truncated); took {} ms",
                outcome.label(),
                run.prompt.estimated_tokens,
                run.prompt.dropped_lines,
                run.latency.as_millis()
            )
            .map_err(io)?;
            Ok(exit_code(outcome))
        }
        Command::Eval { cases, seed, faults, components, backend, out: out_file } => {
            let faults = faults.iter().map(|f| f.parse::<FaultClass>()).collect::<Result<Vec<_>, _>>()?;
            if faults.is_empty() {
                return Err("--faults must name at least one fault".into());
            }
            if components == 0 {
                return Err("--components must be at least 1".into());
            }
            if let Some(b) = backend {
                config.backend = b;
            }
            let opts = CorpusOptions { cases, seed, faults, components, ..Default::default() };
            let pipeline = config.pipeline_config()?;
            let backend = config.build_backend()?;
            let started = Instant::now();
            let report = run_eval(&build_corpus(&opts), &pipeline, backend.as_ref());
            write!(out, "{}", report.render_text()).map_err(io)?;
            write!(err, "{}", report.render_latency()).map_err(io)?;
            writeln!(err, "total time: {} ms", started.elapsed().as_millis()).map_err(io)?;
            if let Some(p) = out_file {
                std::fs::write(&p, report.to_json()).map_err(|e| format!("{}: {e}", p.display()))?;
            }
            Ok(EXIT_OK)
        }
        Command::Metrics { findings_dir, feedback_file, json } => {
            let findings = FindingStore::open(findings_dir.unwrap_or(config.findings_dir)).map_err(|e| e.to_string())?;
            let mut feedback =
                FeedbackStore::open(feedback_file.unwrap_or(config.feedback_file)).map_err(|e| e.to_string())?;
            for id in findings.ids() {
                feedback.register_finding(id.clone());
            }
            let report = compute_metrics(&feedback);
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes")).map_err(io)?;
            } else {
                write!(out, "{}", report.render_text()).map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Serve { port } => {
            if let Some(p) = port {
                config.port = p;
            }
            let runtime = tokio::runtime::Runtime::new().map_err(io)?;
            runtime.block_on(crate::service::serve(&config))?;
            Ok(EXIT_OK)
        }
    }
}
