//! Records completions once and replays them without calling the backend.
//!
//! Recordings are plain text files named after the SHA-256 of the prompt,
//! so a change to the prompt (even whitespace) is a miss.

use std::sync::Arc;

use logdiag::backend::{MockBackend, ReplayBackend, ReplayStore};
use logdiag::eval::{generate_bundle, CaseSpec, FaultKind};
use logdiag::pipeline::{diagnose_dir, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let bundle_dir = tmp.path().join("assertion-demo");
    let spec = CaseSpec {
        components: 3,
        lines_per_file: 50..=80,
        noise_error_rate: 0.1,
        fault: FaultKind::AssertionFailure("AssertionError: expected 3 items in cart, found 2".into()),
        seed: 3,
    };
    generate_bundle(&spec, &bundle_dir)?;
    let recordings = tmp.path().join("recordings");
    let config = PipelineConfig::default();

    // Any backend can stand behind the recorder; the mock keeps this offline.
    let recorder = ReplayBackend::recording(ReplayStore::open(&recordings)?, Arc::new(MockBackend));
    let first = diagnose_dir(&bundle_dir, &config, &recorder)?;
    for entry in std::fs::read_dir(&recordings)? {
        println!("recorded {}", entry?.file_name().to_string_lossy());
    }

    let replayer = ReplayBackend::replay_only(ReplayStore::open(&recordings)?);
    let second = diagnose_dir(&bundle_dir, &config, &replayer)?;
    println!("replayed response identical: {}", first.response.text == second.response.text);
    println!("findings identical: {}", first.finding.body_markdown == second.finding.body_markdown);

    let mut other = config.clone();
    other.budget_tokens = 4_000;
    match diagnose_dir(&bundle_dir, &other, &replayer) {
        Ok(_) => println!("unexpected replay hit"),
        Err(e) => println!("different prompt: {e}"),
    }
    Ok(())
}
