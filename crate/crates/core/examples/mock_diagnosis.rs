//! Runs the whole pipeline on a log directory with the deterministic mock
//! backend and prints the resulting finding.
//!
//! ```text
//! cargo run --example mock_diagnosis [-- <log-dir>]
//! ```

use std::path::PathBuf;

use logdiag::backend::MockBackend;
use logdiag::eval::{generate_bundle, CaseSpec, FaultKind};
use logdiag::pipeline::{diagnose_dir, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let dirs: Vec<PathBuf> = match std::env::args().nth(1) {
        Some(d) => vec![PathBuf::from(d)],
        None => {
            let faults = [
                ("crash", FaultKind::ComponentCrash("server-c".into())),
                ("no-driver", FaultKind::MissingDriverLog),
            ];
            let mut dirs = Vec::new();
            for (i, (name, fault)) in faults.into_iter().enumerate() {
                let dir = tmp.path().join(name);
                let spec = CaseSpec { components: 4, lines_per_file: 100..=300, noise_error_rate: 0.05, fault, seed: i as u64 };
                generate_bundle(&spec, &dir)?;
                dirs.push(dir);
            }
            dirs
        }
    };

    let config = PipelineConfig::default();
    for dir in dirs {
        let run = diagnose_dir(&dir, &config, &MockBackend)?;
        println!("---- {} ----", run.bundle.bundle_id);
        println!("raw response:\n{}", run.response.text);
        println!("finding {} ({}):\n{}", run.finding.finding_id, run.finding.outcome.label(), run.finding.body_markdown);
    }
    Ok(())
}
