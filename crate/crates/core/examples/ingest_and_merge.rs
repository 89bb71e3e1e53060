//! Loads a log directory and prints its merged timeline and file sections.
//!
//! ```text
//! cargo run --example ingest_and_merge [-- <log-dir>]
//! ```
//! Without an argument a small synthetic bundle is generated first.

use std::path::PathBuf;

use logdiag::eval::{generate_bundle, CaseSpec, FaultKind};
use logdiag::ingest::{load_bundle, IngestionConfig};
use logdiag::merge::{assemble_sections, filter_by_level, merge_streams, LineRender};
use logdiag::model::LogLevel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let dir = tmp.path().join("crash-demo");
            let spec = CaseSpec {
                components: 3,
                lines_per_file: 20..=40,
                noise_error_rate: 0.1,
                fault: FaultKind::ComponentCrash("server-b".into()),
                seed: 42,
            };
            generate_bundle(&spec, &dir)?;
            dir
        }
    };

    let bundle = load_bundle(&dir, &IngestionConfig::default())?;
    println!("bundle {} ({} files, {} lines)", bundle.bundle_id, bundle.files.len(), bundle.line_count());
    for f in &bundle.files {
        println!("  {:<24} {:>5} lines{}", f.file_name, f.lines.len(), if f.is_driver { "  [driver]" } else { "" });
    }
    for note in &bundle.ingestion_notes {
        println!("  note: {}", note.one_line());
    }

    println!("\nlast 10 lines of the merged timeline:");
    let merged = merge_streams(&bundle);
    for (file, line) in merged.entries.iter().rev().take(10).rev() {
        println!("  [{file}] {}", line.raw.lines().next().unwrap_or(""));
    }

    let errors_only = filter_by_level(&bundle, LogLevel::Error);
    let sections = assemble_sections(&errors_only, LineRender::Original);
    println!("\nERROR sections as they appear in a prompt:\n");
    print!("{}", sections.render());
    Ok(())
}
