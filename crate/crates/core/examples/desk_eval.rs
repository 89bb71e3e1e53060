//! Runs a seeded evaluation corpus against the mock backend and prints the
//! accuracy report.
//!
//! ```text
//! cargo run --release --example desk_eval [-- <cases> <seed>]
//! ```

use logdiag::backend::MockBackend;
use logdiag::eval::{build_corpus, run_eval, CorpusOptions};
use logdiag::pipeline::PipelineConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let cases = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let opts = CorpusOptions { cases, seed, lines_per_file: 200..=800, ..Default::default() };
    let report = run_eval(&build_corpus(&opts), &PipelineConfig::default(), &MockBackend);
    print!("{}", report.render_text());
    print!("{}", report.render_latency());
}
