//! Builds the diagnosis prompt for a bundle, once with the default token
//! budget and once with a budget small enough to force truncation.

use logdiag::eval::{generate_bundle, CaseSpec, FaultKind};
use logdiag::ingest::{load_bundle, IngestionConfig};
use logdiag::merge::{assemble_sections, LineRender};
use logdiag::prompt::{build_prompt, ComponentContext, ContextEntry, PromptTemplate, DEFAULT_BUDGET_TOKENS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path().join("timeout-demo");
    let spec = CaseSpec {
        components: 2,
        lines_per_file: 300..=400,
        noise_error_rate: 0.05,
        fault: FaultKind::StartupTimeout("server-a".into()),
        seed: 7,
    };
    generate_bundle(&spec, &dir)?;
    let bundle = load_bundle(&dir, &IngestionConfig::default())?;
    let sections = assemble_sections(&bundle, LineRender::Original);

    let template = PromptTemplate::bundled();
    let context = ComponentContext::new(vec![
        ContextEntry {
            component: "server-a".into(),
            description: "Order frontend; serves the checkout API".into(),
            command_line: "--port=8080 --backend_address=server-b:9000".into(),
        },
        ContextEntry {
            component: "server-b".into(),
            description: "Inventory backend".into(),
            command_line: "--port=9000".into(),
        },
    ])?;

    for budget in [DEFAULT_BUDGET_TOKENS, 6_000] {
        let prompt = build_prompt(&template, &sections, &context, budget)?;
        println!(
            "budget {budget:>7}: {:>6} tokens, {} sections, {} lines truncated, errors dropped: {}",
            prompt.estimated_tokens,
            prompt.sections_included.len(),
            prompt.dropped_lines,
            prompt.error_lines_dropped
        );
    }

    let small = build_prompt(&template, &sections, &context, 6_000)?;
    let logs_at = small.text.find("<LOGS=>").unwrap_or(0);
    println!("\nprompt tail from <LOGS=> (first 40 lines):\n");
    for line in small.text[logs_at..].lines().take(40) {
        println!("{line}");
    }
    Ok(())
}
