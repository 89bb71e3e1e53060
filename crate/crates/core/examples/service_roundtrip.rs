//! Starts the service on a local port and walks through the notification
//! flow: report a failure, read the finding, leave feedback, read metrics.

use std::sync::Arc;

use logdiag::backend::MockBackend;
use logdiag::eval::{generate_bundle, CaseSpec, FaultKind};
use logdiag::feedback::FeedbackStore;
use logdiag::finding::FindingStore;
use logdiag::pipeline::PipelineConfig;
use logdiag::service::{spawn_local, AppState};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let bundle = tmp.path().join("crash-42");
    let spec = CaseSpec {
        components: 3,
        lines_per_file: 100..=200,
        noise_error_rate: 0.05,
        fault: FaultKind::ComponentCrash("server-a".into()),
        seed: 42,
    };
    generate_bundle(&spec, &bundle)?;

    let state = AppState::new(
        PipelineConfig::default(),
        Arc::new(MockBackend),
        FindingStore::open(tmp.path().join("findings"))?,
        FeedbackStore::open(tmp.path().join("feedback.jsonl"))?,
        None,
    );
    let (base, _server) = spawn_local(state)?;
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();

    let mut resp = agent.post(format!("{base}/failures")).send_json(json!({ "bundle_path": bundle }))?;
    let accepted: Value = resp.body_mut().read_json()?;
    println!("POST /failures -> {} {accepted}", resp.status());
    let id = accepted["finding_id"].as_str().unwrap_or_default().to_string();

    let mut resp = agent.get(format!("{base}/findings/{id}")).call()?;
    let finding: Value = resp.body_mut().read_json()?;
    println!("GET /findings/{id} -> {} outcome={}", resp.status(), finding["outcome"]);
    println!("{}", finding["body_markdown"].as_str().unwrap_or_default());

    let resp = agent
        .post(format!("{base}/findings/{id}/feedback"))
        .send_json(json!({ "kind": "helpful", "user": "author1" }))?;
    println!("POST feedback -> {}", resp.status());

    let mut resp = agent.get(format!("{base}/metrics")).call()?;
    let metrics: Value = resp.body_mut().read_json()?;
    println!("GET /metrics -> {} {}", resp.status(), serde_json::to_string_pretty(&metrics)?);

    let resp = agent.post(format!("{base}/failures")).send_json(json!({ "bundle_path": "/no/such/dir" }))?;
    println!("POST /failures (missing path) -> {}", resp.status());
    Ok(())
}
