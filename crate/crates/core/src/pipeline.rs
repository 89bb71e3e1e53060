//! The full diagnosis flow for one bundle directory.

use std::path::Path;
use std::time::{Duration, Instant};

use crate::backend::{CompletionBackend, LlmParams, RawResponse};
use crate::diagnosis::{parse_response, resolve_citations, ResolvedDiagnosis};
use crate::error::PipelineError;
use crate::finding::{render_finding, Finding, LinkScheme};
use crate::ingest::{load_bundle, IngestionConfig};
use crate::merge::{assemble_sections, filter_by_level, LineRender};
use crate::model::LogBundle;
use crate::prompt::{build_prompt, ComponentContext, DiagnosisPrompt, PromptTemplate, DEFAULT_BUDGET_TOKENS};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub ingestion: IngestionConfig,
    pub template: PromptTemplate,
    pub context: ComponentContext,
    pub budget_tokens: usize,
    pub params: LlmParams,
    pub link_scheme: LinkScheme,
    pub render: LineRender,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ingestion: IngestionConfig::default(),
            template: PromptTemplate::bundled(),
            context: ComponentContext::default(),
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            params: LlmParams::default(),
            link_scheme: LinkScheme::default(),
            render: LineRender::default(),
        }
    }
}

/// Every intermediate artifact of a run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub bundle: LogBundle,
    pub prompt: DiagnosisPrompt,
    pub response: RawResponse,
    pub resolved: ResolvedDiagnosis,
    pub finding: Finding,
    pub latency: Duration,
}

pub fn diagnose_dir(
    root_dir: &Path,
    config: &PipelineConfig,
    backend: &dyn CompletionBackend,
) -> Result<PipelineRun, PipelineError> {
    let started = Instant::now();
    let bundle = load_bundle(root_dir, &config.ingestion)?;
    diagnose_bundle_from(bundle, config, backend, started)
}

pub fn diagnose_bundle(
    bundle: LogBundle,
    config: &PipelineConfig,
    backend: &dyn CompletionBackend,
) -> Result<PipelineRun, PipelineError> {
    diagnose_bundle_from(bundle, config, backend, Instant::now())
}

fn diagnose_bundle_from(
    bundle: LogBundle,
    config: &PipelineConfig,
    backend: &dyn CompletionBackend,
    started: Instant,
) -> Result<PipelineRun, PipelineError> {
    let filtered = filter_by_level(&bundle, config.ingestion.min_level);
    let sections = assemble_sections(&filtered, config.render);
    let prompt = build_prompt(&config.template, &sections, &config.context, config.budget_tokens)?;
    tracing::debug!(
        bundle = %bundle.bundle_id,
        tokens = prompt.estimated_tokens,
        dropped = prompt.dropped_lines,
        "prompt built"
    );
    let response = backend.complete(&prompt, &config.params)?;
    let resolved = resolve_citations(&parse_response(&response), &bundle);
    let mut finding = render_finding(&resolved, &bundle, &config.link_scheme);
    let latency = started.elapsed();
    finding.generation_latency = latency;
    Ok(PipelineRun { bundle, prompt, response, resolved, finding, latency })
}
