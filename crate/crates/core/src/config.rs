//! Key-value configuration shared by the CLI and the service.
//!
//! ```toml
//! port = 8080
//! webhook_url = "http://review.internal/hooks/findings"
//! backend = "http"            # http | mock | replay
//! backend_url = "http://llm.internal/v1/complete"
//! credential_env = "LOGDIAG_API_KEY"
//! replay_dir = "recordings"   # replay only; with backend_url set, misses are recorded
//! budget_tokens = 200000
//! link_scheme = "log://{bundle}/{file}#L{line}"
//! findings_dir = "logdiag-data/findings"
//! feedback_file = "logdiag-data/feedback.jsonl"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{
    CompletionBackend, HttpBackend, HttpBackendConfig, LlmParams, MockBackend, ReplayBackend, ReplayStore,
};
use crate::finding::LinkScheme;
use crate::ingest::IngestionConfig;
use crate::pipeline::PipelineConfig;
use crate::prompt::{ComponentContext, ContextEntry, PromptTemplate, DEFAULT_BUDGET_TOKENS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
    Replay,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend `{other}` (expected http, mock or replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub webhook_url: Option<String>,
    pub backend: BackendKind,
    pub backend_url: Option<String>,
    pub credential_env: Option<String>,
    pub backend_timeout_secs: u64,
    pub replay_dir: Option<PathBuf>,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub budget_tokens: usize,
    pub link_scheme: String,
    pub template_file: Option<PathBuf>,
    /// TOML file of `[[component]]` tables with `name`, `description`, `args`.
    pub context_file: Option<PathBuf>,
    pub driver_components: Vec<String>,
    pub findings_dir: PathBuf,
    pub feedback_file: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let params = LlmParams::default();
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            webhook_url: None,
            backend: BackendKind::Mock,
            backend_url: None,
            credential_env: None,
            backend_timeout_secs: 300,
            replay_dir: None,
            model_name: params.model_name,
            temperature: params.temperature,
            top_p: params.top_p,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            link_scheme: LinkScheme::default().0,
            template_file: None,
            context_file: None,
            driver_components: vec!["test_driver".into()],
            findings_dir: PathBuf::from("logdiag-data/findings"),
            feedback_file: PathBuf::from("logdiag-data/feedback.jsonl"),
        }
    }
}

#[derive(Deserialize)]
struct ContextFile {
    #[serde(default)]
    component: Vec<ContextComponent>,
}

#[derive(Deserialize)]
struct ContextComponent {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    args: String,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, String> {
        let template = match &self.template_file {
            Some(p) => PromptTemplate::from_file(p).map_err(|e| e.to_string())?,
            None => PromptTemplate::bundled(),
        };
        let context = match &self.context_file {
            Some(p) => load_context(p)?,
            None => ComponentContext::default(),
        };
        let ingestion = IngestionConfig {
            driver_component_names: self.driver_components.iter().cloned().collect(),
            ..IngestionConfig::default()
        };
        ingestion.validate().map_err(|e| e.to_string())?;
        let params = LlmParams {
            temperature: self.temperature,
            top_p: self.top_p,
            model_name: self.model_name.clone(),
            ..LlmParams::default()
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(PipelineConfig {
            ingestion,
            template,
            context,
            budget_tokens: self.budget_tokens,
            params,
            link_scheme: LinkScheme(self.link_scheme.clone()),
            ..PipelineConfig::default()
        })
    }

    fn http_backend(&self) -> Option<HttpBackend> {
        self.backend_url.as_ref().map(|url| {
            HttpBackend::new(HttpBackendConfig {
                url: url.clone(),
                credential_env: self.credential_env.clone(),
                timeout: Duration::from_secs(self.backend_timeout_secs),
            })
        })
    }

    pub fn build_backend(&self) -> Result<Arc<dyn CompletionBackend>, String> {
        Ok(match self.backend {
            BackendKind::Mock => Arc::new(MockBackend),
            BackendKind::Http => Arc::new(self.http_backend().ok_or("backend = \"http\" requires backend_url")?),
            BackendKind::Replay => {
                let dir = self.replay_dir.as_ref().ok_or("backend = \"replay\" requires replay_dir")?;
                let store = ReplayStore::open(dir).map_err(|e| e.to_string())?;
                match self.http_backend() {
                    Some(http) => Arc::new(ReplayBackend::recording(store, Arc::new(http))),
                    None => Arc::new(ReplayBackend::replay_only(store)),
                }
            }
        })
    }
}

fn load_context(path: &Path) -> Result<ComponentContext, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed: ContextFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let entries = parsed
        .component
        .into_iter()
        .map(|c| ContextEntry { component: c.name, description: c.description, command_line: c.args })
        .collect();
    ComponentContext::new(entries).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ServiceConfig::from_toml("").unwrap();
        assert_eq!(c, ServiceConfig::default());
        let c = ServiceConfig::from_toml("port = 9000\nbackend = \"replay\"\nreplay_dir = \"r\"\nbudget_tokens = 5000\n").unwrap();
        assert_eq!((c.port, c.backend, c.budget_tokens), (9000, BackendKind::Replay, 5000));
        assert!(ServiceConfig::from_toml("prot = 1").is_err());
    }

    #[test]
    fn http_without_url_is_rejected() {
        let c = ServiceConfig { backend: BackendKind::Http, ..Default::default() };
        assert!(c.build_backend().is_err());
    }

    #[test]
    fn context_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ctx.toml");
        fs::write(&p, "[[component]]\nname = \"server-a\"\ndescription = \"frontend\"\nargs = \"--port=1\"\n").unwrap();
        let c = ServiceConfig { context_file: Some(p), ..Default::default() };
        let pc = c.pipeline_config().unwrap();
        assert_eq!(pc.context.entries()[0].command_line, "--port=1");
    }
}
