//! Completion backends.
//!
//! Every backend turns a [`DiagnosisPrompt`] into a [`RawResponse`]. Three
//! implementations ship with the crate: a remote HTTP endpoint, a
//! deterministic rule-based mock, and a record/replay store that can wrap
//! either of the others.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::prompt::DiagnosisPrompt;

mod http;
mod mock;
mod replay;

pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{mock_diagnose, MockBackend};
pub use replay::{prompt_hash, ReplayBackend, ReplayStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmParams {
    pub temperature: f64,
    pub top_p: f64,
    pub model_name: String,
    pub max_output_tokens: usize,
}

impl Default for LlmParams {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            top_p: 0.8,
            model_name: "default".to_string(),
            max_output_tokens: 8192,
        }
    }
}

impl LlmParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidParams(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidParams(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub latency: Duration,
    pub backend: String,
}

pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(
        &self,
        prompt: &DiagnosisPrompt,
        params: &LlmParams,
    ) -> Result<RawResponse, BackendError>;
}

pub(crate) fn check_request(prompt: &DiagnosisPrompt, params: &LlmParams) -> Result<(), BackendError> {
    params.validate()?;
    if prompt.text.is_empty() {
        return Err(BackendError::InvalidParams("empty prompt".into()));
    }
    Ok(())
}

/// Retries `BackendError::Unavailable` with exponential backoff. Timeouts
/// and other errors are returned immediately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 2, initial_backoff: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut attempt: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut backoff = self.initial_backoff;
        let mut retries = 0;
        loop {
            match attempt() {
                Err(BackendError::Unavailable(reason)) if retries < self.max_retries => {
                    tracing::warn!(%reason, retries, "backend unavailable, retrying");
                    thread::sleep(backoff);
                    backoff *= 2;
                    retries += 1;
                }
                other => return other,
            }
        }
    }
}
