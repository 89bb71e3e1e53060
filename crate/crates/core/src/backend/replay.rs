//! Record/replay of completions keyed by the SHA-256 of the prompt text.
//!
//! Each recording is one text file, `<hash>.txt`, holding a few `key: value`
//! header lines, a blank line, then the completion text verbatim.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::error::{BackendError, StoreError};
use crate::prompt::DiagnosisPrompt;

use super::{check_request, CompletionBackend, LlmParams, RawResponse};

pub fn prompt_hash(prompt_text: &str) -> String {
    hex::encode(Sha256::digest(prompt_text.as_bytes()))
}

#[derive(Debug)]
pub struct ReplayStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ReplayStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        Ok(Self { dir, write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, prompt_text: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", prompt_hash(prompt_text)))
    }

    pub fn record(&self, prompt_text: &str, response: &RawResponse) -> Result<(), StoreError> {
        let path = self.path_for(prompt_text);
        let body = format!(
            "backend: {}\ninput_tokens: {}\noutput_tokens: {}\nlatency_ms: {}\n\n{}",
            response.backend,
            response.input_tokens,
            response.output_tokens,
            response.latency.as_millis(),
            response.text
        );
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, body).map_err(|e| StoreError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| StoreError::io(&path, e))
    }

    /// Looks up a recording. A miss is `BackendError::Unavailable`.
    pub fn replay(&self, prompt_text: &str) -> Result<RawResponse, BackendError> {
        let started = Instant::now();
        let path = self.path_for(prompt_text);
        let content = match fs::read_to_string(&path) {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::Unavailable(format!(
                    "no recording for prompt {}",
                    prompt_hash(prompt_text)
                )))
            }
            Err(e) => return Err(BackendError::Unavailable(format!("{}: {e}", path.display()))),
        };
        let corrupt = || BackendError::Unavailable(format!("corrupt recording {}", path.display()));
        let (header, text) = content.split_once("\n\n").ok_or_else(corrupt)?;
        let mut response = RawResponse {
            text: text.to_string(),
            input_tokens: 0,
            output_tokens: 0,
            latency: Duration::ZERO,
            backend: "replay".into(),
        };
        for line in header.lines() {
            let (key, value) = line.split_once(": ").ok_or_else(corrupt)?;
            match key {
                "input_tokens" => response.input_tokens = value.parse().map_err(|_| corrupt())?,
                "output_tokens" => response.output_tokens = value.parse().map_err(|_| corrupt())?,
                _ => {}
            }
        }
        response.latency = started.elapsed();
        Ok(response)
    }
}

/// Replays recorded completions. With a fallback backend, misses are
/// forwarded to it and recorded; without one, a miss is an error.
pub struct ReplayBackend {
    store: ReplayStore,
    fallback: Option<Arc<dyn CompletionBackend>>,
}

impl ReplayBackend {
    pub fn replay_only(store: ReplayStore) -> Self {
        Self { store, fallback: None }
    }

    pub fn recording(store: ReplayStore, fallback: Arc<dyn CompletionBackend>) -> Self {
        Self { store, fallback: Some(fallback) }
    }

    pub fn store(&self) -> &ReplayStore {
        &self.store
    }
}

impl CompletionBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(
        &self,
        prompt: &DiagnosisPrompt,
        params: &LlmParams,
    ) -> Result<RawResponse, BackendError> {
        check_request(prompt, params)?;
        match (self.store.replay(&prompt.text), &self.fallback) {
            (Ok(r), _) => Ok(r),
            (Err(BackendError::Unavailable(_)), Some(inner)) => {
                let response = inner.complete(prompt, params)?;
                if let Err(e) = self.store.record(&prompt.text, &response) {
                    tracing::warn!(error = %e, "failed to record completion");
                }
                Ok(response)
            }
            (Err(e), _) => Err(e),
        }
    }
}
