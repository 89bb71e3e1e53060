//! Minimal single-turn completion client.
//!
//! Request body: `{"model", "temperature", "top_p", "max_output_tokens",
//! "prompt"}`. The endpoint answers `{"text": ..., "input_tokens": ...,
//! "output_tokens": ...}`; the token fields are optional and estimated when
//! absent.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::prompt::{estimate_tokens, DiagnosisPrompt};

use super::{check_request, CompletionBackend, LlmParams, RawResponse, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub url: String,
    /// Name of the environment variable holding a bearer token.
    pub credential_env: Option<String>,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    temperature: f64,
    top_p: f64,
    max_output_tokens: usize,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionReply {
    text: String,
    input_tokens: Option<usize>,
    output_tokens: Option<usize>,
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, retry: RetryPolicy::default(), agent }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn credential(&self) -> Result<Option<String>, BackendError> {
        match &self.config.credential_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BackendError::Unavailable(format!("credential variable {var} is not set"))),
        }
    }

    fn attempt(&self, body: &CompletionRequest<'_>) -> Result<CompletionReply, BackendError> {
        let mut request = self.agent.post(&self.config.url);
        if let Some(token) = self.credential()? {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| self.map_err(e))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("endpoint returned {status}")));
        }
        response
            .body_mut()
            .read_json::<CompletionReply>()
            .map_err(|e| self.map_err(e))
    }

    fn map_err(&self, e: ureq::Error) -> BackendError {
        match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.config.timeout),
            other => BackendError::Unavailable(other.to_string()),
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(
        &self,
        prompt: &DiagnosisPrompt,
        params: &LlmParams,
    ) -> Result<RawResponse, BackendError> {
        check_request(prompt, params)?;
        let body = CompletionRequest {
            model: &params.model_name,
            temperature: params.temperature,
            top_p: params.top_p,
            max_output_tokens: params.max_output_tokens,
            prompt: &prompt.text,
        };
        let started = Instant::now();
        let reply = self.retry.run(|| self.attempt(&body))?;
        if reply.text.trim().is_empty() {
            return Err(BackendError::ResponseEmpty);
        }
        Ok(RawResponse {
            input_tokens: reply.input_tokens.unwrap_or(prompt.estimated_tokens),
            output_tokens: reply.output_tokens.unwrap_or_else(|| estimate_tokens(&reply.text)),
            text: reply.text,
            latency: started.elapsed(),
            backend: "http".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves `replies.len()` requests, each answered with (status, body)
    /// after an optional delay, and forwards received request bodies.
    fn stub(replies: Vec<(u16, String, Duration)>) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body, delay) in replies {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line["authorization:".len()..].trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                let _ = tx.send((String::from_utf8(buf).unwrap(), auth));
                thread::sleep(delay);
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        (url, rx)
    }

    fn prompt(text: &str) -> DiagnosisPrompt {
        DiagnosisPrompt {
            text: text.into(),
            estimated_tokens: estimate_tokens(text),
            budget_tokens: 100,
            truncated: false,
            dropped_lines: 0,
            error_lines_dropped: false,
            sections_included: vec![],
            template_version: "t".into(),
            logs: Default::default(),
        }
    }

    fn backend(url: String, timeout: Duration) -> HttpBackend {
        HttpBackend::new(HttpBackendConfig { url, credential_env: None, timeout })
            .with_retry(RetryPolicy { max_retries: 2, initial_backoff: Duration::from_millis(5) })
    }

    #[test]
    fn returns_canned_text_and_sends_params() {
        let canned = "==Conclusion==\nit broke";
        let body = serde_json::json!({"text": canned, "output_tokens": 4}).to_string();
        let (url, rx) = stub(vec![(200, body, Duration::ZERO)]);
        let r = backend(url, Duration::from_secs(5))
            .complete(&prompt("hello prompt"), &LlmParams::default())
            .unwrap();
        assert_eq!(r.text, canned);
        assert_eq!(r.output_tokens, 4);
        assert_eq!(r.input_tokens, estimate_tokens("hello prompt"));
        let (sent, _) = rx.recv().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&sent).unwrap();
        assert_eq!(sent["temperature"], 0.1);
        assert_eq!(sent["top_p"], 0.8);
        assert_eq!(sent["prompt"], "hello prompt");
    }

    #[test]
    fn sends_bearer_credential_from_env() {
        let var = "LOGDIAG_TEST_HTTP_CREDENTIAL";
        std::env::set_var(var, "s3cret");
        let (url, rx) = stub(vec![(200, r#"{"text":"ok"}"#.into(), Duration::ZERO)]);
        let b = HttpBackend::new(HttpBackendConfig {
            url,
            credential_env: Some(var.into()),
            timeout: Duration::from_secs(5),
        });
        b.complete(&prompt("p"), &LlmParams::default()).unwrap();
        assert_eq!(rx.recv().unwrap().1, "Bearer s3cret");
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let (url, _rx) = stub(vec![
            (503, "{}".into(), Duration::ZERO),
            (503, "{}".into(), Duration::ZERO),
            (200, r#"{"text":"third time"}"#.into(), Duration::ZERO),
        ]);
        let r = backend(url, Duration::from_secs(5)).complete(&prompt("p"), &LlmParams::default());
        assert_eq!(r.unwrap().text, "third time");
    }

    #[test]
    fn empty_text_is_an_error() {
        let (url, _rx) = stub(vec![(200, r#"{"text":"  "}"#.into(), Duration::ZERO)]);
        let r = backend(url, Duration::from_secs(5)).complete(&prompt("p"), &LlmParams::default());
        assert_eq!(r, Err(BackendError::ResponseEmpty));
    }

    #[test]
    fn slow_endpoint_times_out_without_retry() {
        let (url, _rx) = stub(vec![(200, r#"{"text":"late"}"#.into(), Duration::from_secs(3))]);
        let started = Instant::now();
        let r = backend(url, Duration::from_millis(300)).complete(&prompt("p"), &LlmParams::default());
        assert!(matches!(r, Err(BackendError::Timeout(_))), "{r:?}");
        assert!(started.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn connection_refused_is_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let r = backend(format!("http://127.0.0.1:{port}/"), Duration::from_secs(1))
            .complete(&prompt("p"), &LlmParams::default());
        assert!(matches!(r, Err(BackendError::Unavailable(_))));
    }
}
