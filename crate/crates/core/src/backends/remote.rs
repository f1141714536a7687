use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    one_hot_logits, parse_forced_choice, parse_rating, parse_verdict, truncate_for_log, with_retry, BackendConfig,
    BackendError, BackendKind, ClassificationRequest, Classifier, Generator, Judge, Sleeper, ThreadSleeper,
};
use crate::generator::DecodingParams;
use crate::model::Provenance;

/// Replaces every occurrence of `secret` in `text`.
pub fn scrub_secret(text: &str, secret: Option<&str>) -> String {
    match secret {
        Some(s) if !s.is_empty() => text.replace(s, "[REDACTED]"),
        _ => text.to_string(),
    }
}

#[derive(Default)]
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self, cap: usize) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= cap {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

/// Client for an OpenAI-compatible `chat/completions` endpoint. Serves as
/// classifier (forced-choice answers mapped to one-hot logits), generator and
/// judge.
pub struct RemoteBackend {
    config: BackendConfig,
    agent: ureq::Agent,
    sleeper: Arc<dyn Sleeper>,
    gate: Gate,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model_name)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        Self::with_sleeper(config, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(config: BackendConfig, sleeper: Arc<dyn Sleeper>) -> Result<Self, BackendError> {
        if config.kind != BackendKind::Remote {
            return Err(BackendError::Config("RemoteBackend needs kind = remote".into()));
        }
        config.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(config.timeout_ms)).build();
        Ok(RemoteBackend { config, agent, sleeper, gate: Gate::default() })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.as_deref().unwrap_or("").trim_end_matches('/'))
    }

    /// The JSON body sent for one prompt.
    pub fn request_body(&self, prompt: &str, params: &DecodingParams) -> Value {
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_new_units,
        });
        if self.config.send_top_k {
            body["top_k"] = json!(params.top_k);
        } else {
            log::info!("top_k={} not sent: endpoint configured without vendor extensions", params.top_k);
        }
        body
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.config.auth_token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BackendError::AuthFailure(format!("environment variable {var} is not set"))),
        }
    }

    fn send_once(&self, body: &Value, token: Option<&str>) -> Result<String, BackendError> {
        let _permit = self.gate.acquire(self.config.max_concurrency);
        let mut req = self.agent.post(&self.url()).set("Content-Type", "application/json");
        if let Some(t) = token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let scrub = |s: String| scrub_secret(&s, token);
        match req.send_json(body) {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| classify_io(&e, token))?;
                let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
                    BackendError::ProtocolViolation(scrub(format!(
                        "invalid chat response ({e}): {}",
                        truncate_for_log(&text)
                    )))
                })?;
                let content = parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| BackendError::ProtocolViolation("response has no choices".into()))?
                    .message
                    .content
                    .unwrap_or_default();
                Ok(content)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let message = scrub(truncate_for_log(&text));
                if status == 401 || status == 403 {
                    Err(BackendError::AuthFailure(format!("HTTP {status}: {message}")))
                } else {
                    Err(BackendError::Status { status, message })
                }
            }
            Err(ureq::Error::Transport(t)) => Err(classify_transport(&t, token)),
        }
    }

    /// Sends `prompt` and returns the first choice's text, retrying transient
    /// failures.
    pub fn chat(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError> {
        let token = self.token()?;
        let body = self.request_body(prompt, params);
        with_retry(self.config.retry_policy(), self.sleeper.as_ref(), |_| {
            self.send_once(&body, token.as_deref())
        })
    }

    /// Like [`chat`](Self::chat), but a parse failure of the answer is retried
    /// too.
    fn chat_parsed<T>(
        &self,
        prompt: &str,
        params: &DecodingParams,
        parse: impl Fn(&str) -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let token = self.token()?;
        let body = self.request_body(prompt, params);
        with_retry(self.config.retry_policy(), self.sleeper.as_ref(), |_| {
            let text = self.send_once(&body, token.as_deref())?;
            parse(&text)
        })
    }
}

fn classify_io(e: &std::io::Error, token: Option<&str>) -> BackendError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => BackendError::Timeout,
        _ => BackendError::Transport(scrub_secret(&e.to_string(), token)),
    }
}

fn classify_transport(t: &ureq::Transport, token: Option<&str>) -> BackendError {
    let mut source: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(t);
    while let Some(s) = source {
        if let Some(io) = s.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return BackendError::Timeout;
            }
        }
        source = s.source();
    }
    let msg = t.to_string();
    if msg.contains("timed out") {
        BackendError::Timeout
    } else {
        BackendError::Transport(scrub_secret(&msg, token))
    }
}

/// Decoding for forced-choice and judging calls.
fn deterministic_params() -> DecodingParams {
    DecodingParams { temperature: 0.0, max_new_units: 64, ..DecodingParams::default() }
}

impl Classifier for RemoteBackend {
    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<f64>, BackendError> {
        let prompt = format!("{}\n\n{}", request.instruction, request.rendered_context);
        let space = request.label_space;
        self.chat_parsed(&prompt, &deterministic_params(), |answer| {
            parse_forced_choice(answer, space).map(|i| one_hot_logits(space, i))
        })
    }

    fn provenance(&self) -> Provenance {
        Provenance::Model
    }
}

impl Generator for RemoteBackend {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError> {
        let text = self.chat(prompt, params)?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyGeneration);
        }
        Ok(text)
    }
}

impl Judge for RemoteBackend {
    fn rate(&self, prompt: &str) -> Result<f64, BackendError> {
        // Range violations are not transient; surface them directly.
        let text = self.chat(prompt, &deterministic_params())?;
        parse_rating(&text)
    }

    fn verdict(&self, prompt: &str) -> Result<bool, BackendError> {
        let text = self.chat(prompt, &deterministic_params())?;
        parse_verdict(&text)
    }
}
