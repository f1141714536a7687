//! Provider abstraction for classification, generation and judging.
//!
//! Three kinds of backend sit behind the same traits: deterministic rule
//! tables, scripted mocks for offline runs and tests, and remote
//! OpenAI-compatible chat-completion endpoints.

mod mock;
mod remote;
mod retry;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::DecodingParams;
use crate::model::{Label, LabelSpace, Provenance, SocraticMethod, Strategy};

pub use mock::{MockClassifier, MockGenerator, MockJudge, MockSpec, CURRENT_UTTERANCE_MARKER};
pub use remote::{scrub_secret, RemoteBackend};
pub use retry::{with_retry, RecordingSleeper, RetryPolicy, Sleeper, ThreadSleeper};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("backend returned an empty generation")]
    EmptyGeneration,
    #[error("endpoint returned HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("judge failure: {0}")]
    JudgeFailure(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Whether another attempt may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) | BackendError::ProtocolViolation(_) => true,
            BackendError::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

/// Input to a classification backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRequest {
    /// History and current utterance with role markers.
    pub rendered_context: String,
    /// The utterance being classified, for backends that only look at it.
    pub current_utterance: String,
    pub label_space: LabelSpace,
    pub instruction: String,
}

impl ClassificationRequest {
    pub fn labels(&self) -> Vec<&'static str> {
        self.label_space.labels()
    }
}

/// Produces one logit per label of the request's label space, in canonical
/// order.
pub trait Classifier: Send + Sync {
    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<f64>, BackendError>;
    fn provenance(&self) -> Provenance;
}

pub trait Generator: Send + Sync {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError>;
}

pub trait Judge: Send + Sync {
    /// A rating in [0, 1].
    fn rate(&self, prompt: &str) -> Result<f64, BackendError>;
    /// A yes/no verdict.
    fn verdict(&self, prompt: &str) -> Result<bool, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Rule,
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: Option<String>,
    /// Upper bound on in-flight requests through one handle.
    pub max_concurrency: usize,
    /// Send `top_k` as a vendor extension field.
    pub send_top_k: bool,
    pub mock: Option<MockSpec>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Rule,
            endpoint: None,
            model_name: None,
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_base_ms: 250,
            auth_token_env: None,
            max_concurrency: 8,
            send_top_k: true,
            mock: None,
        }
    }
}

impl BackendConfig {
    pub fn mock(spec: MockSpec) -> Self {
        BackendConfig { kind: BackendKind::Mock, mock: Some(spec), ..Default::default() }
    }

    pub fn remote(endpoint: &str, model_name: &str) -> Self {
        BackendConfig {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.to_string()),
            model_name: Some(model_name.to_string()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout_ms must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(BackendError::Config("max_concurrency must be positive".into()));
        }
        if self.kind == BackendKind::Remote {
            if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                return Err(BackendError::Config("remote backend requires an endpoint".into()));
            }
            if self.model_name.as_deref().is_none_or(|e| e.trim().is_empty()) {
                return Err(BackendError::Config("remote backend requires a model_name".into()));
            }
        }
        if self.kind == BackendKind::Mock && self.mock.is_none() {
            return Err(BackendError::Config("mock backend requires a mock script".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries, backoff_base_ms: self.backoff_base_ms }
    }
}

/// Builds a classifier from configuration. Rule configs use the default rule
/// tables.
pub fn build_classifier(config: &BackendConfig) -> Result<Arc<dyn Classifier>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Rule => Arc::new(crate::planner::RuleClassifier::default()),
        BackendKind::Mock => Arc::new(MockClassifier::from_spec(config.mock.as_ref().expect("validated"))?),
        BackendKind::Remote => Arc::new(RemoteBackend::new(config.clone())?),
    })
}

pub fn build_generator(config: &BackendConfig) -> Result<Arc<dyn Generator>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Rule => {
            return Err(BackendError::Config("generation has no rule backend; use mock or remote".into()))
        }
        BackendKind::Mock => Arc::new(MockGenerator::from_spec(config.mock.as_ref().expect("validated"))),
        BackendKind::Remote => Arc::new(RemoteBackend::new(config.clone())?),
    })
}

pub fn build_judge(config: &BackendConfig) -> Result<Arc<dyn Judge>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Rule => {
            return Err(BackendError::Config("judging has no rule backend; use mock or remote".into()))
        }
        BackendKind::Mock => Arc::new(MockJudge::from_spec(config.mock.as_ref().expect("validated"))),
        BackendKind::Remote => Arc::new(RemoteBackend::new(config.clone())?),
    })
}

/// Parses a rating answer: the first number in the text, which must lie in
/// [0, 1].
pub fn parse_rating(answer: &str) -> Result<f64, BackendError> {
    let token = answer
        .split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .find(|t| t.chars().any(|c| c.is_ascii_digit()))
        .ok_or_else(|| BackendError::JudgeFailure(format!("no number in answer '{}'", answer.trim())))?;
    let v: f64 = token
        .parse()
        .map_err(|_| BackendError::JudgeFailure(format!("unparseable number '{token}'")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(BackendError::JudgeFailure(format!("rating {v} outside [0, 1]")));
    }
    Ok(v)
}

/// Parses a yes/no answer.
pub fn parse_verdict(answer: &str) -> Result<bool, BackendError> {
    let first = answer
        .trim()
        .split(|c: char| !c.is_alphanumeric())
        .find(|t| !t.is_empty())
        .unwrap_or("")
        .to_lowercase();
    match first.as_str() {
        "yes" | "true" | "1" | "y" | "是" => Ok(true),
        "no" | "false" | "0" | "n" | "否" => Ok(false),
        _ => Err(BackendError::JudgeFailure(format!("expected yes/no, got '{}'", answer.trim()))),
    }
}

fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase().replace([' ', '-'], "_")
}

/// Maps a free-form method name to a canonical method. Names outside the
/// five named methods map to `other`.
pub fn method_from_answer(name: &str) -> SocraticMethod {
    let n = normalize_label(name);
    let n = n.strip_suffix("_method").unwrap_or(&n);
    match n {
        "definition" => SocraticMethod::Definition,
        "elenchus" | "counter_questioning" | "counterquestioning" => SocraticMethod::CounterQuestioning,
        "maieutics" => SocraticMethod::Maieutics,
        "dialectics" => SocraticMethod::Dialectics,
        "counterfactual" | "counterfactual_reasoning" => SocraticMethod::CounterfactualReasoning,
        _ => SocraticMethod::Other,
    }
}

pub fn strategy_from_answer(name: &str) -> Option<Strategy> {
    let n = normalize_label(name).replace("&", "and");
    Strategy::ALL.iter().copied().find(|s| s.as_str() == n)
}

fn json_object_in(text: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    match serde_json::from_str::<serde_json::Value>(&text[start..=end]) {
        Ok(serde_json::Value::Object(m)) => Some(m),
        _ => None,
    }
}

/// Maps a forced-choice answer to the index of the chosen label.
///
/// Method answers follow the `{"SocraticMethod": ...}` shape; strategy answers
/// `{"Strategy": ...}`. A bare label is also accepted.
pub fn parse_forced_choice(answer: &str, space: LabelSpace) -> Result<usize, BackendError> {
    let key = match space {
        LabelSpace::Strategy => "strategy",
        LabelSpace::SocraticMethod => "socraticmethod",
    };
    if let Some(obj) = json_object_in(answer) {
        let value = obj
            .iter()
            .find(|(k, _)| k.to_lowercase().replace(['_', ' '], "") == key)
            .and_then(|(_, v)| v.as_str())
            .ok_or_else(|| BackendError::ProtocolViolation(format!("answer lacks a string '{key}' field")))?;
        return match space {
            LabelSpace::SocraticMethod => Ok(method_from_answer(value).index()),
            LabelSpace::Strategy => strategy_from_answer(value)
                .map(Label::index)
                .ok_or_else(|| BackendError::ProtocolViolation(format!("unknown strategy '{value}'"))),
        };
    }
    let bare = answer.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.');
    let found = match space {
        LabelSpace::Strategy => strategy_from_answer(bare).map(Label::index),
        LabelSpace::SocraticMethod => {
            let m = method_from_answer(bare);
            (m != SocraticMethod::Other || normalize_label(bare) == "other").then(|| m.index())
        }
    };
    found.ok_or_else(|| {
        BackendError::ProtocolViolation(format!("unparseable {space} answer: '{}'", truncate_for_log(answer)))
    })
}

pub(crate) fn truncate_for_log(s: &str) -> String {
    let t: String = s.chars().take(120).collect();
    if t.len() < s.len() {
        format!("{t}…")
    } else {
        t
    }
}

/// One-hot logits (1 at `index`, 0 elsewhere).
pub fn one_hot_logits(space: LabelSpace, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; space.len()];
    v[index] = 1.0;
    v
}
