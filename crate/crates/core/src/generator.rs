//! Conditioned response generation: prompt composition, backend invocation
//! and the interrogative constraint for `question` turns.

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Generator, CURRENT_UTTERANCE_MARKER};
use crate::model::{SocraticMethod, Strategy, TruncatedContext};
use crate::planner::PlanningSignal;
use crate::text::has_question_mark_sentence;

pub const DEFAULT_MAX_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_new_units: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams { temperature: 0.5, top_p: 0.75, top_k: 20, max_new_units: 256 }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be non-negative, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        if self.top_k == 0 || self.max_new_units == 0 {
            return Err("top_k and max_new_units must be positive".into());
        }
        Ok(())
    }
}

pub const SYSTEM_PREAMBLE: &str = "You are a supportive counselor trained in cognitive behavioral therapy. \
Respond to the seeker's latest message in a warm, non-judgmental way, following the plan below.";

pub const BASELINE_PREAMBLE: &str = "You are a supportive counselor. Respond to the seeker's latest message.";

pub fn strategy_directive(s: Strategy) -> String {
    let what = match s {
        Strategy::Question => "Ask the seeker an open question that invites them to explore their thoughts. The response must contain a question.",
        Strategy::ReflectionOfFeelings => "Reflect the feelings the seeker expressed back to them accurately.",
        Strategy::SelfDisclosure => "Share a brief, relevant personal experience to normalize the seeker's situation.",
        Strategy::Others => "Respond naturally to keep the conversation going.",
        Strategy::Information => "Provide accurate, relevant information that addresses the seeker's need.",
        Strategy::ProvidingSuggestions => "Offer a gentle, concrete suggestion the seeker could consider.",
        Strategy::RolePlay => "Invite the seeker into a short role-play to rehearse the situation.",
        Strategy::RestatementOrParaphrasing => "Restate what the seeker said in your own words to check understanding.",
        Strategy::Unknown => "No constraint on the form of the response.",
        Strategy::AffirmationAndReassurance => "Affirm the seeker's strengths and offer reassurance.",
    };
    format!("Strategy: {s}. {what}")
}

pub fn method_directive(m: SocraticMethod) -> String {
    let how = match m {
        SocraticMethod::Definition => "Ask the seeker to define the absolute terms they used and establish a baseline.",
        SocraticMethod::CounterQuestioning => "Gently question the distorted belief to uncover the core belief behind it.",
        SocraticMethod::Maieutics => "Draw out the alternatives the seeker is hesitating between with exploratory prompts.",
        SocraticMethod::Dialectics => "Surface the contradiction in what the seeker said to create productive cognitive conflict.",
        SocraticMethod::CounterfactualReasoning => "Explore the hypothetical outcome to test it against reality.",
        SocraticMethod::Other => "Use whatever form of inquiry best fits the moment.",
    };
    format!("Socratic method: {m}. {how}")
}

/// One open question per method, appended when generation never satisfies
/// the interrogative constraint.
pub fn fallback_question(m: SocraticMethod) -> &'static str {
    match m {
        SocraticMethod::Definition => "When you say that, what exactly does it mean to you?",
        SocraticMethod::CounterQuestioning => "What evidence supports that thought, and what evidence might not fit it?",
        SocraticMethod::Maieutics => "What possibilities come to mind when you think about the options in front of you?",
        SocraticMethod::Dialectics => "How do you make sense of these two sides of what you have described?",
        SocraticMethod::CounterfactualReasoning => "If that really happened, what do you imagine would come next?",
        SocraticMethod::Other => "Could you tell me more about what this has been like for you?",
    }
}

/// The conditioned input sequence, composed in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedPrompt {
    pub system_preamble: String,
    pub strategy_directive: String,
    pub method_directive: String,
    pub history_block: String,
    pub current_utterance_block: String,
}

impl ComposedPrompt {
    /// Full prompt text. Empty directive blocks are omitted.
    pub fn render(&self) -> String {
        let mut out = format!("[System]\n{}\n\n", self.system_preamble);
        if !self.strategy_directive.is_empty() {
            out.push_str(&format!("[Strategy]\n{}\n\n", self.strategy_directive));
        }
        if !self.method_directive.is_empty() {
            out.push_str(&format!("[Socratic method]\n{}\n\n", self.method_directive));
        }
        out.push_str(&format!("[History]\n{}\n\n", self.history_block));
        out.push_str(CURRENT_UTTERANCE_MARKER);
        out.push_str(&self.current_utterance_block);
        out.push('\n');
        out
    }
}

fn history_block(context: &TruncatedContext) -> String {
    if context.turns.is_empty() {
        return "(no earlier turns)".to_string();
    }
    let mut lines = Vec::new();
    for t in &context.turns {
        lines.push(format!("Seeker: {}", t.seeker_utterance));
        if let Some(r) = &t.supporter_response {
            lines.push(format!("Supporter: {r}"));
        }
    }
    lines.join("\n")
}

/// Composes preamble, strategy, method, history and current utterance.
pub fn compose_sequence(signal: &PlanningSignal, context: &TruncatedContext) -> ComposedPrompt {
    ComposedPrompt {
        system_preamble: SYSTEM_PREAMBLE.to_string(),
        strategy_directive: strategy_directive(signal.strategy),
        method_directive: method_directive(signal.method),
        history_block: history_block(context),
        current_utterance_block: context.current_utterance.clone(),
    }
}

/// Composition without planning directives, for baseline comparisons.
pub fn compose_baseline(context: &TruncatedContext) -> ComposedPrompt {
    ComposedPrompt {
        system_preamble: BASELINE_PREAMBLE.to_string(),
        strategy_directive: String::new(),
        method_directive: String::new(),
        history_block: history_block(context),
        current_utterance_block: context.current_utterance.clone(),
    }
}

/// Sends the rendered prompt to `backend`; returns the trimmed text.
pub fn generate_response(
    prompt: &ComposedPrompt,
    backend: &dyn Generator,
    params: &DecodingParams,
) -> Result<String, BackendError> {
    let text = backend.complete(&prompt.render(), params)?;
    let text = text.trim();
    if text.is_empty() {
        return Err(BackendError::EmptyGeneration);
    }
    Ok(text.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintStatus {
    Satisfied,
    Fallback,
    /// Generated without planning directives; no constraint applied.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedResponse {
    pub text: String,
    pub signal: PlanningSignal,
    pub attempts: u32,
    pub constraint_status: ConstraintStatus,
}

/// Enforces the interrogative constraint on `question` turns.
///
/// A `question` response must contain a sentence ending in `?` or `？`.
/// Failing that, `regenerate` is called up to `max_retries` times; a failed
/// regeneration counts as a non-interrogative attempt. If nothing qualifies,
/// the method's fallback question is appended to the last text. Other
/// strategies pass through.
pub fn enforce_constraints(
    text: String,
    signal: &PlanningSignal,
    mut regenerate: impl FnMut() -> Result<String, BackendError>,
    max_retries: u32,
) -> ValidatedResponse {
    let done = |text: String, attempts, status| ValidatedResponse {
        text,
        signal: signal.clone(),
        attempts,
        constraint_status: status,
    };
    if signal.strategy != Strategy::Question {
        return done(text, 1, ConstraintStatus::Satisfied);
    }
    let mut current = text;
    let mut attempts = 1;
    loop {
        if has_question_mark_sentence(&current) {
            return done(current, attempts, ConstraintStatus::Satisfied);
        }
        if attempts > max_retries {
            break;
        }
        attempts += 1;
        match regenerate() {
            Ok(t) if !t.trim().is_empty() => current = t.trim().to_string(),
            Ok(_) => log::warn!("regeneration {attempts} was empty"),
            Err(e) => log::warn!("regeneration {attempts} failed: {e}"),
        }
    }
    let question = fallback_question(signal.method);
    let text = if current.trim().is_empty() { question.to_string() } else { format!("{} {question}", current.trim_end()) };
    done(text, attempts, ConstraintStatus::Fallback)
}
