use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rubric::{adjust_rubric_for_anxiety, DimensionVector, ScoringRubric};
use super::score::{score_candidate, QualityScore};
use super::{CandidateKind, CandidatePair, ContextRef, ForgeError, QuestionCandidate};
use crate::backends::{BackendError, Generator, Judge};
use crate::generator::DecodingParams;
use crate::model::{Conversation, Turn};

pub const DEFAULT_MIN_TOTAL: f64 = 0.6;

const CRITERIA: &str = "Requirements:\n\
1. Openness: invite the seeker to elaborate; avoid yes/no questions.\n\
2. Emotional resonance: stay attuned to how the seeker feels right now.\n\
3. Non-directiveness: do not prescribe actions; never say \"you should\" or \"try this\".";

/// Candidate prompts. `direct` needs `{context}`; `transition` needs
/// `{context}` and `{question}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub direct: String,
    pub transition: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            direct: format!(
                "You are a counselor practicing Socratic questioning. Read the dialogue and write one \
                 follow-up question to the seeker's last message.\n{CRITERIA}\n\nDialogue:\n{{context}}\n\n\
                 Question:"
            ),
            transition: format!(
                "You are a counselor practicing Socratic questioning. Rewrite the draft question so it opens \
                 with a short transition that acknowledges what the seeker just said, then asks the question.\n\
                 {CRITERIA}\n\nDialogue:\n{{context}}\n\nDraft question: {{question}}\n\nRewritten question:"
            ),
        }
    }
}

impl PromptTemplates {
    pub fn validate(&self) -> Result<(), ForgeError> {
        if !self.direct.contains("{context}") {
            return Err(ForgeError::InvalidTemplate("direct template lacks {context}".into()));
        }
        for slot in ["{context}", "{question}"] {
            if !self.transition.contains(slot) {
                return Err(ForgeError::InvalidTemplate(format!("transition template lacks {slot}")));
            }
        }
        Ok(())
    }

    pub fn render_direct(&self, context: &Conversation) -> String {
        self.direct.replace("{context}", &render_dialogue(&context.turns))
    }

    pub fn render_transition(&self, context: &Conversation, question: &str) -> String {
        self.transition
            .replace("{context}", &render_dialogue(&context.turns))
            .replace("{question}", question)
    }
}

fn render_dialogue(turns: &[Turn]) -> String {
    let mut out = Vec::new();
    for t in turns {
        out.push(format!("Seeker: {}", t.seeker_utterance));
        if let Some(r) = &t.supporter_response {
            out.push(format!("Supporter: {r}"));
        }
    }
    out.join("\n")
}

fn candidate(text: String, kind: CandidateKind, context: &Conversation) -> Result<QuestionCandidate, ForgeError> {
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(BackendError::EmptyGeneration.into());
    }
    Ok(QuestionCandidate {
        text,
        kind,
        source_conversation_id: context.conversation_id.clone(),
        turn_index: context.turns.last().map_or(0, |t| t.index),
        score: None,
    })
}

/// Generates the direct candidate, then its transition-enhanced rewrite.
/// A failure on either call aborts the pair.
pub fn generate_candidates(
    context: &Conversation,
    ecm: &dyn Generator,
    templates: &PromptTemplates,
    params: &DecodingParams,
) -> Result<(QuestionCandidate, QuestionCandidate), ForgeError> {
    if context.turns.is_empty() {
        return Err(ForgeError::EmptyContext);
    }
    let q = candidate(ecm.complete(&templates.render_direct(context), params)?, CandidateKind::Direct, context)?;
    let big_q = candidate(
        ecm.complete(&templates.render_transition(context, &q.text), params)?,
        CandidateKind::TransitionEnhanced,
        context,
    )?;
    Ok((q, big_q))
}

/// Keeps the higher-scoring candidate. On an exact tie the direct candidate
/// is kept and nothing is rejected.
pub fn contrast_select(q: QuestionCandidate, big_q: QuestionCandidate) -> Result<CandidatePair, ForgeError> {
    let (s1, s2) = (q.total()?, big_q.total()?);
    let context_ref = ContextRef { conversation_id: q.source_conversation_id.clone(), turn_index: q.turn_index };
    let (chosen, rejected) = if s1 > s2 {
        (q, Some(big_q))
    } else if s2 > s1 {
        (big_q, Some(q))
    } else {
        (q, None)
    };
    Ok(CandidatePair { chosen, rejected, context_ref })
}

#[derive(Clone)]
pub struct ForgeConfig {
    pub rubric: ScoringRubric,
    pub templates: PromptTemplates,
    pub params: DecodingParams,
    pub min_total: f64,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    pub judge: Option<Arc<dyn Judge>>,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            rubric: ScoringRubric::default(),
            templates: PromptTemplates::default(),
            params: DecodingParams::default(),
            min_total: DEFAULT_MIN_TOTAL,
            jobs: 0,
            judge: None,
        }
    }
}

impl ForgeConfig {
    pub fn validate(&self) -> Result<(), ForgeError> {
        self.rubric.validate()?;
        self.templates.validate()?;
        if !self.min_total.is_finite() {
            return Err(ForgeError::InvalidRubric("min_total must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTurn {
    pub seeker: String,
    pub supporter: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricSummary {
    pub weights: DimensionVector,
    pub anxiety_adjusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub chosen: QualityScore,
    pub rejected: Option<QualityScore>,
}

/// One line of the preference-pair output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub context: Vec<RecordTurn>,
    pub chosen: String,
    pub rejected: Option<String>,
    pub scores: PairScores,
    pub rubric: RubricSummary,
    pub source_id: String,
    pub turn_index: usize,
}

impl PreferenceRecord {
    fn new(context: &Conversation, pair: &CandidatePair, rubric: &ScoringRubric) -> Self {
        PreferenceRecord {
            context: context
                .turns
                .iter()
                .map(|t| RecordTurn { seeker: t.seeker_utterance.clone(), supporter: t.supporter_response.clone() })
                .collect(),
            chosen: pair.chosen.text.clone(),
            rejected: pair.rejected.as_ref().map(|r| r.text.clone()),
            scores: PairScores {
                chosen: pair.chosen.score.clone().expect("scored"),
                rejected: pair.rejected.as_ref().and_then(|r| r.score.clone()),
            },
            rubric: RubricSummary { weights: rubric.weights, anxiety_adjusted: rubric.anxiety_adjusted },
            source_id: pair.context_ref.conversation_id.clone(),
            turn_index: pair.context_ref.turn_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextOutcome {
    Retained(Box<PreferenceRecord>),
    BelowThreshold(Box<PreferenceRecord>),
    /// Generation failed after `generated` candidates were produced.
    Errored { generated: u64, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForgeStats {
    pub contexts: u64,
    pub generated: u64,
    pub rejected_by_contrast: u64,
    pub rejected_by_threshold: u64,
    pub retained: u64,
    pub errored: u64,
    pub retained_fraction: f64,
}

impl ForgeStats {
    /// generated = retained + rejected_by_contrast + rejected_by_threshold + errored.
    pub fn is_balanced(&self) -> bool {
        self.generated == self.retained + self.rejected_by_contrast + self.rejected_by_threshold + self.errored
    }
}

#[derive(Default)]
struct Counters {
    contexts: AtomicU64,
    generated: AtomicU64,
    rejected_by_contrast: AtomicU64,
    rejected_by_threshold: AtomicU64,
    retained: AtomicU64,
    errored: AtomicU64,
}

impl Counters {
    fn add(c: &AtomicU64, n: u64) {
        c.fetch_add(n, Ordering::Relaxed);
    }

    fn snapshot(&self) -> ForgeStats {
        let generated = self.generated.load(Ordering::Relaxed);
        let retained = self.retained.load(Ordering::Relaxed);
        ForgeStats {
            contexts: self.contexts.load(Ordering::Relaxed),
            generated,
            rejected_by_contrast: self.rejected_by_contrast.load(Ordering::Relaxed),
            rejected_by_threshold: self.rejected_by_threshold.load(Ordering::Relaxed),
            retained,
            errored: self.errored.load(Ordering::Relaxed),
            retained_fraction: if generated == 0 { 0.0 } else { retained as f64 / generated as f64 },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ForgeOutput {
    pub records: Vec<PreferenceRecord>,
    pub stats: ForgeStats,
}

/// Prefix of `conv` ending at the seeker utterance of turn `i`.
fn prefix(conv: &Conversation, i: usize) -> Conversation {
    let mut turns = conv.turns[..=i].to_vec();
    turns[i].supporter_response = None;
    Conversation { conversation_id: conv.conversation_id.clone(), turns, metadata: conv.metadata.clone() }
}

fn process_context(context: &Conversation, ecm: &dyn Generator, config: &ForgeConfig, counters: &Counters) -> ContextOutcome {
    Counters::add(&counters.contexts, 1);
    let first = match ecm.complete(&config.templates.render_direct(context), &config.params) {
        Ok(text) => candidate(text, CandidateKind::Direct, context),
        Err(e) => Err(e.into()),
    };
    let mut q = match first {
        Ok(q) => q,
        Err(e) => return ContextOutcome::Errored { generated: 0, message: e.to_string() },
    };
    Counters::add(&counters.generated, 1);
    let second = ecm
        .complete(&config.templates.render_transition(context, &q.text), &config.params)
        .map_err(ForgeError::from)
        .and_then(|t| candidate(t, CandidateKind::TransitionEnhanced, context));
    let mut big_q = match second {
        Ok(c) => c,
        Err(e) => {
            Counters::add(&counters.errored, 1);
            return ContextOutcome::Errored { generated: 1, message: e.to_string() };
        }
    };
    Counters::add(&counters.generated, 1);

    let rubric = adjust_rubric_for_anxiety(&config.rubric, context);
    let judge = config.judge.as_deref();
    q.score = Some(score_candidate(&q.text, context, &rubric, judge));
    big_q.score = Some(score_candidate(&big_q.text, context, &rubric, judge));
    let pair = contrast_select(q, big_q).expect("both candidates scored");
    Counters::add(&counters.rejected_by_contrast, 1);

    let record = Box::new(PreferenceRecord::new(context, &pair, &rubric));
    if record.scores.chosen.total >= config.min_total {
        Counters::add(&counters.retained, 1);
        ContextOutcome::Retained(record)
    } else {
        Counters::add(&counters.rejected_by_threshold, 1);
        ContextOutcome::BelowThreshold(record)
    }
}

/// Runs candidate generation, scoring, contrast and the threshold over every
/// seeker turn of every conversation. Output keeps input order.
pub fn filter_corpus(
    conversations: &[Conversation],
    ecm: &dyn Generator,
    config: &ForgeConfig,
) -> Result<ForgeOutput, ForgeError> {
    config.validate()?;
    let contexts: Vec<Conversation> = conversations
        .iter()
        .flat_map(|c| (0..c.turns.len()).map(move |i| prefix(c, i)))
        .collect();
    let counters = Counters::default();
    let run = || -> Vec<ContextOutcome> {
        contexts.par_iter().map(|ctx| process_context(ctx, ecm, config, &counters)).collect()
    };
    let outcomes = if config.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| ForgeError::Io(std::io::Error::other(e)))?
            .install(run)
    } else {
        run()
    };
    let mut records = Vec::new();
    for (ctx, outcome) in contexts.iter().zip(outcomes) {
        match outcome {
            ContextOutcome::Retained(r) => records.push(*r),
            ContextOutcome::BelowThreshold(_) => {}
            ContextOutcome::Errored { message, .. } => {
                log::warn!("skipping {} turn {}: {message}", ctx.conversation_id, ctx.turns.len() - 1)
            }
        }
    }
    Ok(ForgeOutput { records, stats: counters.snapshot() })
}
