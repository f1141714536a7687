//! Construction of contrastive question preference pairs.
//!
//! Each seeker turn of a corpus yields a direct question candidate and a
//! transition-enhanced rewrite of it. Both are scored on a seven-dimension
//! rubric; the better one is kept if it clears an absolute threshold.

mod pipeline;
mod rubric;
mod score;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;

pub use pipeline::{
    contrast_select, filter_corpus, generate_candidates, ContextOutcome, ForgeConfig, ForgeOutput, ForgeStats,
    PreferenceRecord, PromptTemplates, RecordTurn, RubricSummary, DEFAULT_MIN_TOTAL,
};
pub use rubric::{
    adjust_rubric_for_anxiety, is_anxiety_related, Dimension, DimensionVector, Lexicons, ScoringRubric,
    ANXIETY_SHIFT, DEFAULT_WEIGHTS,
};
pub use score::{
    conciseness, diversity, extend_with, interrogative_structure, is_directive, score_candidate, semantic_relevance,
    tf_cosine, QualityScore,
};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("candidate has no score")]
    UnscoredCandidate,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid rubric: {0}")]
    InvalidRubric(String),
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
    #[error("empty context")]
    EmptyContext,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Direct,
    TransitionEnhanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCandidate {
    pub text: String,
    pub kind: CandidateKind,
    pub source_conversation_id: String,
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<QualityScore>,
}

impl QuestionCandidate {
    pub fn total(&self) -> Result<f64, ForgeError> {
        self.score.as_ref().map(|s| s.total).ok_or(ForgeError::UnscoredCandidate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRef {
    pub conversation_id: String,
    pub turn_index: usize,
}

/// Chosen candidate and, unless the totals tied, the rejected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub chosen: QuestionCandidate,
    pub rejected: Option<QuestionCandidate>,
    pub context_ref: ContextRef,
}
