//! Deterministic per-dimension scorers and the weighted total.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::rubric::{Dimension, DimensionVector, Lexicons, ScoringRubric};
use crate::backends::Judge;
use crate::model::Conversation;
use crate::text::{interrogative_sentences, lexicon_hits, size_units, terms, DEFAULT_QUESTION_OPENERS, WH_WORDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub per_dimension: DimensionVector,
    pub total: f64,
    /// Dimensions whose judge call failed and fell back to the
    /// deterministic scorer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub judge_fallbacks: Vec<Dimension>,
}

impl QualityScore {
    /// Total = Σ weight · score over the rubric's weights.
    pub fn from_parts(per_dimension: DimensionVector, rubric: &ScoringRubric) -> Self {
        QualityScore { total: rubric.weights.dot(&per_dimension), per_dimension, judge_fallbacks: Vec::new() }
    }
}

fn term_counts(t: &[String]) -> HashMap<&str, f64> {
    let mut m = HashMap::new();
    for w in t {
        *m.entry(w.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

/// Cosine similarity of term-frequency vectors; 0 when either is empty.
pub fn tf_cosine(a: &str, b: &str) -> f64 {
    let (ta, tb) = (terms(a), terms(b));
    let (ca, cb) = (term_counts(&ta), term_counts(&tb));
    let dot: f64 = ca.iter().filter_map(|(w, x)| cb.get(w).map(|y| x * y)).sum();
    let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// 0.7 · cosine(candidate, seeker utterance) + 0.3 · keyword coverage, where
/// coverage is the fraction of `keyword_lexicon` present in the candidate.
pub fn semantic_relevance(candidate: &str, seeker_utterance: &str, keyword_lexicon: &[String]) -> f64 {
    let cosine = tf_cosine(candidate, seeker_utterance).clamp(0.0, 1.0);
    let keywords = if keyword_lexicon.is_empty() {
        0.0
    } else {
        (lexicon_hits(&terms(candidate), keyword_lexicon) as f64 / keyword_lexicon.len() as f64).min(1.0)
    };
    0.7 * cosine + 0.3 * keywords
}

/// 1.0 for an open wh-question, 0.5 for another question form, 0 otherwise.
pub fn interrogative_structure(candidate: &str) -> f64 {
    let qs = interrogative_sentences(candidate, DEFAULT_QUESTION_OPENERS);
    if qs.is_empty() {
        0.0
    } else if qs.iter().any(|s| terms(s).iter().any(|w| WH_WORDS.contains(&w.as_str()))) {
        1.0
    } else {
        0.5
    }
}

/// 1.0 between 10 and 120 size units, linear down to 0 at 0 and at 400.
pub fn conciseness(candidate: &str) -> f64 {
    let u = size_units(candidate) as f64;
    if u < 10.0 {
        u / 10.0
    } else if u <= 120.0 {
        1.0
    } else if u < 400.0 {
        (400.0 - u) / 280.0
    } else {
        0.0
    }
}

fn bigrams(t: &[String]) -> HashSet<(&str, &str)> {
    t.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect()
}

/// Fraction of the candidate's distinct bigrams that do not already occur in
/// the context.
pub fn diversity(candidate: &str, context: &Conversation) -> f64 {
    let ct = terms(candidate);
    let cand = bigrams(&ct);
    if cand.is_empty() {
        return 0.0;
    }
    let ctx_terms: Vec<Vec<String>> = context
        .turns
        .iter()
        .flat_map(|t| std::iter::once(&t.seeker_utterance).chain(t.supporter_response.as_ref()))
        .map(|s| terms(s))
        .collect();
    let seen: HashSet<(&str, &str)> = ctx_terms.iter().flat_map(|t| bigrams(t)).collect();
    cand.iter().filter(|b| !seen.contains(b)).count() as f64 / cand.len() as f64
}

pub fn is_directive(candidate: &str, lexicons: &Lexicons) -> bool {
    lexicon_hits(&terms(candidate), &lexicons.directive_phrases) > 0
}

fn judge_prompt(d: Dimension, context: &Conversation, candidate: &str) -> String {
    let mut dialogue = String::new();
    for t in &context.turns {
        dialogue.push_str(&format!("Seeker: {}\n", t.seeker_utterance));
        if let Some(r) = &t.supporter_response {
            dialogue.push_str(&format!("Supporter: {r}\n"));
        }
    }
    format!(
        "Rate the counselor's candidate question on {} from 0 to 1. Answer with a single number.\n\n\
         Dialogue:\n{dialogue}\nCandidate: {candidate}",
        d.as_str().replace('_', " ")
    )
}

/// Appends `candidate` as the supporter response of the final turn.
pub fn extend_with(context: &Conversation, candidate: &str) -> Conversation {
    let mut conv = context.clone();
    if let Some(last) = conv.turns.last_mut() {
        last.supporter_response = Some(candidate.to_string());
    }
    conv
}

/// Scores `candidate` as the supporter reply to the final seeker utterance of
/// `context`. A judge, when given, rates guidance, empathy and tone; a failed
/// judge call falls back to the lexicon scorer and is recorded.
pub fn score_candidate(
    candidate: &str,
    context: &Conversation,
    rubric: &ScoringRubric,
    judge: Option<&dyn Judge>,
) -> QualityScore {
    let conv = extend_with(context, candidate);
    let reply = conv
        .turns
        .last()
        .and_then(|t| t.supporter_response.as_deref())
        .unwrap_or(candidate);
    let lex = &rubric.keyword_lexicons;
    let seeker = context.last_seeker().unwrap_or("");

    let mut fallbacks = Vec::new();
    let mut judged = |d: Dimension, lexicon: &[String]| -> f64 {
        if let Some(j) = judge {
            match j.rate(&judge_prompt(d, context, reply)) {
                Ok(v) => return v,
                Err(e) => {
                    log::warn!("judge failed on {}: {e}; using lexicon scorer", d.as_str());
                    fallbacks.push(d);
                }
            }
        }
        lex.hit_fraction(reply, lexicon)
    };

    let mut guidance = judged(Dimension::Guidance, &lex.guidance);
    let empathy = judged(Dimension::Empathy, &lex.empathy);
    let tone = judged(Dimension::ToneFriendliness, &lex.tone_friendliness);
    if is_directive(reply, lex) {
        guidance = 0.0;
    }
    let per_dimension = DimensionVector {
        guidance,
        empathy,
        semantic_relevance: semantic_relevance(reply, seeker, &lex.domain_keywords),
        interrogative_structure: interrogative_structure(reply),
        conciseness: conciseness(reply),
        diversity: diversity(reply, context),
        tone_friendliness: tone,
    };
    let mut score = QualityScore::from_parts(per_dimension, rubric);
    score.judge_fallbacks = fallbacks;
    score
}
