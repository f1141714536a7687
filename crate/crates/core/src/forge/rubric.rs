use serde::{Deserialize, Serialize};

use super::ForgeError;
use crate::model::Conversation;
use crate::text::{lexicon_hits, terms};

/// The seven quality dimensions, in rubric order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Guidance,
    Empathy,
    SemanticRelevance,
    InterrogativeStructure,
    Conciseness,
    Diversity,
    ToneFriendliness,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::Guidance,
        Dimension::Empathy,
        Dimension::SemanticRelevance,
        Dimension::InterrogativeStructure,
        Dimension::Conciseness,
        Dimension::Diversity,
        Dimension::ToneFriendliness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Guidance => "guidance",
            Dimension::Empathy => "empathy",
            Dimension::SemanticRelevance => "semantic_relevance",
            Dimension::InterrogativeStructure => "interrogative_structure",
            Dimension::Conciseness => "conciseness",
            Dimension::Diversity => "diversity",
            Dimension::ToneFriendliness => "tone_friendliness",
        }
    }
}

/// One real value per dimension. Serializes as an object in rubric order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DimensionVector {
    pub guidance: f64,
    pub empathy: f64,
    pub semantic_relevance: f64,
    pub interrogative_structure: f64,
    pub conciseness: f64,
    pub diversity: f64,
    pub tone_friendliness: f64,
}

impl DimensionVector {
    pub fn from_array(v: [f64; 7]) -> Self {
        DimensionVector {
            guidance: v[0],
            empathy: v[1],
            semantic_relevance: v[2],
            interrogative_structure: v[3],
            conciseness: v[4],
            diversity: v[5],
            tone_friendliness: v[6],
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.guidance,
            self.empathy,
            self.semantic_relevance,
            self.interrogative_structure,
            self.conciseness,
            self.diversity,
            self.tone_friendliness,
        ]
    }

    pub fn get(&self, d: Dimension) -> f64 {
        self.to_array()[d as usize]
    }

    pub fn set(&mut self, d: Dimension, v: f64) {
        let mut a = self.to_array();
        a[d as usize] = v;
        *self = Self::from_array(a);
    }

    pub fn sum(&self) -> f64 {
        self.to_array().iter().sum()
    }

    pub fn dot(&self, other: &DimensionVector) -> f64 {
        self.to_array().iter().zip(other.to_array()).map(|(a, b)| a * b).sum()
    }
}

pub const DEFAULT_WEIGHTS: [f64; 7] = [0.20, 0.20, 0.15, 0.15, 0.10, 0.10, 0.10];

/// Weight shift for anxiety-related dialogues: empathy gains 0.10,
/// conciseness and tone friendliness give up 0.05 each.
pub const ANXIETY_SHIFT: [f64; 7] = [0.0, 0.10, 0.0, 0.0, -0.05, 0.0, -0.05];

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Configurable term lists behind the deterministic scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lexicons {
    pub guidance: Vec<String>,
    pub empathy: Vec<String>,
    pub tone_friendliness: Vec<String>,
    /// Domain keywords for semantic relevance.
    pub domain_keywords: Vec<String>,
    /// Prescriptive phrases; a hit zeroes guidance.
    pub directive_phrases: Vec<String>,
    /// Markers that flag a dialogue as anxiety-related.
    pub anxiety: Vec<String>,
    /// Hits needed for a lexicon scorer to reach 1.0.
    pub saturation: usize,
}

impl Default for Lexicons {
    fn default() -> Self {
        Lexicons {
            guidance: owned(&[
                "what", "how", "explore", "notice", "consider", "imagine", "evidence", "another way",
                "what might", "what would", "tell me more", "look at", "alternative", "what do you think",
                "make sense of", "怎么看", "为什么",
            ]),
            empathy: owned(&[
                "sounds", "understand", "feel", "feeling", "feelings", "hard", "difficult", "it makes sense",
                "i hear", "that must", "painful", "overwhelming", "you've been", "natural", "理解", "感受",
            ]),
            tone_friendliness: owned(&[
                "gently", "together", "if you'd like", "would you", "could you", "thank you for", "share",
                "i'm here", "it's okay", "please", "curious", "wonder", "you mentioned", "愿意",
            ]),
            domain_keywords: owned(&[
                "anxiety", "anxious", "stress", "worry", "fear", "sad", "depressed", "sleep", "panic",
                "relationship", "work", "family", "thoughts", "feelings", "belief", "failure", "焦虑", "压力",
            ]),
            directive_phrases: owned(&[
                "you should", "you must", "you need to", "try this", "just do", "you have to", "你应该",
            ]),
            anxiety: owned(&[
                "anxiety", "anxious", "panic", "worried", "worry", "worrying", "nervous", "on edge",
                "can't stop thinking", "racing thoughts", "焦虑", "紧张", "担心",
            ]),
            saturation: 2,
        }
    }
}

impl Lexicons {
    /// min(1, distinct lexicon hits / saturation).
    pub fn hit_fraction(&self, text: &str, lexicon: &[String]) -> f64 {
        if lexicon.is_empty() {
            return 0.0;
        }
        let hits = lexicon_hits(&terms(text), lexicon) as f64;
        (hits / self.saturation.max(1) as f64).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringRubric {
    pub weights: DimensionVector,
    #[serde(default)]
    pub keyword_lexicons: Lexicons,
    #[serde(default)]
    pub anxiety_adjusted: bool,
}

impl Default for ScoringRubric {
    fn default() -> Self {
        ScoringRubric {
            weights: DimensionVector::from_array(DEFAULT_WEIGHTS),
            keyword_lexicons: Lexicons::default(),
            anxiety_adjusted: false,
        }
    }
}

impl ScoringRubric {
    pub fn validate(&self) -> Result<(), ForgeError> {
        for (d, w) in Dimension::ALL.iter().zip(self.weights.to_array()) {
            if !w.is_finite() || w < 0.0 {
                return Err(ForgeError::InvalidRubric(format!("weight for {} must be non-negative", d.as_str())));
            }
        }
        let sum = self.weights.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ForgeError::InvalidRubric(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, ForgeError> {
        let r: ScoringRubric = serde_json::from_str(s).map_err(|e| ForgeError::InvalidRubric(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn is_default_weighting(&self) -> bool {
        self.weights
            .to_array()
            .iter()
            .zip(DEFAULT_WEIGHTS)
            .all(|(a, b)| (a - b).abs() <= 1e-12)
    }
}

/// Whether a dialogue is anxiety-related: a metadata value mentions anxiety,
/// or the last seeker utterance hits the anxiety lexicon.
pub fn is_anxiety_related(context: &Conversation, lexicons: &Lexicons) -> bool {
    let tagged = context.metadata.values().any(|v| {
        let v = v.to_lowercase();
        v.contains("anxiety") || v.contains("anxious") || v.contains("焦虑")
    });
    tagged
        || context
            .last_seeker()
            .is_some_and(|u| lexicon_hits(&terms(u), &lexicons.anxiety) > 0)
}

/// Shifts weight toward empathy for anxiety-related dialogues. Applied at
/// most once per rubric.
pub fn adjust_rubric_for_anxiety(rubric: &ScoringRubric, context: &Conversation) -> ScoringRubric {
    if rubric.anxiety_adjusted || !is_anxiety_related(context, &rubric.keyword_lexicons) {
        return rubric.clone();
    }
    if !rubric.is_default_weighting() {
        log::debug!("anxiety shift applied to non-default weights");
    }
    let shifted: Vec<f64> = rubric.weights.to_array().iter().zip(ANXIETY_SHIFT).map(|(w, d)| w + d).collect();
    if shifted.iter().any(|w| *w < 0.0) {
        log::warn!("anxiety shift would make a weight negative; rubric left unchanged");
        return rubric.clone();
    }
    let mut out = rubric.clone();
    out.weights = DimensionVector::from_array(shifted.try_into().expect("7 weights"));
    out.anxiety_adjusted = true;
    out
}
