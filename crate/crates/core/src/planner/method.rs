//! Template retrieval: which Socratic method shapes the question.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{classify_with, PlanError};
use crate::backends::{ClassificationRequest, Classifier};
use crate::classify::{argmax_label, Distribution};
use crate::model::{Label, LabelSpace, SocraticMethod, Strategy, TruncatedContext};
use crate::text::{terms, Phrase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodPrediction {
    pub method: SocraticMethod,
    pub distribution: Distribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_trigger: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRule {
    pub method: SocraticMethod,
    pub patterns: Vec<String>,
    /// Lower values are checked first.
    pub priority: i32,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TriggerTableError {
    #[error("invalid trigger table JSON: {0}")]
    Json(String),
    #[error("trigger rule for {0} has no patterns")]
    EmptyPatterns(SocraticMethod),
    #[error("duplicate trigger priority {0}")]
    DuplicatePriority(i32),
}

/// Trigger rules sorted by priority.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerTable {
    rules: Vec<(TriggerRule, Vec<Phrase>)>,
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Default trigger families. Conditionals and explicit contradictions are
/// checked before distortions, hedges and absolutes.
pub fn default_trigger_rules() -> Vec<TriggerRule> {
    vec![
        TriggerRule {
            method: SocraticMethod::CounterfactualReasoning,
            patterns: owned(&[
                "if ... what then", "if ... what", "what if", "what would happen if", "if ... then",
                "suppose", "imagine if", "如果",
            ]),
            priority: 1,
        },
        TriggerRule {
            method: SocraticMethod::Dialectics,
            patterns: owned(&[
                "but earlier i said", "but i also said", "but i just said", "on the other hand",
                "but at the same time", "contradicts", "yet i also", "even though i said", "但是我之前说",
            ]),
            priority: 2,
        },
        TriggerRule {
            method: SocraticMethod::CounterQuestioning,
            patterns: owned(&[
                "everyone hates", "everybody hates", "nobody likes", "nobody cares", "no one cares",
                "ruined forever", "is ruined", "are ruined", "ruin everything", "never get better",
                "i'm worthless", "i am worthless", "i'm a failure", "i am a failure", "total disaster",
                "the worst", "end of the world", "can't do anything right", "nothing ever works",
                "所有人都讨厌", "彻底完了",
            ]),
            priority: 3,
        },
        TriggerRule {
            method: SocraticMethod::Maieutics,
            patterns: owned(&[
                "maybe", "possibly", "perhaps", "might", "not sure", "i'm not sure", "i guess",
                "kind of", "sort of", "unsure", "也许", "可能",
            ]),
            priority: 4,
        },
        TriggerRule {
            method: SocraticMethod::Definition,
            patterns: owned(&[
                "always", "completely", "never", "every time", "totally", "entirely", "all the time",
                "nothing", "everything", "总是", "完全",
            ]),
            priority: 5,
        },
    ]
}

const NEGATORS: &[&str] = &[
    "not", "no", "never", "don't", "dont", "doesn't", "didn't", "isn't", "wasn't", "aren't", "can't", "cannot",
    "won't", "wouldn't", "haven't",
];

const FILLERS: &[&str] = &["really", "even", "actually", "truly", "at", "all"];

const STOPWORDS: &[&str] = &[
    "the", "and", "you", "that", "this", "was", "are", "for", "with", "have", "has", "but", "its", "it's",
    "i'm", "they", "she", "him", "her", "his", "our", "your", "them", "what", "then", "there",
];

/// Finds a content word that occurs both negated and unnegated, e.g.
/// "I love my job ... I don't love it". Returns the negated span.
fn contradiction_span(t: &[String]) -> Option<(usize, usize)> {
    let negated_at = |j: usize| -> bool {
        let mut k = j;
        while k > 0 {
            k -= 1;
            if NEGATORS.contains(&t[k].as_str()) {
                return true;
            }
            if !FILLERS.contains(&t[k].as_str()) {
                return false;
            }
        }
        false
    };
    let content = |w: &str| w.chars().count() >= 3 && !STOPWORDS.contains(&w) && !NEGATORS.contains(&w);
    for (j, w) in t.iter().enumerate() {
        if content(w) && negated_at(j) && t.iter().enumerate().any(|(i, v)| i != j && v == w && !negated_at(i)) {
            let start = (0..j).rev().find(|&k| NEGATORS.contains(&t[k].as_str())).unwrap_or(j);
            return Some((start, j + 1));
        }
    }
    None
}

impl TriggerTable {
    pub fn new(mut rules: Vec<TriggerRule>) -> Result<Self, TriggerTableError> {
        let mut seen = HashSet::new();
        for r in &rules {
            if r.patterns.iter().all(|p| Phrase::new(p).is_empty()) {
                return Err(TriggerTableError::EmptyPatterns(r.method));
            }
            if !seen.insert(r.priority) {
                return Err(TriggerTableError::DuplicatePriority(r.priority));
            }
        }
        rules.sort_by_key(|r| r.priority);
        Ok(TriggerTable {
            rules: rules
                .into_iter()
                .map(|r| {
                    let phrases = r.patterns.iter().map(|p| Phrase::new(p)).filter(|p| !p.is_empty()).collect();
                    (r, phrases)
                })
                .collect(),
        })
    }

    /// Parses the trigger table file format:
    /// `[{"method": str, "patterns": [str], "priority": int}]`.
    pub fn from_json(s: &str) -> Result<Self, TriggerTableError> {
        let rules: Vec<TriggerRule> = serde_json::from_str(s).map_err(|e| TriggerTableError::Json(e.to_string()))?;
        Self::new(rules)
    }

    pub fn to_json(&self) -> String {
        let rules: Vec<&TriggerRule> = self.rules.iter().map(|(r, _)| r).collect();
        serde_json::to_string_pretty(&rules).expect("rules serialize")
    }

    pub fn rules(&self) -> impl Iterator<Item = &TriggerRule> {
        self.rules.iter().map(|(r, _)| r)
    }

    /// First matching rule in priority order, with the matched span.
    pub fn matching(&self, utterance: &str) -> Option<(SocraticMethod, String)> {
        let t = terms(utterance);
        for (rule, phrases) in &self.rules {
            let mut hit = phrases.iter().find_map(|p| p.find(&t));
            if hit.is_none() && rule.method == SocraticMethod::Dialectics {
                hit = contradiction_span(&t);
            }
            if let Some((s, e)) = hit {
                return Some((rule.method, t[s..e].join(" ")));
            }
        }
        None
    }
}

impl Default for TriggerTable {
    fn default() -> Self {
        TriggerTable::new(default_trigger_rules()).expect("default trigger rules are valid")
    }
}

/// Rule baseline over the default trigger table.
pub fn rule_retrieve(current_utterance: &str) -> MethodPrediction {
    rule_retrieve_with(&TriggerTable::default(), current_utterance)
}

pub fn rule_retrieve_with(table: &TriggerTable, current_utterance: &str) -> MethodPrediction {
    let (method, matched_trigger) = match table.matching(current_utterance) {
        Some((m, span)) => (m, Some(span)),
        None => (SocraticMethod::Other, None),
    };
    MethodPrediction {
        method,
        distribution: Distribution::one_hot(LabelSpace::SocraticMethod, method.index()),
        matched_trigger,
    }
}

/// The method-selection prompt card, with the anchored strategy filled in.
pub fn method_prompt_card(strategy: Strategy) -> String {
    format!(
        "Instruction. You are a CBT therapist & dialogue analyst. Judge only the last utterance \
         (its strategy is {strategy}) and output JSON only.\n\
         Five-Step Guide (triggers & goals):\n\
         1. Definition Trigger: absolutes (\"always\", \"completely\");\n   \
         Goal: baseline; Strategy: questioning, feeling reflection.\n\
         2. Elenchus Trigger: cognitive distortions (all-or-nothing, catastrophizing);\n   \
         Goal: core belief; Strategy: questioning, paraphrase.\n\
         3. Maieutics Trigger: uncertainty (\"maybe\", \"possibly\");\n   \
         Goal: alternatives; Strategy: role-play, exploratory prompts.\n\
         4. Dialectics Trigger: contradictory evidence;\n   \
         Goal: cognitive conflict; Strategy: advice, questioning.\n\
         5. Counterfactual Trigger: conditionals (\"If ... what then?\");\n   \
         Goal: reality testing; Strategy: info giving, self-disclosure.\n\
         Priority: use only the last utterance;\n\
         Required JSON:\n\
         {{\"SocraticMethod\":\"Definition Method|Elenchus|Maieutics|Dialectics|Counterfactual Reasoning\"}}"
    )
}

pub fn method_request(context: &TruncatedContext, strategy: Strategy) -> ClassificationRequest {
    ClassificationRequest {
        rendered_context: context.render(),
        current_utterance: context.current_utterance.clone(),
        label_space: LabelSpace::SocraticMethod,
        instruction: method_prompt_card(strategy),
    }
}

/// Queries `backend` for 6 method logits, then softmax and argmax. The
/// strategy only enters through the request instruction.
pub fn retrieve_method(
    context: &TruncatedContext,
    strategy: Strategy,
    backend: &dyn Classifier,
) -> Result<MethodPrediction, PlanError> {
    let distribution = classify_with(backend, &method_request(context, strategy))?;
    Ok(MethodPrediction { method: argmax_label(&distribution), distribution, matched_trigger: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockClassifier;
    use crate::model::truncate_turns;
    use proptest::prelude::*;
    use crate::model::Strategy;

    #[test]
    fn golden_triggers() {
        let cases = [
            ("I always fail completely", SocraticMethod::Definition),
            ("Everyone hates me and my life is ruined forever", SocraticMethod::CounterQuestioning),
            ("Maybe I could possibly change jobs", SocraticMethod::Maieutics),
            ("I love my job, but earlier I said I hate going there", SocraticMethod::Dialectics),
            ("If I quit, what then?", SocraticMethod::CounterfactualReasoning),
            ("The weather is nice", SocraticMethod::Other),
        ];
        for (u, m) in cases {
            assert_eq!(rule_retrieve(u).method, m, "{u}");
        }
    }

    #[test]
    fn matched_span_recorded() {
        let p = rule_retrieve("If I quit, what then?");
        assert_eq!(p.matched_trigger.as_deref(), Some("if i quit what then"));
        assert_eq!(rule_retrieve("I always fail").matched_trigger.as_deref(), Some("always"));
        assert_eq!(rule_retrieve("hello").matched_trigger, None);
    }

    #[test]
    fn negation_contradiction_heuristic() {
        let p = rule_retrieve("I love my family. Honestly I don't love being around them");
        assert_eq!(p.method, SocraticMethod::Dialectics);
        assert_eq!(p.matched_trigger.as_deref(), Some("don't love"));
        assert_eq!(rule_retrieve("I don't like rain").method, SocraticMethod::Other);
    }

    #[test]
    fn priority_resolves_conflicts() {
        // conditional beats absolute and hedge
        assert_eq!(rule_retrieve("If I always fail, maybe what then?").method, SocraticMethod::CounterfactualReasoning);
        // distortion beats hedge
        assert_eq!(rule_retrieve("Maybe everyone hates me").method, SocraticMethod::CounterQuestioning);
        // hedge beats absolute
        assert_eq!(rule_retrieve("maybe I always do this").method, SocraticMethod::Maieutics);
        assert_eq!(rule_retrieve("maybe I should quit").method, SocraticMethod::Maieutics);
    }

    #[test]
    fn table_validation_and_round_trip() {
        assert_eq!(
            TriggerTable::from_json(r#"[{"method":"maieutics","patterns":[],"priority":1}]"#),
            Err(TriggerTableError::EmptyPatterns(SocraticMethod::Maieutics))
        );
        assert_eq!(
            TriggerTable::from_json(
                r#"[{"method":"maieutics","patterns":["a"],"priority":1},{"method":"definition","patterns":["b"],"priority":1}]"#
            ),
            Err(TriggerTableError::DuplicatePriority(1))
        );
        let t = TriggerTable::default();
        assert_eq!(TriggerTable::from_json(&t.to_json()).unwrap(), t);
        let custom = TriggerTable::from_json(r#"[{"method":"dialectics","patterns":["however"],"priority":9}]"#).unwrap();
        assert_eq!(rule_retrieve_with(&custom, "however it went").method, SocraticMethod::Dialectics);
    }

    #[test]
    fn backend_path() {
        let ctx = truncate_turns(&[], "x", 100).unwrap();
        let m = MockClassifier::label("dialectics");
        let p = retrieve_method(&ctx, Strategy::Question, &m).unwrap();
        assert_eq!(p.method, SocraticMethod::Dialectics);
        assert!(m.requests()[0].instruction.contains("its strategy is question"));

        let uniform = MockClassifier::logits(vec![0.3; 6]);
        assert_eq!(retrieve_method(&ctx, Strategy::Question, &uniform).unwrap().method, SocraticMethod::Definition);

        let wrong = MockClassifier::logits(vec![0.0; 10]);
        assert!(matches!(retrieve_method(&ctx, Strategy::Question, &wrong), Err(PlanError::ProtocolViolation(_))));
    }

    #[test]
    fn remote_style_answer() {
        let ctx = truncate_turns(&[], "x", 100).unwrap();
        let m = MockClassifier::answers(vec![Ok(r#"{"SocraticMethod":"Dialectics"}"#.into())]);
        assert_eq!(retrieve_method(&ctx, Strategy::Question, &m).unwrap().method, SocraticMethod::Dialectics);
    }

    proptest! {
        #[test]
        fn rule_retrieve_total_and_deterministic(u in "\\PC{0,80}") {
            let a = rule_retrieve(&u);
            let b = rule_retrieve(&u);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(argmax_label::<SocraticMethod>(&a.distribution), a.method);
        }
    }
}
