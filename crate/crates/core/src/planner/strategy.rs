//! Strategy anchoring: which kind of support the next turn provides.

use serde::{Deserialize, Serialize};

use super::{classify_with, PlanError};
use crate::backends::{ClassificationRequest, Classifier};
use crate::classify::{argmax_label, Distribution};
use crate::model::{Label, LabelSpace, Provenance, Strategy, TruncatedContext};
use crate::text::{terms, Phrase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyPrediction {
    pub strategy: Strategy,
    pub distribution: Distribution,
    pub backend_tag: Provenance,
}

/// One step of the keyword cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRule {
    pub strategy: Strategy,
    pub patterns: Vec<String>,
}

/// Ordered keyword cascade; the first rule with a hit decides. No hit falls
/// back to `question`, the majority label of annotated counseling data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyRules {
    pub rules: Vec<StrategyRule>,
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for StrategyRules {
    fn default() -> Self {
        StrategyRules {
            rules: vec![
                StrategyRule {
                    strategy: Strategy::AffirmationAndReassurance,
                    patterns: owned(&[
                        "thank you", "thanks", "thank u", "grateful", "appreciate", "goodbye", "bye",
                        "see you", "that helps", "that helped", "谢谢", "感谢", "再见",
                    ]),
                },
                StrategyRule {
                    strategy: Strategy::ProvidingSuggestions,
                    patterns: owned(&[
                        "what should i do", "what do i do", "what can i do", "should i", "any advice",
                        "give me advice", "can you suggest", "any suggestions", "how can i", "how do i",
                        "what would you recommend", "怎么办", "该怎么做",
                    ]),
                },
                StrategyRule {
                    strategy: Strategy::Information,
                    patterns: owned(&[
                        "what is", "what are", "what's", "how does", "how do ... work", "is it normal",
                        "can you explain", "tell me about", "what causes", "是什么",
                    ]),
                },
                StrategyRule {
                    strategy: Strategy::ReflectionOfFeelings,
                    patterns: owned(&[
                        "i feel", "i'm feeling", "i am feeling", "i felt", "makes me feel", "i've been feeling",
                        "i have been feeling", "我觉得", "我感到", "我感觉",
                    ]),
                },
            ],
        }
    }
}

impl StrategyRules {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// The strategy for `utterance` and the matched pattern, if any.
    pub fn decide(&self, utterance: &str) -> (Strategy, Option<String>) {
        let t = terms(utterance);
        for rule in &self.rules {
            if let Some(p) = rule.patterns.iter().map(|p| Phrase::new(p)).find(|p| p.matches(&t)) {
                return (rule.strategy, Some(p.source().to_string()));
            }
        }
        (Strategy::Question, None)
    }
}

/// Instruction sent with strategy classification requests.
pub fn strategy_instruction() -> String {
    let labels = Strategy::labels().join(" | ");
    format!(
        "You are a CBT therapist and dialogue analyst. Given the dialogue below, choose the supportive \
         strategy the counselor should use in the next turn. Output JSON only:\n{{\"Strategy\":\"{labels}\"}}"
    )
}

pub fn strategy_request(context: &TruncatedContext) -> ClassificationRequest {
    ClassificationRequest {
        rendered_context: context.render(),
        current_utterance: context.current_utterance.clone(),
        label_space: LabelSpace::Strategy,
        instruction: strategy_instruction(),
    }
}

/// Queries `backend` for 10 strategy logits, then softmax and argmax.
pub fn anchor_strategy(
    context: &TruncatedContext,
    backend: &dyn Classifier,
) -> Result<StrategyPrediction, PlanError> {
    let distribution = classify_with(backend, &strategy_request(context))?;
    Ok(StrategyPrediction {
        strategy: argmax_label(&distribution),
        distribution,
        backend_tag: backend.provenance(),
    })
}

/// Deterministic baseline over the default keyword cascade.
pub fn rule_anchor(context: &TruncatedContext) -> StrategyPrediction {
    rule_anchor_with(&StrategyRules::default(), context)
}

pub fn rule_anchor_with(rules: &StrategyRules, context: &TruncatedContext) -> StrategyPrediction {
    let (strategy, _) = rules.decide(&context.current_utterance);
    StrategyPrediction {
        strategy,
        distribution: Distribution::one_hot(LabelSpace::Strategy, strategy.index()),
        backend_tag: Provenance::Rule,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, MockClassifier};
    use crate::model::truncate_turns;
    use proptest::prelude::*;
    use crate::model::Strategy;

    fn ctx(u: &str) -> TruncatedContext {
        truncate_turns(&[], u, 3072).unwrap()
    }

    #[test]
    fn scripted_mock_argmax() {
        let mut z = vec![0.0; 10];
        z[Strategy::ProvidingSuggestions.index()] = 4.0;
        let m = MockClassifier::logits(z);
        let p = anchor_strategy(&ctx("help"), &m).unwrap();
        assert_eq!(p.strategy, Strategy::ProvidingSuggestions);
        assert_eq!(p.backend_tag, Provenance::Mock);
        assert_eq!(m.requests()[0].label_space, LabelSpace::Strategy);
    }

    #[test]
    fn wrong_arity_is_protocol_violation() {
        let m = MockClassifier::logits(vec![0.0; 9]);
        assert!(matches!(anchor_strategy(&ctx("x"), &m), Err(PlanError::ProtocolViolation(_))));
    }

    #[test]
    fn backend_failure_is_propagated() {
        let m = MockClassifier::answers(vec![Err(BackendError::Timeout)]);
        assert!(matches!(anchor_strategy(&ctx("x"), &m), Err(PlanError::Backend(BackendError::Timeout))));
    }

    #[test]
    fn rule_table() {
        let s = |u| rule_anchor(&ctx(u)).strategy;
        assert_eq!(s("Thank you, this really helped"), Strategy::AffirmationAndReassurance);
        assert_eq!(s("What should I do about my boss?"), Strategy::ProvidingSuggestions);
        assert_eq!(s("What is a panic attack?"), Strategy::Information);
        assert_eq!(s("I feel so alone lately"), Strategy::ReflectionOfFeelings);
        assert_eq!(s("My exam is tomorrow"), Strategy::Question);
        assert_eq!(s("I always fail completely"), Strategy::Question);
        let p = rule_anchor(&ctx("hmm"));
        assert_eq!(p.distribution.logits[0], 1.0);
        assert_eq!(p.distribution.logits.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn rules_load_from_json() {
        let r = StrategyRules::from_json(r#"[{"strategy":"role_play","patterns":["pretend"]}]"#).unwrap();
        assert_eq!(r.decide("let's pretend").0, Strategy::RolePlay);
        assert_eq!(r.decide("thank you").0, Strategy::Question);
    }

    proptest! {
        #[test]
        fn rule_anchor_is_total(u in "\\PC{1,80}") {
            let p = rule_anchor(&ctx(&u));
            prop_assert!(Strategy::ALL.contains(&p.strategy));
            prop_assert_eq!(p.distribution.logits.len(), 10);
            prop_assert_eq!(argmax_label::<Strategy>(&p.distribution), p.strategy);
        }
    }
}
