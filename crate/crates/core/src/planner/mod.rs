//! Two-stage planning: strategy anchoring followed by template retrieval.
//! Together they produce the [`PlanningSignal`] that conditions generation.

mod method;
mod strategy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use method::{
    default_trigger_rules, method_prompt_card, method_request, retrieve_method, rule_retrieve, rule_retrieve_with,
    MethodPrediction, TriggerRule, TriggerTable, TriggerTableError,
};
pub use strategy::{
    anchor_strategy, rule_anchor, rule_anchor_with, strategy_instruction, strategy_request, StrategyPrediction,
    StrategyRule, StrategyRules,
};

use crate::backends::{one_hot_logits, BackendError, ClassificationRequest, Classifier};
use crate::classify::{argmax_label, ClassifyError, Distribution};
use crate::model::{
    truncate_turns, Label, LabelSpace, ModelError, Provenance, SocraticMethod, Strategy, TruncatedContext, Turn,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Runs one classification call and checks the returned logits.
pub(crate) fn classify_with(
    backend: &dyn Classifier,
    request: &ClassificationRequest,
) -> Result<Distribution, PlanError> {
    let logits = backend.classify(request)?;
    Distribution::from_logits(request.label_space, logits).map_err(|e| match e {
        ClassifyError::Arity { .. } | ClassifyError::NonFiniteLogit { .. } | ClassifyError::Empty => {
            PlanError::ProtocolViolation(e.to_string())
        }
    })
}

/// The (strategy, method) plan for one supporter turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningSignal {
    pub strategy: Strategy,
    pub method: SocraticMethod,
    pub strategy_distribution: Distribution,
    pub method_distribution: Distribution,
    pub planner_provenance: Provenance,
}

impl PlanningSignal {
    pub fn from_predictions(s: StrategyPrediction, m: MethodPrediction, provenance: Provenance) -> Self {
        PlanningSignal {
            strategy: s.strategy,
            method: m.method,
            strategy_distribution: s.distribution,
            method_distribution: m.distribution,
            planner_provenance: provenance,
        }
    }

    /// A signal whose distributions are one-hot at the given labels.
    pub fn fixed(strategy: Strategy, method: SocraticMethod, provenance: Provenance) -> Self {
        PlanningSignal {
            strategy,
            method,
            strategy_distribution: Distribution::one_hot(LabelSpace::Strategy, strategy.index()),
            method_distribution: Distribution::one_hot(LabelSpace::SocraticMethod, method.index()),
            planner_provenance: provenance,
        }
    }

    /// Checks label spaces, distribution invariants and argmax agreement.
    pub fn validate(&self) -> Result<(), String> {
        if self.strategy_distribution.label_space != LabelSpace::Strategy
            || self.method_distribution.label_space != LabelSpace::SocraticMethod
        {
            return Err("distribution label spaces do not match".into());
        }
        self.strategy_distribution.validate()?;
        self.method_distribution.validate()?;
        if argmax_label::<Strategy>(&self.strategy_distribution) != self.strategy {
            return Err(format!("strategy {} is not the argmax of its distribution", self.strategy));
        }
        if argmax_label::<SocraticMethod>(&self.method_distribution) != self.method {
            return Err(format!("method {} is not the argmax of its distribution", self.method));
        }
        Ok(())
    }
}

/// Classification backend driven by the keyword cascade and trigger table.
/// Only the current utterance is consulted.
#[derive(Debug, Clone, Default)]
pub struct RuleClassifier {
    pub strategy_rules: StrategyRules,
    pub triggers: TriggerTable,
}

impl Classifier for RuleClassifier {
    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<f64>, BackendError> {
        let u = &request.current_utterance;
        let index = match request.label_space {
            LabelSpace::Strategy => self.strategy_rules.decide(u).0.index(),
            LabelSpace::SocraticMethod => rule_retrieve_with(&self.triggers, u).method.index(),
        };
        Ok(one_hot_logits(request.label_space, index))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Rule
    }
}

/// Strategy anchoring and template retrieval composed over two backends.
#[derive(Clone)]
pub struct Planner {
    strategy_backend: Arc<dyn Classifier>,
    method_backend: Arc<dyn Classifier>,
}

impl std::fmt::Debug for Planner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Planner")
            .field("strategy", &self.strategy_backend.provenance())
            .field("method", &self.method_backend.provenance())
            .finish()
    }
}

impl Planner {
    pub fn new(strategy_backend: Arc<dyn Classifier>, method_backend: Arc<dyn Classifier>) -> Self {
        Planner { strategy_backend, method_backend }
    }

    /// Both stages on the default rule tables.
    pub fn rule() -> Self {
        let r = Arc::new(RuleClassifier::default());
        Planner::new(r.clone(), r)
    }

    pub fn provenance(&self) -> Provenance {
        self.strategy_backend.provenance().combine(self.method_backend.provenance())
    }

    pub fn plan(&self, context: &TruncatedContext) -> Result<PlanningSignal, PlanError> {
        let s = anchor_strategy(context, self.strategy_backend.as_ref())?;
        let m = retrieve_method(context, s.strategy, self.method_backend.as_ref())?;
        Ok(PlanningSignal::from_predictions(s, m, self.provenance()))
    }

    /// Truncates `history` to `budget_units` and plans for `utterance`.
    pub fn plan_turn(
        &self,
        history: &[Turn],
        utterance: &str,
        budget_units: usize,
    ) -> Result<(TruncatedContext, PlanningSignal), PlanError> {
        let ctx = truncate_turns(history, utterance, budget_units)?;
        let signal = self.plan(&ctx)?;
        Ok((ctx, signal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockClassifier;

    #[test]
    fn rule_planner_end_to_end() {
        let p = Planner::rule();
        let (_, s) = p.plan_turn(&[], "maybe I should quit", 3072).unwrap();
        assert_eq!(s.strategy, Strategy::Question);
        assert_eq!(s.method, SocraticMethod::Maieutics);
        assert_eq!(s.planner_provenance, Provenance::Rule);
        s.validate().unwrap();
    }

    #[test]
    fn mixed_provenance() {
        let p = Planner::new(Arc::new(RuleClassifier::default()), Arc::new(MockClassifier::label("other")));
        assert_eq!(p.provenance(), Provenance::Mock);
        assert_eq!(p.plan_turn(&[], "if so what then", 100).unwrap().1.method, SocraticMethod::Other);
    }

    #[test]
    fn invalid_signal_detected() {
        let mut s = PlanningSignal::fixed(Strategy::Question, SocraticMethod::Other, Provenance::Rule);
        assert!(s.validate().is_ok());
        s.method = SocraticMethod::Definition;
        assert!(s.validate().is_err());
    }

    #[test]
    fn budget_errors_surface() {
        assert!(matches!(
            Planner::rule().plan_turn(&[], "a long utterance", 1),
            Err(PlanError::Model(ModelError::BudgetTooSmall { .. }))
        ));
    }
}
