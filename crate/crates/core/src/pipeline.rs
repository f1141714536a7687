//! Plan → compose → generate → constrain, for one seeker utterance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Generator};
use crate::generator::{
    compose_baseline, compose_sequence, enforce_constraints, generate_response, ConstraintStatus, DecodingParams,
    ValidatedResponse, DEFAULT_MAX_RETRIES,
};
use crate::model::{TruncatedContext, Turn, DEFAULT_BUDGET_UNITS};
use crate::planner::{PlanError, Planner};

/// Whether planning directives condition generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[default]
    Planned,
    /// Generation without planning directives. The plan is still computed and
    /// recorded.
    Baseline,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("generation failed: {0}")]
    Backend(#[from] BackendError),
}

#[derive(Clone)]
pub struct Pipeline {
    pub planner: Planner,
    pub generator: Arc<dyn Generator>,
    pub params: DecodingParams,
    pub budget_units: usize,
    pub max_retries: u32,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("planner", &self.planner)
            .field("params", &self.params)
            .field("budget_units", &self.budget_units)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl Pipeline {
    pub fn new(planner: Planner, generator: Arc<dyn Generator>) -> Self {
        Pipeline {
            planner,
            generator,
            params: DecodingParams::default(),
            budget_units: DEFAULT_BUDGET_UNITS,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn respond(
        &self,
        history: &[Turn],
        utterance: &str,
        condition: Condition,
    ) -> Result<(TruncatedContext, ValidatedResponse), PipelineError> {
        let (ctx, signal) = self.planner.plan_turn(history, utterance, self.budget_units)?;
        let generator = self.generator.as_ref();
        match condition {
            Condition::Planned => {
                let prompt = compose_sequence(&signal, &ctx);
                let first = generate_response(&prompt, generator, &self.params)?;
                let response = enforce_constraints(
                    first,
                    &signal,
                    || generate_response(&prompt, generator, &self.params),
                    self.max_retries,
                );
                Ok((ctx, response))
            }
            Condition::Baseline => {
                let text = generate_response(&compose_baseline(&ctx), generator, &self.params)?;
                let response =
                    ValidatedResponse { text, signal, attempts: 1, constraint_status: ConstraintStatus::Unconstrained };
                Ok((ctx, response))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockGenerator;
    use crate::model::SocraticMethod;

    #[test]
    fn echo_pipeline_falls_back_to_question() {
        let g = Arc::new(MockGenerator::echo_utterance());
        let p = Pipeline::new(Planner::rule(), g.clone());
        let (_, r) = p.respond(&[], "maybe I should quit", Condition::Planned).unwrap();
        assert_eq!(r.signal.method, SocraticMethod::Maieutics);
        assert_eq!(r.constraint_status, ConstraintStatus::Fallback);
        assert_eq!(r.attempts, 3);
        assert_eq!(g.calls(), 3);
        assert!(r.text.starts_with("maybe I should quit"));
    }

    #[test]
    fn baseline_skips_directives_and_constraint() {
        let g = Arc::new(MockGenerator::echo());
        let p = Pipeline::new(Planner::rule(), g.clone());
        let (_, r) = p.respond(&[], "hello there", Condition::Baseline).unwrap();
        assert_eq!(r.constraint_status, ConstraintStatus::Unconstrained);
        assert!(!g.prompts()[0].contains("[Strategy]"));
    }

    #[test]
    fn generator_failure_propagates() {
        let g = Arc::new(MockGenerator::sequence(vec![Err(BackendError::Timeout)]));
        let p = Pipeline::new(Planner::rule(), g);
        assert_eq!(p.respond(&[], "hi", Condition::Planned).unwrap_err(), PipelineError::Backend(BackendError::Timeout));
    }
}
