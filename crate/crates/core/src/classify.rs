//! Logits to label: softmax normalization and canonical argmax.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Label, LabelSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("logit {index} is not finite")]
    NonFiniteLogit { index: usize },
    #[error("empty logit vector")]
    Empty,
    #[error("expected {expected} logits for {space}, got {got}")]
    Arity { space: LabelSpace, expected: usize, got: usize },
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, ClassifyError> {
    if logits.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if let Some(index) = logits.iter().position(|z| !z.is_finite()) {
        return Err(ClassifyError::NonFiniteLogit { index });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Output of one classification step over a label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub label_space: LabelSpace,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl Distribution {
    pub fn from_logits(label_space: LabelSpace, logits: Vec<f64>) -> Result<Self, ClassifyError> {
        if logits.len() != label_space.len() {
            return Err(ClassifyError::Arity {
                space: label_space,
                expected: label_space.len(),
                got: logits.len(),
            });
        }
        let probabilities = softmax(&logits)?;
        Ok(Distribution { label_space, logits, probabilities })
    }

    /// Logits 1 at `index`, 0 elsewhere. Used by rule and forced-choice
    /// backends.
    pub fn one_hot(label_space: LabelSpace, index: usize) -> Self {
        let mut logits = vec![0.0; label_space.len()];
        logits[index] = 1.0;
        Self::from_logits(label_space, logits).expect("one-hot logits are valid")
    }

    pub fn argmax(&self) -> usize {
        argmax_index(&self.probabilities)
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.label_space.len();
        if self.logits.len() != n || self.probabilities.len() != n {
            return Err(format!("{} distribution must have {n} entries", self.label_space));
        }
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("probability outside [0, 1]".into());
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("probabilities sum to {sum}"));
        }
        Ok(())
    }
}

/// Label of the maximal probability, ties broken by lowest canonical index.
pub fn argmax_label<L: Label>(distribution: &Distribution) -> L {
    debug_assert_eq!(distribution.label_space, L::SPACE);
    L::from_index(distribution.argmax()).expect("distribution arity matches label space")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SocraticMethod, Strategy};
    use proptest::prelude::*;

    #[test]
    fn uniform_softmax() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ln2_closed_form() {
        for c in [-50.0, 0.0, 3.5, 700.0] {
            let p = softmax(&[c, c + 2f64.ln()]).unwrap();
            assert!((p[0] - 1.0 / 3.0).abs() < 1e-12, "{p:?}");
            assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert_eq!(softmax(&[0.0, f64::NAN]), Err(ClassifyError::NonFiniteLogit { index: 1 }));
        assert_eq!(softmax(&[f64::INFINITY]), Err(ClassifyError::NonFiniteLogit { index: 0 }));
        assert_eq!(softmax(&[]), Err(ClassifyError::Empty));
    }

    #[test]
    fn argmax_and_ties() {
        let mut z = vec![0.0; 10];
        z[0] = 3.0;
        let d = Distribution::from_logits(LabelSpace::Strategy, z).unwrap();
        assert_eq!(argmax_label::<Strategy>(&d), Strategy::Question);
        let d = Distribution::from_logits(LabelSpace::Strategy, vec![0.0; 10]).unwrap();
        assert_eq!(argmax_label::<Strategy>(&d), Strategy::Question);
        let d = Distribution::from_logits(LabelSpace::SocraticMethod, vec![1.0; 6]).unwrap();
        assert_eq!(argmax_label::<SocraticMethod>(&d), SocraticMethod::Definition);
    }

    #[test]
    fn arity_checked() {
        assert!(matches!(
            Distribution::from_logits(LabelSpace::Strategy, vec![0.0; 9]),
            Err(ClassifyError::Arity { expected: 10, got: 9, .. })
        ));
    }

    proptest! {
        #[test]
        fn normalized_order_preserving_shift_invariant(
            z in prop::collection::vec(-50.0f64..50.0, 1..12),
            c in -500.0f64..500.0,
        ) {
            let p = softmax(&z).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for i in 0..z.len() {
                prop_assert!((0.0..=1.0).contains(&p[i]));
                for j in 0..z.len() {
                    if z[i] > z[j] {
                        prop_assert!(p[i] >= p[j]);
                    }
                }
            }
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            prop_assert_eq!(argmax_index(&p), argmax_index(&q));
        }
    }
}
