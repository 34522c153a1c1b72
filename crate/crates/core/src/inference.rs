//! Sigmoid probabilities and threshold-with-fallback label assignment.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Logits;
use crate::objective::Probabilities;

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict_probs(logits: &Logits) -> Probabilities {
    Probabilities(logits.0.mapv(sigmoid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionPolicy {
    #[serde(default = "PredictionPolicy::default_tau")]
    pub tau: f64,
    #[serde(default = "PredictionPolicy::default_fallback")]
    pub fallback: bool,
}

impl PredictionPolicy {
    fn default_tau() -> f64 {
        0.5
    }

    fn default_fallback() -> bool {
        true
    }

    pub fn new(tau: f64, fallback: bool) -> Result<Self> {
        let policy = Self { tau, fallback };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        Ok(())
    }
}

impl Default for PredictionPolicy {
    fn default() -> Self {
        Self {
            tau: 0.5,
            fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub probs: Probabilities,
    pub assigned: Array2<u8>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j)
}

/// Assigns every class with `p >= tau`. A row with no such class gets the
/// single highest-logit class when the fallback is on.
pub fn assign_labels(probs: &Probabilities, logits: &Logits, policy: &PredictionPolicy) -> Result<PredictionSet> {
    policy.validate()?;
    if probs.0.dim() != logits.0.dim() {
        return Err(Error::Contract(format!(
            "probabilities {:?} and logits {:?} differ in shape",
            probs.0.dim(),
            logits.0.dim()
        )));
    }
    let mut assigned = probs.0.mapv(|p| u8::from(p >= policy.tau));
    if policy.fallback {
        for (mut row, z) in assigned.rows_mut().into_iter().zip(logits.0.rows()) {
            if row.iter().all(|&v| v == 0) {
                if let Some(j) = argmax(z.iter().copied()) {
                    row[j] = 1;
                }
            }
        }
    }
    Ok(PredictionSet {
        probs: probs.clone(),
        assigned,
    })
}

/// Probabilities and assignments straight from logits.
pub fn predict(logits: &Logits, policy: &PredictionPolicy) -> Result<PredictionSet> {
    assign_labels(&predict_probs(logits), logits, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn one_row(probs: &[f64], logits: &[f64], policy: PredictionPolicy) -> Vec<u8> {
        let p = Probabilities(Array2::from_shape_vec((1, probs.len()), probs.to_vec()).unwrap());
        let z = Logits(Array2::from_shape_vec((1, logits.len()), logits.to_vec()).unwrap());
        assign_labels(&p, &z, &policy).unwrap().assigned.row(0).to_vec()
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(50.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-50.0) < 1e-21 && sigmoid(-50.0) > 0.0);
        assert!(sigmoid(1000.0) == 1.0 && sigmoid(-1000.0) == 0.0);
        for z in [-30.0, -3.3, -0.1, 0.7, 12.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_rule() {
        let p = [0.7, 0.4, 0.6, 0.2, 0.1];
        let z: Vec<f64> = p.iter().map(|&v| logit(v)).collect();
        assert_eq!(one_row(&p, &z, PredictionPolicy::default()), vec![1, 0, 1, 0, 0]);
    }

    #[test]
    fn fallback_picks_highest_logit() {
        let z = [-1.0, -0.2, -3.0, -0.5, -2.0];
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        assert_eq!(one_row(&p, &z, PredictionPolicy::default()), vec![0, 1, 0, 0, 0]);
        let off = PredictionPolicy::new(0.5, false).unwrap();
        assert_eq!(one_row(&p, &z, off), vec![0; 5]);
    }

    #[test]
    fn threshold_is_inclusive_and_ties_go_low() {
        assert_eq!(one_row(&[0.5, 0.2], &[0.0, logit(0.2)], PredictionPolicy::default()), vec![1, 0]);
        let z = [-1.0, -1.0, -2.0];
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        assert_eq!(one_row(&p, &z, PredictionPolicy::default()), vec![1, 0, 0]);
    }

    #[test]
    fn invalid_policy_and_shapes() {
        assert!(PredictionPolicy::new(0.0, true).is_err());
        assert!(PredictionPolicy::new(1.0, true).is_err());
        let p = Probabilities(array![[0.1, 0.2]]);
        let z = Logits(array![[0.1, 0.2, 0.3]]);
        assert!(matches!(
            assign_labels(&p, &z, &PredictionPolicy::default()),
            Err(Error::Contract(_))
        ));
    }

    proptest! {
        #[test]
        fn fallback_never_leaves_empty_rows(z in prop::collection::vec(-20.0f64..20.0, 1..8)) {
            let logits = Logits(Array2::from_shape_vec((1, z.len()), z.clone()).unwrap());
            let set = predict(&logits, &PredictionPolicy::default()).unwrap();
            prop_assert!(set.assigned.iter().any(|&v| v == 1));
        }

        #[test]
        fn raising_a_logit_never_unassigns(z in prop::collection::vec(-10.0f64..10.0, 2..7), k in 0usize..7, bump in 0.0f64..5.0) {
            let k = k % z.len();
            let before = predict(&Logits(Array2::from_shape_vec((1, z.len()), z.clone()).unwrap()), &PredictionPolicy::default()).unwrap();
            let mut raised = z.clone();
            raised[k] += bump;
            let after = predict(&Logits(Array2::from_shape_vec((1, z.len()), raised).unwrap()), &PredictionPolicy::default()).unwrap();
            if before.assigned[[0, k]] == 1 {
                prop_assert_eq!(after.assigned[[0, k]], 1);
            }
        }

        #[test]
        fn fallback_choice_is_monotone_invariant(z in prop::collection::vec(-10.0f64..10.0, 2..7)) {
            let a = argmax(z.iter().copied());
            let b = argmax(z.iter().map(|&v| sigmoid(v)));
            let c = argmax(z.iter().map(|&v| v.powi(3) + 2.0 * v));
            prop_assert_eq!(a, b);
            prop_assert_eq!(a, c);
        }
    }
}
