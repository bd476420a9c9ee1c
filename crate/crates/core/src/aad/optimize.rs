use alloc::vec;
use alloc::vec::Vec;

use super::anchor::QuantileAnchor;
use super::feedback::FeedbackState;
use super::objective::evaluate;
use super::AadConfig;
use crate::error::{Error, Result};
use crate::linear::WeightVector;

/// Step halvings tried before a descent step is given up.
const MAX_HALVINGS: usize = 60;

/// Result of one weight-learning round.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightUpdate {
    /// Unit-norm weights `w^(t)`.
    pub weights: WeightVector,
    /// Objective at the start point followed by its value after every
    /// accepted step (before normalization). Non-increasing.
    pub objective_trace: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
}

/// Subgradient descent on the feedback objective, warm-started from the
/// state's current weights, with a halving line search that only accepts
/// non-increasing steps. The result is normalized to unit length.
pub fn update_weights(
    state: &FeedbackState,
    anchor: &QuantileAnchor,
    cfg: &AadConfig,
) -> Result<WeightUpdate> {
    cfg.validate()?;
    let labeled = &state.labeled;
    // Validates dimensions and the presence of labels.
    let start = super::objective(&state.weights, labeled, anchor, cfg)?;
    let m = state.weights.len();
    let diagnostics = |step: usize, value: f64, w: &[f64]| Error::NonFiniteObjective {
        step,
        value,
        weight_norm: libm::sqrt(w.iter().map(|v| v * v).sum()),
        labels: labeled.len(),
    };

    let mut w = state.weights.as_slice().to_vec();
    if !start.is_finite() {
        return Err(diagnostics(0, start, &w));
    }
    let mut grad = vec![0.0; m];
    let mut candidate = vec![0.0; m];
    let mut current = start;
    let mut trace = vec![start];
    let mut converged = false;

    for step in 0..cfg.max_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        evaluate(&w, labeled, anchor, cfg, Some(&mut grad));
        if grad.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }

        let mut eta = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for ((c, &wi), &gi) in candidate.iter_mut().zip(&w).zip(&grad) {
                *c = wi - eta * gi;
            }
            let value = evaluate(&candidate, labeled, anchor, cfg, None);
            if value.is_finite() && value <= current {
                accepted = Some(value);
                break;
            }
            if value.is_nan() {
                return Err(diagnostics(step + 1, value, &candidate));
            }
            eta *= 0.5;
        }
        let Some(value) = accepted else {
            converged = true;
            break;
        };

        core::mem::swap(&mut w, &mut candidate);
        let decrease = current - value;
        current = value;
        trace.push(value);
        if current == 0.0 || decrease <= cfg.convergence_tol * trace[trace.len() - 2].abs() {
            converged = true;
            break;
        }
    }

    let weights = WeightVector::from_vec_unchecked(w).normalized()?;
    Ok(WeightUpdate {
        weights,
        steps: trace.len() - 1,
        objective_trace: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aad::{Label, LabeledSet};
    use crate::linear::SparseNodeVector;

    fn state_with(labeled: LabeledSet, m: usize) -> FeedbackState {
        FeedbackState {
            weights: WeightVector::uniform(m),
            labeled,
            iteration: 1,
            query_history: Vec::new(),
        }
    }

    #[test]
    fn satisfied_margins_leave_prior_unchanged() {
        let mut labeled = LabeledSet::default();
        labeled.push(0, SparseNodeVector::new(vec![(0, 1.0), (1, 1.0)], 2).unwrap(), Label::Anomaly);
        let anchor = QuantileAnchor {
            tau: 0.03,
            id: 1,
            vector: SparseNodeVector::empty(2),
            score: 0.0,
        };
        let state = state_with(labeled, 2);
        let update = update_weights(&state, &anchor, &AadConfig::default()).unwrap();
        assert_eq!(update.steps, 0);
        let prior = WeightVector::uniform(2);
        for (a, b) in update.weights.as_slice().iter().zip(prior.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn toy_descent_does_not_increase_objective() {
        let r = 1.0 / 2f64.sqrt();
        let mut labeled = LabeledSet::default();
        labeled.push(4, SparseNodeVector::new(vec![(0, 1.0)], 2).unwrap(), Label::Anomaly);
        let anchor = QuantileAnchor {
            tau: 0.03,
            id: 9,
            vector: SparseNodeVector::new(vec![(0, 1.0), (1, 0.2 / r)], 2).unwrap(),
            score: r + 0.5,
        };
        let state = state_with(labeled, 2);
        let update = update_weights(&state, &anchor, &AadConfig::default()).unwrap();
        let trace = &update.objective_trace;
        assert!(trace.len() > 1);
        assert!(trace.windows(2).all(|p| p[1] <= p[0]));
        assert!(trace.last().unwrap() < &trace[0]);
        assert!((update.weights.norm() - 1.0).abs() < 1e-12);
        // The anomaly's own node gains weight relative to the other.
        let w = update.weights.as_slice();
        assert!(w[0] > w[1]);
    }

    #[test]
    fn empty_feedback_is_rejected() {
        let state = state_with(LabeledSet::default(), 2);
        let anchor = QuantileAnchor {
            tau: 0.03,
            id: 0,
            vector: SparseNodeVector::empty(2),
            score: 0.0,
        };
        assert_eq!(
            update_weights(&state, &anchor, &AadConfig::default()),
            Err(Error::NoFeedback)
        );
    }
}
