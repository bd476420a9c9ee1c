//! Weight learning from analyst feedback.
//!
//! Each round ranks every instance under the previous weights, takes the
//! instance at the `τ` quantile as an anchor, and minimizes a hinge-loss
//! objective that pushes labeled anomalies above the anchor score and
//! labeled nominals below it, regularized toward the uniform prior.

mod anchor;
mod feedback;
mod hinge;
mod objective;
mod optimize;

pub use anchor::{compute_quantile_anchor, next_query, QuantileAnchor};
pub use feedback::{run_feedback_loop, FeedbackLoop, FeedbackState, LoopOutcome, RoundReport};
pub use hinge::{hinge_loss, Label};
pub use objective::{objective, objective_gradient, LabeledInstance, LabeledSet};
pub use optimize::{update_weights, WeightUpdate};

use crate::error::{Error, Result};

/// Hyperparameters of the feedback loop and its inner optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AadConfig {
    /// Quantile of the descending score ranking used as the anchor.
    pub tau: f64,
    /// Weight of the anomaly hinge terms.
    pub c_a: f64,
    /// Weight of the terms anchored at the moving threshold `z_τ · w`.
    pub c_xi: f64,
    /// Initial step of each backtracking line search.
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop once the relative objective decrease of a step falls below this.
    pub convergence_tol: f64,
    /// Number of analyst queries `B`.
    pub budget: usize,
}

impl Default for AadConfig {
    fn default() -> Self {
        Self {
            tau: 0.03,
            c_a: 100.0,
            c_xi: 0.001,
            learning_rate: 0.01,
            max_steps: 1000,
            convergence_tol: 1e-6,
            budget: 60,
        }
    }
}

impl AadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter("tau must lie in (0, 1)"));
        }
        if !(self.c_a >= 1.0) || !self.c_a.is_finite() {
            return Err(Error::InvalidParameter("c_a must be at least 1"));
        }
        if !(self.c_xi >= 0.0) || !self.c_xi.is_finite() {
            return Err(Error::InvalidParameter("c_xi must be non-negative"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter("learning_rate must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter("convergence_tol must be positive"));
        }
        Ok(())
    }
}
