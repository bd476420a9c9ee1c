use alloc::vec;
use alloc::vec::Vec;

use super::anchor::QuantileAnchor;
use super::hinge::{hinge, Label};
use super::AadConfig;
use crate::error::{Error, Result};
use crate::linear::{SparseNodeVector, WeightVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub id: usize,
    pub z: SparseNodeVector,
}

/// Instances the analyst has labeled so far, split by answer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub anomalies: Vec<LabeledInstance>,
    pub nominals: Vec<LabeledInstance>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.anomalies.len() + self.nominals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: usize) -> bool {
        self.anomalies.iter().chain(&self.nominals).any(|l| l.id == id)
    }

    pub fn push(&mut self, id: usize, z: SparseNodeVector, label: Label) {
        let entry = LabeledInstance { id, z };
        match label {
            Label::Anomaly => self.anomalies.push(entry),
            Label::Nominal => self.nominals.push(entry),
        }
    }
}

fn check_dims(w: &WeightVector, labeled: &LabeledSet, anchor: &QuantileAnchor) -> Result<()> {
    if labeled.is_empty() {
        return Err(Error::NoFeedback);
    }
    let m = w.len();
    let vectors = labeled
        .anomalies
        .iter()
        .chain(&labeled.nominals)
        .map(|l| &l.z)
        .chain(core::iter::once(&anchor.vector));
    for z in vectors {
        if z.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: z.dim(),
            });
        }
    }
    Ok(())
}

/// Objective value, optionally accumulating a subgradient into `grad`
/// (which must be zeroed and of length `m`).
///
/// Five terms: anomaly and nominal hinges against the fixed anchor score
/// `q̂_τ`, the same two hinges against the moving threshold `z_τ · w`
/// (weighted by `c_xi`), and `‖w − w_p‖²`. Terms over an empty labeled set
/// contribute nothing.
pub(crate) fn evaluate(
    w: &[f64],
    labeled: &LabeledSet,
    anchor: &QuantileAnchor,
    cfg: &AadConfig,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let q_hat = anchor.score;
    let moving = anchor.vector.dot_dense(w);
    let mut total = 0.0;

    let groups = [
        (&labeled.anomalies, Label::Anomaly, cfg.c_a),
        (&labeled.nominals, Label::Nominal, 1.0),
    ];
    for (set, label, weight) in groups {
        if set.is_empty() {
            continue;
        }
        let fixed_scale = weight / set.len() as f64;
        let moving_scale = cfg.c_xi / set.len() as f64;
        // d/ds of the hinge is −1 for an active anomaly, +1 for an active
        // nominal; at the kink the inactive side (0) is used.
        let sign = if label.is_anomaly() { -1.0 } else { 1.0 };
        for item in set.iter() {
            let s = item.z.dot_dense(w);
            let fixed = hinge(q_hat, s, label);
            let against_moving = hinge(moving, s, label);
            total += fixed_scale * fixed + moving_scale * against_moving;
            if let Some(g) = grad.as_deref_mut() {
                if fixed > 0.0 {
                    item.z.add_scaled_to(g, sign * fixed_scale);
                }
                if against_moving > 0.0 {
                    item.z.add_scaled_to(g, sign * moving_scale);
                    anchor.vector.add_scaled_to(g, -sign * moving_scale);
                }
            }
        }
    }

    let prior = prior_value(w.len());
    let mut reg = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        let d = wi - prior;
        reg += d * d;
        if let Some(g) = grad.as_deref_mut() {
            g[i] += 2.0 * d;
        }
    }
    total + reg
}

pub(crate) fn prior_value(m: usize) -> f64 {
    1.0 / libm::sqrt(m as f64)
}

/// Value of the feedback objective at `w`.
pub fn objective(
    w: &WeightVector,
    labeled: &LabeledSet,
    anchor: &QuantileAnchor,
    cfg: &AadConfig,
) -> Result<f64> {
    check_dims(w, labeled, anchor)?;
    Ok(evaluate(w.as_slice(), labeled, anchor, cfg, None))
}

/// A subgradient of [`objective`] at `w`, dense over all `m` nodes.
pub fn objective_gradient(
    w: &WeightVector,
    labeled: &LabeledSet,
    anchor: &QuantileAnchor,
    cfg: &AadConfig,
) -> Result<Vec<f64>> {
    check_dims(w, labeled, anchor)?;
    let mut grad = vec![0.0; w.len()];
    evaluate(w.as_slice(), labeled, anchor, cfg, Some(&mut grad));
    Ok(grad)
}
