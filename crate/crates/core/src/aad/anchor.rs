use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forest::descending_then_id;
use crate::linear::{SparseNodeVector, WeightVector};

/// The instance at the `τ` quantile of the descending score ranking, frozen
/// for one optimization round.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileAnchor {
    pub tau: f64,
    pub id: usize,
    pub vector: SparseNodeVector,
    /// Score of `vector` under the weights the ranking was computed with.
    pub score: f64,
}

pub(crate) fn check_vectors(all_z: &[SparseNodeVector], w: &WeightVector) -> Result<()> {
    if all_z.is_empty() {
        return Err(Error::EmptyList);
    }
    if let Some(z) = all_z.iter().find(|z| z.dim() != w.len()) {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: z.dim(),
        });
    }
    Ok(())
}

/// 1-based rank `max(1, ⌈τ·n⌉)`. The small slack keeps products such as
/// `0.03 · 100` from rounding up past an exact integer.
pub(crate) fn quantile_rank(tau: f64, n: usize) -> usize {
    let x = tau * n as f64;
    let rank = libm::ceil(x - 1e-9 * x.max(1.0)) as usize;
    rank.clamp(1, n)
}

/// Ranks every instance (index = id) by descending `z · w`, ties by
/// ascending id, and returns the one at rank `max(1, ⌈τ·n⌉)`.
pub fn compute_quantile_anchor(
    all_z: &[SparseNodeVector],
    w: &WeightVector,
    tau: f64,
) -> Result<QuantileAnchor> {
    check_vectors(all_z, w)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter("tau must lie in (0, 1)"));
    }
    let mut scored: Vec<(f64, usize)> = all_z
        .iter()
        .enumerate()
        .map(|(id, z)| (z.dot_dense(w.as_slice()), id))
        .collect();
    let k = quantile_rank(tau, scored.len()) - 1;
    let (_, &mut (score, id), _) = scored.select_nth_unstable_by(k, |a, b| descending_then_id(*a, *b));
    Ok(QuantileAnchor {
        tau,
        id,
        vector: all_z[id].clone(),
        score,
    })
}

pub(crate) fn best_unlabeled(
    all_z: &[SparseNodeVector],
    w: &WeightVector,
    is_labeled: impl Fn(usize) -> bool,
) -> Result<usize> {
    all_z
        .iter()
        .enumerate()
        .filter(|(id, _)| !is_labeled(*id))
        .map(|(id, z)| (z.dot_dense(w.as_slice()), id))
        .min_by(|a, b| descending_then_id(*a, *b))
        .map(|(_, id)| id)
        .ok_or(Error::AllLabeled)
}

/// Highest-scoring instance not yet labeled; ties go to the lower id.
pub fn next_query(
    all_z: &[SparseNodeVector],
    w: &WeightVector,
    already_labeled: &BTreeSet<usize>,
) -> Result<usize> {
    check_vectors(all_z, w)?;
    best_unlabeled(all_z, w, |id| already_labeled.contains(&id))
}
