use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::anchor::{best_unlabeled, check_vectors, compute_quantile_anchor};
use super::hinge::Label;
use super::objective::LabeledSet;
use super::optimize::update_weights;
use super::AadConfig;
use crate::error::{Error, Result};
use crate::forest::{Forest, Instance};
use crate::linear::{SparseNodeVector, WeightVector};

/// Everything the loop has learned so far.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackState {
    pub weights: WeightVector,
    pub labeled: LabeledSet,
    /// Number of answered queries.
    pub iteration: usize,
    pub query_history: Vec<(usize, Label)>,
}

/// What happened in one feedback iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// 1-based iteration number.
    pub iteration: usize,
    pub instance: usize,
    pub label: Label,
    pub anchor_id: usize,
    pub anchor_score: f64,
    pub objective_trace: Vec<f64>,
    pub steps: usize,
    pub weight_norm: f64,
}

/// Sequential query/label/re-weight driver over a fixed set of node
/// vectors. Instance ids are positions in that set.
#[derive(Debug, Clone)]
pub struct FeedbackLoop {
    vectors: Arc<[SparseNodeVector]>,
    cfg: AadConfig,
    state: FeedbackState,
    labeled_mask: Vec<bool>,
}

impl FeedbackLoop {
    /// Starts a loop with uniform weights.
    pub fn new(vectors: Arc<[SparseNodeVector]>, cfg: AadConfig) -> Result<Self> {
        cfg.validate()?;
        let m = vectors.first().ok_or(Error::EmptyDataset)?.dim();
        let weights = WeightVector::uniform(m);
        check_vectors(&vectors, &weights)?;
        if cfg.budget > vectors.len() {
            return Err(Error::InvalidParameter("budget exceeds dataset size"));
        }
        let labeled_mask = vec![false; vectors.len()];
        Ok(Self {
            vectors,
            cfg,
            state: FeedbackState {
                weights,
                labeled: LabeledSet::default(),
                iteration: 0,
                query_history: Vec::new(),
            },
            labeled_mask,
        })
    }

    /// Rebuilds a loop from a recorded history and the weights current at
    /// the end of it.
    pub fn resume(
        vectors: Arc<[SparseNodeVector]>,
        cfg: AadConfig,
        history: &[(usize, Label)],
        weights: WeightVector,
    ) -> Result<Self> {
        let mut this = Self::new(vectors, cfg)?;
        if weights.len() != this.state.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: this.state.weights.len(),
                found: weights.len(),
            });
        }
        if history.len() > cfg.budget {
            return Err(Error::BudgetExhausted);
        }
        for &(id, label) in history {
            this.check_unlabeled(id)?;
            this.labeled_mask[id] = true;
            this.state.labeled.push(id, this.vectors[id].clone(), label);
            this.state.query_history.push((id, label));
        }
        this.state.iteration = history.len();
        this.state.weights = weights;
        Ok(this)
    }

    pub fn state(&self) -> &FeedbackState {
        &self.state
    }

    pub fn config(&self) -> &AadConfig {
        &self.cfg
    }

    pub fn vectors(&self) -> &Arc<[SparseNodeVector]> {
        &self.vectors
    }

    pub fn is_labeled(&self, id: usize) -> bool {
        self.labeled_mask.get(id).copied().unwrap_or(false)
    }

    pub fn remaining_budget(&self) -> usize {
        self.cfg.budget - self.state.iteration
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining_budget() == 0 || self.state.iteration == self.vectors.len()
    }

    pub fn score_of(&self, id: usize) -> Result<f64> {
        let z = self.vectors.get(id).ok_or(Error::UnknownInstance(id))?;
        Ok(z.dot_dense(self.state.weights.as_slice()))
    }

    /// Scores of all instances under the current weights.
    pub fn scores(&self) -> Vec<f64> {
        let w = self.state.weights.as_slice();
        self.vectors.iter().map(|z| z.dot_dense(w)).collect()
    }

    /// The instance the analyst should see next.
    pub fn next_query(&self) -> Result<usize> {
        if self.remaining_budget() == 0 {
            return Err(Error::BudgetExhausted);
        }
        best_unlabeled(&self.vectors, &self.state.weights, |id| self.labeled_mask[id])
    }

    fn check_unlabeled(&self, id: usize) -> Result<()> {
        if id >= self.vectors.len() {
            return Err(Error::UnknownInstance(id));
        }
        if self.labeled_mask[id] {
            return Err(Error::AlreadyLabeled(id));
        }
        Ok(())
    }

    /// Records the analyst's label for `id` and re-learns the weights. The
    /// quantile anchor is taken from the ranking under the weights in force
    /// before this label.
    pub fn submit(&mut self, id: usize, label: Label) -> Result<RoundReport> {
        if self.remaining_budget() == 0 {
            return Err(Error::BudgetExhausted);
        }
        self.check_unlabeled(id)?;
        let anchor = compute_quantile_anchor(&self.vectors, &self.state.weights, self.cfg.tau)?;

        let mut next = self.state.clone();
        next.labeled.push(id, self.vectors[id].clone(), label);
        next.query_history.push((id, label));
        next.iteration += 1;
        let update = update_weights(&next, &anchor, &self.cfg)?;
        next.weights = update.weights;

        self.labeled_mask[id] = true;
        self.state = next;
        Ok(RoundReport {
            iteration: self.state.iteration,
            instance: id,
            label,
            anchor_id: anchor.id,
            anchor_score: anchor.score,
            objective_trace: update.objective_trace,
            steps: update.steps,
            weight_norm: self.state.weights.norm(),
        })
    }

    /// Queries the top instance, asks `oracle`, and learns from the answer.
    pub fn step(&mut self, oracle: &mut impl FnMut(usize) -> Option<Label>) -> Result<RoundReport> {
        let id = self.next_query()?;
        let label = oracle(id).ok_or(Error::InvalidLabel(id))?;
        self.submit(id, label)
    }
}

/// Final state plus the per-iteration reports of a completed loop.
#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub state: FeedbackState,
    pub rounds: Vec<RoundReport>,
}

impl LoopOutcome {
    /// Cumulative anomalies found after each query.
    pub fn discovery_curve(&self) -> Vec<usize> {
        self.state
            .query_history
            .iter()
            .scan(0, |found, &(_, label)| {
                *found += usize::from(label.is_anomaly());
                Some(*found)
            })
            .collect()
    }
}

/// Runs `cfg.budget` feedback iterations against `oracle`. Instance ids must
/// equal their positions in `data`. `oracle` returns `None` for an instance
/// it cannot label, which aborts the loop.
pub fn run_feedback_loop(
    forest: &Forest,
    data: &[Instance],
    mut oracle: impl FnMut(usize) -> Option<Label>,
    cfg: &AadConfig,
) -> Result<LoopOutcome> {
    if let Some((pos, _)) = data.iter().enumerate().find(|(pos, inst)| inst.id != *pos) {
        return Err(Error::UnknownInstance(pos));
    }
    let vectors: Arc<[SparseNodeVector]> = forest.traverse_all(data)?.into();
    let mut feedback = FeedbackLoop::new(vectors, *cfg)?;
    let mut rounds = Vec::with_capacity(cfg.budget);
    while feedback.remaining_budget() > 0 {
        rounds.push(feedback.step(&mut oracle)?);
    }
    Ok(LoopOutcome {
        state: feedback.state,
        rounds,
    })
}
