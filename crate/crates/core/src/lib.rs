//! Isolation forest expressed as a linear model over tree nodes, plus the
//! active anomaly discovery (AAD) loop that re-weights those nodes from
//! analyst labels.
//!
//! Every instance is mapped to a sparse vector `z` with one entry per tree
//! node it traverses. The entry carries the node's detector score (−1 for
//! every node under the isolation-forest scheme), so with uniform weights
//! `z · w` reproduces the isolation-forest ranking exactly. Feedback then
//! moves `w` away from uniform.
//!
//! The crate is `no_std` and only needs `alloc`. Dataset IO, file formats and
//! the service live in the `ifaad` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod aad;
mod error;
pub mod forest;
pub mod linear;

pub use aad::{
    compute_quantile_anchor, hinge_loss, next_query, objective, objective_gradient,
    run_feedback_loop, update_weights, AadConfig, FeedbackLoop, FeedbackState, Label,
    LabeledInstance, LabeledSet, LoopOutcome, QuantileAnchor, RoundReport, WeightUpdate,
};
pub use error::{Error, Result};
pub use forest::{
    baseline_rank, build_forest, build_tree, Forest, ForestParams, Instance, Node, NodeKind, Tree,
    WeightScheme,
};
pub use linear::{score, SparseNodeVector, WeightVector};
