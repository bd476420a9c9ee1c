use thiserror::Error;

/// Errors raised by forest construction, scoring and weight learning.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite input: instance {instance}, feature {feature}")]
    NonFinite { instance: usize, feature: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("no feedback yet")]
    NoFeedback,
    #[error("empty list")]
    EmptyList,
    #[error("budget exhausted dataset")]
    AllLabeled,
    #[error("budget exhausted")]
    BudgetExhausted,
    #[error("invalid label for instance {0}")]
    InvalidLabel(usize),
    #[error("instance {0} is not in the dataset")]
    UnknownInstance(usize),
    #[error("instance {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("non-finite objective {value} at descent step {step} (weight norm {weight_norm}, {labels} labels)")]
    NonFiniteObjective {
        step: usize,
        value: f64,
        weight_norm: f64,
        labels: usize,
    },
    #[error("weight vector has zero norm")]
    ZeroNorm,
}

pub type Result<T> = core::result::Result<T, Error>;
