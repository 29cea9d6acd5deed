//! Crate-wide error type.
//!
//! Dimension mismatches and non-finite values are hard failures everywhere;
//! nothing silently broadcasts or propagates NaN.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid dimension in {context}: {got}")]
    InvalidDimension { context: &'static str, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter in {context}: {message}")]
    InvalidParameter {
        context: &'static str,
        message: String,
    },

    #[error("degenerate (zero) norm in {context}")]
    DegenerateNorm { context: &'static str },

    #[error("no centroids registered in prototype head")]
    EmptyCentroids,

    #[error("class {class} has no examples")]
    ClassWithoutExamples { class: u32 },

    #[error("label {label} out of range (num classes {num_classes})")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("schedule step {step} exceeds total steps {total}")]
    StepOutOfRange { step: u64, total: u64 },

    #[error("evaluation matrix is incomplete: missing entry ({row}, {col})")]
    IncompleteMatrix { row: usize, col: usize },

    #[error("metric undefined: {message}")]
    UndefinedMetric { message: String },

    #[error("enumeration over 2^{dim} directions exceeds the supported limit of 2^{limit}")]
    EnumerationTooLarge { dim: usize, limit: usize },

    #[error("numeric failure during task {task}, batch {batch}: {source}")]
    TrainingFailure {
        task: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing snapshot for task {task}")]
    MissingSnapshot { task: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
