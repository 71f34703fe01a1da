//! Dense tensors, a reverse-mode tape, dropout, AdamW and a finite-difference
//! gradient checker. 64-bit throughout.

pub mod adamw;
pub mod dropout;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

use thiserror::Error;

pub use adamw::{AdamWConfig, AdamWState};
pub use dropout::{dropout, dropout_mask};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, Probe};
pub use tape::{Gradients, Index, Tape, Var};
pub use tensor::{softmax_rows, softmax_vec, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("expected length {expected}, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for tape value {index}")]
    NonFiniteGradient { index: usize },
    #[error("dropout probability must be in [0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}
