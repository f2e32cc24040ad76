use thiserror::Error;

use crate::lie::Kind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kind {found}: expected {expected}")]
    InvalidKind { found: Kind, expected: &'static str },

    #[error("kind mismatch: {0} vs {1}")]
    KindMismatch(Kind, Kind),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("corrupt element {index}: quaternion norm deviates from 1 by {deviation:e}")]
    CorruptElement { index: usize, deviation: f64 },

    #[error("incompatible shapes {0:?} and {1:?}")]
    Shape(Vec<usize>, Vec<usize>),

    #[error("length mismatch: expected {expected}, got {found}")]
    Length { expected: usize, found: usize },

    #[error("non-finite function output at probe {probe}")]
    Evaluation { probe: usize },

    #[error("non-finite residual for item {item}")]
    Residual { item: usize },

    #[error("analytic Jacobian disagrees with central differences: relative error {relative:e}")]
    JacobianMismatch { relative: f64 },

    #[error("batched contract violated: item {item} depends on another item's parameters")]
    ContractViolation { item: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("pcg did not converge: residual norm {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("corrector failure: kernel derivative {0} is not positive")]
    Corrector(f64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("graph error: {0}")]
    Graph(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
