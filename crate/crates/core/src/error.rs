//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("jet shape mismatch: ({lhs_vars} vars, order {lhs_order}) vs ({rhs_vars} vars, order {rhs_order})")]
    ShapeMismatch {
        lhs_vars: usize,
        lhs_order: usize,
        rhs_vars: usize,
        rhs_order: usize,
    },

    #[error("jet order too low: need at least {required}, have {available}")]
    OrderTooLow { required: usize, available: usize },

    #[error("unsupported jet shape: {0}")]
    UnsupportedShape(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("domain violation in `{expr}`: {msg}")]
    Domain { expr: String, msg: String },

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("second fundamental form indefinite (not locally strongly convex) at {point:?}")]
    NotConvex { point: Vec<f64> },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
