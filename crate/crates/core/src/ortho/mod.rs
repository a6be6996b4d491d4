//! Orthogonalizing operators and the Neyman-orthogonalized gradient oracle.

mod check;
mod operator;

pub use check::{orthogonality_check, DirectionResult, OrthReport};
pub use operator::{
    estimate_operator, fit_operator_models, frob_error, operator_bump, plm_true_operator, NoOracle, OperatorDoc, OrthoOperator,
    StreamingOperator,
};
