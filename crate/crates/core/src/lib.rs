//! Stochastic gradient methods for risks with an unknown nuisance component.
//!
//! The crate covers plain SGD with a plugged-in nuisance estimate, orthogonalized SGD
//! driven by a Neyman-orthogonal gradient oracle, averaged SGD, and an interleaved
//! driver that refreshes the nuisance from a second stream between target blocks.
//! Everything is generic over the scalar type; `f64` aliases live at the crate root.

// `!(x > 0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numkit;
pub mod nuisance;
pub mod optimize;
pub mod ortho;
pub mod problems;
pub mod scalar;
pub mod simdata;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mat64 = numkit::Mat<f64>;
pub type Sample64 = problems::Sample<f64>;
pub type NuisanceFn64 = problems::NuisanceFn<f64>;
pub type GradOracle64 = problems::GradOracle<f64>;
pub type Dgp64 = simdata::Dgp<f64>;
pub type OrthoOperator64 = ortho::OrthoOperator<f64>;
pub type NoOracle64 = ortho::NoOracle<f64>;
pub type Trajectory64 = optimize::Trajectory<f64>;
