//! Deterministic randomness and the small dense kernels the other modules share.

mod fd;
mod linalg;
mod rng;
pub mod stats;
pub use stats::MonteCarlo;

pub use fd::{finite_diff_grad, finite_diff_scalar, DEFAULT_STEP};
pub use linalg::{cholesky, cholesky_solve, max_eig_sym, min_eig_sym, solve_spd, sym_eigenvalues, Mat};
pub use rng::{gaussian, Rng};
