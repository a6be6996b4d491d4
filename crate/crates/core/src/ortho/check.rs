use serde::{Deserialize, Serialize};

use crate::numkit::{stats::MeanAccumulator, MonteCarlo, Rng};
use crate::problems::{GradientOracle, NuisanceFn};
use crate::simdata::Dgp;
use crate::{Real, Result};

/// Threshold in standard errors below which a mean counts as zero.
const PASS_SE: f64 = 4.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectionResult {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Euclidean norm of `mean`.
    pub magnitude: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthReport {
    pub directions: Vec<DirectionResult>,
    pub mc: MonteCarlo,
}

impl OrthReport {
    pub fn pass(&self) -> bool {
        self.directions.iter().all(|d| d.pass)
    }
}

/// Monte-Carlo test of `E[D_g S(θ, g₀; Z)[h]] = 0` along each direction.
///
/// A direction passes when every coordinate of the mean lies within four standard errors of zero.
pub fn orthogonality_check<T: Real, O: GradientOracle<T> + ?Sized>(
    oracle: &O,
    theta: &[T],
    g0: &NuisanceFn<T>,
    directions: &[NuisanceFn<T>],
    dgp: &Dgp<T>,
    mc: MonteCarlo,
) -> Result<OrthReport> {
    let root = Rng::new(mc.seed).child_named("orthogonality");
    let mut out = Vec::with_capacity(directions.len());
    for (i, h) in directions.iter().enumerate() {
        let mut rng = root.child(i as u64);
        let mut acc = MeanAccumulator::new(oracle.dim());
        for _ in 0..mc.n {
            let z = dgp.draw(&mut rng);
            acc.push(&oracle.gradient_dirderiv(theta, g0, &z, h)?);
        }
        let (mean, se) = (acc.mean().to_vec(), acc.std_err());
        let pass = mean.iter().zip(&se).all(|(m, s)| m.abs() <= PASS_SE * s);
        out.push(DirectionResult {
            magnitude: mean.iter().map(|m| m * m).sum::<f64>().sqrt(),
            mean,
            se,
            pass,
        });
    }
    Ok(OrthReport { directions: out, mc })
}
