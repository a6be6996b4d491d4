//! Evaluation metrics and slope estimation.

use nuisance_grad::numkit::{MonteCarlo, Rng};
use nuisance_grad::optimize::Monitor;
use nuisance_grad::problems::{GradOracle, NuisanceFn, Sample};
use nuisance_grad::simdata::Dgp;
use serde::{Deserialize, Serialize};

/// Risk gap `L(θ, g₀) − L(θ⋆, g₀)` on a fixed evaluation sample.
///
/// Every call reuses the same draws, so differences between two `θ` share their noise.
pub struct ExcessRisk {
    oracle: GradOracle<f64>,
    g0: NuisanceFn<f64>,
    eval: Vec<Sample<f64>>,
    base: f64,
}

impl ExcessRisk {
    pub fn new(oracle: GradOracle<f64>, g0: NuisanceFn<f64>, theta_star: &[f64], eval: Vec<Sample<f64>>) -> nuisance_grad::Result<Self> {
        let mut s = Self { oracle, g0, eval, base: 0.0 };
        s.base = s.risk(theta_star)?;
        Ok(s)
    }

    pub fn from_dgp(
        oracle: GradOracle<f64>,
        g0: NuisanceFn<f64>,
        theta_star: &[f64],
        dgp: &Dgp<f64>,
        mc: MonteCarlo,
    ) -> nuisance_grad::Result<Self> {
        let mut rng = Rng::new(mc.seed).child_named("eval");
        let eval = (0..mc.n).map(|_| dgp.draw(&mut rng)).collect();
        Self::new(oracle, g0, theta_star, eval)
    }

    /// Mean loss over the evaluation sample.
    pub fn risk(&self, theta: &[f64]) -> nuisance_grad::Result<f64> {
        if self.eval.is_empty() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for z in &self.eval {
            s += self.oracle.loss(theta, &self.g0, z)?;
        }
        Ok(s / self.eval.len() as f64)
    }

    pub fn gap(&self, theta: &[f64]) -> nuisance_grad::Result<f64> {
        Ok(self.risk(theta)? - self.base)
    }
}

impl Monitor<f64> for ExcessRisk {
    fn excess_risk(&self, theta: &[f64]) -> f64 {
        self.gap(theta).unwrap_or(f64::NAN)
    }
}

/// One-shot excess risk estimate with its own evaluation sample.
pub fn excess_risk(
    p: &GradOracle<f64>,
    theta: &[f64],
    theta_star: &[f64],
    g0: &NuisanceFn<f64>,
    dgp: &Dgp<f64>,
    mc: MonteCarlo,
) -> nuisance_grad::Result<f64> {
    ExcessRisk::from_dgp(p.clone(), g0.clone(), theta_star, dgp, mc)?.gap(theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SlopeError {
    #[error("slope fit needs at least 3 pairs, got {0}")]
    TooFew(usize),
    #[error("non-positive or non-finite pair ({0}, {1})")]
    NonPositive(f64, f64),
}

/// Least-squares line through `(ln r, ln e)`.
pub fn slope_fit(pairs: &[(f64, f64)]) -> Result<SlopeFit, SlopeError> {
    if pairs.len() < 3 {
        return Err(SlopeError::TooFew(pairs.len()));
    }
    if let Some(&(r, e)) = pairs.iter().find(|(r, e)| !(*r > 0.0 && *e > 0.0 && r.is_finite() && e.is_finite())) {
        return Err(SlopeError::NonPositive(r, e));
    }
    let n = pairs.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(r, e)| (r.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SlopeError::NonPositive(pairs[0].0, pairs[0].1));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(SlopeFit { slope, intercept: my - slope * mx, r2 })
}
