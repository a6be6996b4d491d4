use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::numkit::{cholesky, gaussian, Mat, Rng};
use crate::problems::Sample;
use crate::{Error, Real, Result};

/// Nonlinear confounding function family `0.5·cos(s) + 0.5·sin(s)` with `s = Σw / divisor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum AlphaForm {
    SinCosOfSum { divisor: f64 },
}

impl AlphaForm {
    pub fn eval<T: Real>(&self, w: &[T]) -> T {
        match *self {
            AlphaForm::SinCosOfSum { divisor } => {
                let s = w.iter().copied().sum::<T>() / T::lit(divisor);
                T::lit(0.5) * s.cos() + T::lit(0.5) * s.sin()
            }
        }
    }
}

/// Gaussian partially linear simulation model.
///
/// `(X, W)` is jointly normal with covariance `[[(1+δ)I, λI], [λI, (1+δ)I]]`,
/// `Y = ⟨θ₀, X⟩ + α₀(W) + ε` and `U = α₀(W) + ξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PlmConfig<T> {
    pub theta0: Vec<T>,
    pub mu_x: Vec<T>,
    pub mu_w: Vec<T>,
    pub lambda: T,
    pub delta: T,
    pub noise_sd_eps: T,
    pub noise_sd_xi: T,
    pub alpha: AlphaForm,
}

impl<T: Real> PlmConfig<T> {
    /// The two-dimensional design used throughout the simulation studies.
    pub fn standard(lambda: T) -> Self {
        Self {
            theta0: vec![T::lit(-0.5), T::one()],
            mu_x: vec![T::one(), T::one()],
            mu_w: vec![T::lit(2.0), T::lit(2.0)],
            lambda,
            delta: T::lit(0.05),
            noise_sd_eps: T::one(),
            noise_sd_xi: T::one(),
            alpha: AlphaForm::SinCosOfSum { divisor: 2.0 },
        }
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.mu_x.len() != d || self.mu_w.len() != d {
            return Err(Error::Dimension(format!(
                "theta0/mu_x/mu_w lengths {}/{}/{}",
                d,
                self.mu_x.len(),
                self.mu_w.len()
            )));
        }
        if !(self.lambda.abs() < T::one() + self.delta) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must satisfy |lambda| < 1 + delta = {}",
                self.lambda,
                T::one() + self.delta
            )));
        }
        if self.noise_sd_eps < T::zero() || self.noise_sd_xi < T::zero() {
            return Err(Error::InvalidArgument("noise scales must be nonnegative".into()));
        }
        Ok(())
    }

    /// Joint covariance of `(X, W)`.
    pub fn covariance(&self) -> Mat<T> {
        let d = self.dim();
        let var = T::one() + self.delta;
        Mat::from_fn(2 * d, 2 * d, |i, j| {
            if i == j {
                var
            } else if i % d == j % d {
                self.lambda
            } else {
                T::zero()
            }
        })
    }

    /// `E[X | W = w] = μ_X + λ/(1+δ) (w − μ_W)`.
    pub fn cond_mean_x(&self, w: &[T]) -> Vec<T> {
        let k = self.lambda / (T::one() + self.delta);
        self.mu_x
            .iter()
            .zip(w.iter().zip(&self.mu_w))
            .map(|(&mx, (&wi, &mw))| mx + k * (wi - mw))
            .collect()
    }

    pub fn alpha0(&self, w: &[T]) -> T {
        self.alpha.eval(w)
    }

    /// `E[XXᵀ] = (1+δ)I + μ_X μ_Xᵀ`.
    pub fn second_moment_x(&self) -> Mat<T> {
        let d = self.dim();
        let mut m = Mat::identity(d);
        m.scale(T::one() + self.delta);
        m.add_outer(&self.mu_x, T::one());
        m
    }

    /// `Cov(X | W) = ((1+δ) − λ²/(1+δ)) I`.
    pub fn residual_x_second_moment(&self) -> Mat<T> {
        let v = T::one() + self.delta;
        let mut m = Mat::identity(self.dim());
        m.scale(v - self.lambda * self.lambda / v);
        m
    }
}

/// Binary-treatment model used by the causal losses.
///
/// `X = (1, Z₁, …, Z_{d−1})` with `Zⱼ` standard normal clipped to `[−3, 3]`,
/// treatment `W ~ Bernoulli(σ(s·(0.5 X₁ − 0.25 X_{d−1})))`, and outcome means
/// `μ₀(x) = 0.4 + 0.2 tanh(x₁)`, `μ₁(x) = μ₀(x) + 0.1 + 0.2 tanh(x_{d−1})`.
/// Outcomes are Bernoulli(μ_W) when `binary_outcome`, else Gaussian around μ_W.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CausalConfig<T> {
    pub dim: usize,
    pub prop_scale: T,
    pub binary_outcome: bool,
    pub noise_sd: T,
}

impl<T: Real> CausalConfig<T> {
    pub fn standard(binary_outcome: bool) -> Self {
        Self {
            dim: 3,
            prop_scale: T::one(),
            binary_outcome,
            noise_sd: T::lit(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidArgument("causal model needs dim >= 2".into()));
        }
        Ok(())
    }

    pub fn propensity(&self, x: &[T]) -> T {
        let last = x[self.dim - 1];
        let s = self.prop_scale * (T::lit(0.5) * x[1] - T::lit(0.25) * last);
        T::one() / (T::one() + (-s).exp())
    }

    pub fn mu0(&self, x: &[T]) -> T {
        T::lit(0.4) + T::lit(0.2) * x[1].tanh()
    }

    pub fn mu1(&self, x: &[T]) -> T {
        self.mu0(x) + T::lit(0.1) + T::lit(0.2) * x[self.dim - 1].tanh()
    }
}

/// Tabular controls with a synthetic partially linear outcome.
#[derive(Clone, Debug)]
pub struct SemiSynthetic<T> {
    pub theta0: Vec<T>,
    pub alpha: AlphaForm,
    pub noise_scale: T,
    /// `(x, standardized w)` rows the model resamples from.
    pub rows: Arc<Vec<(Vec<T>, Vec<T>)>>,
}

impl<T: Real> SemiSynthetic<T> {
    pub fn alpha0(&self, w: &[T]) -> T {
        self.alpha.eval(w)
    }

    /// Fresh outcome pair for a fixed `(x, w)`.
    pub fn outcome(&self, rng: &mut Rng, x: &[T], w: &[T]) -> Sample<T> {
        let eps = rng.normal(T::zero(), self.noise_scale);
        let xi = rng.normal(T::zero(), self.noise_scale);
        let a = self.alpha0(w);
        Sample {
            x: x.to_vec(),
            w: w.to_vec(),
            y: crate::scalar::dot(&self.theta0, x) + a + eps,
            treat: None,
            u: Some(a + xi),
            eps: Some(eps),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlmDgp<T> {
    pub cfg: PlmConfig<T>,
    chol: Mat<T>,
    mean: Vec<T>,
}

/// A data-generating process the problems, metrics and streams draw from.
#[derive(Clone, Debug)]
pub enum Dgp<T> {
    Plm(PlmDgp<T>),
    Causal(CausalConfig<T>),
    SemiSynthetic(SemiSynthetic<T>),
}

impl<T: Real> Dgp<T> {
    pub fn plm(cfg: PlmConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let chol = cholesky(&cfg.covariance())?;
        let mean = cfg.mu_x.iter().chain(&cfg.mu_w).copied().collect();
        Ok(Dgp::Plm(PlmDgp { cfg, chol, mean }))
    }

    pub fn causal(cfg: CausalConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Dgp::Causal(cfg))
    }

    pub fn semi_synthetic(truth: SemiSynthetic<T>) -> Result<Self> {
        if truth.rows.is_empty() {
            return Err(Error::EmptySample("semi-synthetic model has no rows"));
        }
        Ok(Dgp::SemiSynthetic(truth))
    }

    pub fn as_plm(&self) -> Option<&PlmConfig<T>> {
        match self {
            Dgp::Plm(p) => Some(&p.cfg),
            _ => None,
        }
    }

    pub fn x_dim(&self) -> usize {
        match self {
            Dgp::Plm(p) => p.cfg.dim(),
            Dgp::Causal(c) => c.dim,
            Dgp::SemiSynthetic(s) => s.theta0.len(),
        }
    }

    /// Dimension of the argument nuisance functions take.
    pub fn nuisance_input_dim(&self) -> usize {
        match self {
            Dgp::Plm(p) => p.cfg.dim(),
            Dgp::Causal(c) => c.dim,
            Dgp::SemiSynthetic(s) => s.rows[0].1.len(),
        }
    }

    /// Location around which smooth perturbation bumps are centered.
    pub fn nuisance_input_center(&self) -> Vec<T> {
        match self {
            Dgp::Plm(p) => p.cfg.mu_w.clone(),
            Dgp::Causal(c) => {
                let mut v = vec![T::zero(); c.dim];
                v[0] = T::one();
                v
            }
            Dgp::SemiSynthetic(s) => vec![T::zero(); s.rows[0].1.len()],
        }
    }

    pub fn draw(&self, rng: &mut Rng) -> Sample<T> {
        match self {
            Dgp::Plm(p) => {
                let d = p.cfg.dim();
                let xw = gaussian(rng, &p.mean, &p.chol);
                let x = xw[..d].to_vec();
                let w = xw[d..].to_vec();
                let eps = rng.normal(T::zero(), p.cfg.noise_sd_eps);
                let xi = rng.normal(T::zero(), p.cfg.noise_sd_xi);
                let a = p.cfg.alpha0(&w);
                Sample {
                    y: crate::scalar::dot(&p.cfg.theta0, &x) + a + eps,
                    u: Some(a + xi),
                    x,
                    w,
                    treat: None,
                    eps: Some(eps),
                }
            }
            Dgp::Causal(c) => {
                let mut x = Vec::with_capacity(c.dim);
                x.push(T::one());
                for _ in 1..c.dim {
                    x.push(T::lit(rng.standard_normal().clamp(-3.0, 3.0)));
                }
                let treat = rng.bernoulli(c.propensity(&x).to_f64_lossy());
                let mu = if treat { c.mu1(&x) } else { c.mu0(&x) };
                let (y, eps) = if c.binary_outcome {
                    let y = if rng.bernoulli(mu.to_f64_lossy()) { T::one() } else { T::zero() };
                    (y, y - mu)
                } else {
                    let e = rng.normal(T::zero(), c.noise_sd);
                    (mu + e, e)
                };
                Sample {
                    x,
                    w: Vec::new(),
                    y,
                    treat: Some(treat),
                    u: None,
                    eps: Some(eps),
                }
            }
            Dgp::SemiSynthetic(s) => {
                let (x, w) = &s.rows[rng.below(s.rows.len())];
                s.outcome(rng, x, w)
            }
        }
    }

    /// One draw of the nuisance-function argument (W for PLM models, X for causal ones).
    pub fn draw_nuisance_input(&self, rng: &mut Rng) -> Vec<T> {
        match self {
            Dgp::Causal(_) => self.draw(rng).x,
            Dgp::SemiSynthetic(s) => s.rows[rng.below(s.rows.len())].1.clone(),
            Dgp::Plm(_) => self.draw(rng).w,
        }
    }
}

/// Draws one sample from the Gaussian partially linear model.
pub fn draw_sample<T: Real>(rng: &mut Rng, cfg: &PlmConfig<T>) -> Result<Sample<T>> {
    Ok(Dgp::plm(cfg.clone())?.draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::stats::MeanAccumulator;

    #[test]
    fn zero_noise_no_correlation_is_deterministic_given_xw() {
        let mut cfg = PlmConfig::<f64>::standard(0.0);
        cfg.noise_sd_eps = 0.0;
        cfg.noise_sd_xi = 0.0;
        let dgp = Dgp::plm(cfg.clone()).unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            let z = dgp.draw(&mut rng);
            let expect = cfg.theta0[0] * z.x[0] + cfg.theta0[1] * z.x[1] + cfg.alpha0(&z.w);
            assert_eq!(z.y, expect);
            assert_eq!(z.u, Some(cfg.alpha0(&z.w)));
        }
    }

    #[test]
    fn structural_identity_holds_per_sample() {
        let cfg = PlmConfig::<f64>::standard(0.5);
        let dgp = Dgp::plm(cfg.clone()).unwrap();
        let mut rng = Rng::new(9);
        for _ in 0..10_000 {
            let z = dgp.draw(&mut rng);
            let resid = z.y - crate::scalar::dot(&cfg.theta0, &z.x) - cfg.alpha0(&z.w);
            assert!((resid - z.eps.unwrap()).abs() <= 1e-12 * (1.0 + z.y.abs()));
        }
    }

    #[test]
    fn structural_residual_mean_is_zero() {
        let cfg = PlmConfig::<f64>::standard(0.5);
        let dgp = Dgp::plm(cfg.clone()).unwrap();
        let mut rng = Rng::new(99);
        let mut acc = MeanAccumulator::new(1);
        for _ in 0..1_000_000 {
            let z = dgp.draw(&mut rng);
            acc.push(&[z.y - crate::scalar::dot(&cfg.theta0, &z.x) - cfg.alpha0(&z.w)]);
        }
        assert!(acc.mean()[0].abs() <= 4.0 * acc.std_err()[0]);
    }

    #[test]
    fn second_moments_match_configuration() {
        let cfg = PlmConfig::<f64>::standard(0.5);
        let dgp = Dgp::plm(cfg.clone()).unwrap();
        let mut rng = Rng::new(123);
        let n = 1_000_000;
        // Products (x_i - mu)(w_j - mu) and (x_i - mu)^2 as MC samples.
        let mut acc = MeanAccumulator::new(6);
        for _ in 0..n {
            let z = dgp.draw(&mut rng);
            let dx = [z.x[0] - 1.0, z.x[1] - 1.0];
            let dw = [z.w[0] - 2.0, z.w[1] - 2.0];
            acc.push(&[dx[0] * dw[0], dx[1] * dw[1], dx[0] * dw[1], dx[0] * dx[0], dw[1] * dw[1], dx[0] * dx[1]]);
        }
        let expect = [0.5, 0.5, 0.0, 1.05, 1.05, 0.0];
        let (m, se) = (acc.mean(), acc.std_err());
        for k in 0..6 {
            assert!((m[k] - expect[k]).abs() <= 4.0 * se[k], "moment {k}: {} vs {}", m[k], expect[k]);
        }
    }

    #[test]
    fn rejects_degenerate_covariance() {
        let cfg = PlmConfig::<f64>::standard(1.05);
        assert!(Dgp::plm(cfg).is_err());
    }

    #[test]
    fn causal_draws_are_well_formed() {
        let dgp = Dgp::causal(CausalConfig::<f64>::standard(true)).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            let z = dgp.draw(&mut rng);
            assert_eq!(z.x[0], 1.0);
            assert!(z.y == 0.0 || z.y == 1.0);
            assert!(z.treat.is_some());
        }
    }
}
