use std::sync::Arc;

use crate::nuisance::RffMap;
use crate::numkit::{cholesky, cholesky_solve, Mat};
use crate::problems::Predict;
use crate::scalar::{dot, norm2};
use crate::{Error, Real, Result};

/// Ridge regression on random Fourier features; the intercept is not penalized.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel<T> {
    pub rff: Arc<RffMap<T>>,
    pub weights: Vec<T>,
    pub intercept: T,
    pub reg: T,
}

/// L2-penalized logistic regression on random Fourier features.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel<T> {
    pub rff: Arc<RffMap<T>>,
    pub weights: Vec<T>,
    pub intercept: T,
    pub reg: T,
}

impl<T: Real> RidgeModel<T> {
    pub fn zeros(rff: Arc<RffMap<T>>, reg: T) -> Self {
        let n = rff.n_components();
        Self { rff, weights: vec![T::zero(); n], intercept: T::zero(), reg }
    }

    /// `Σ(v − ⟨β, φ(w)⟩ − b)²/m + reg·‖β‖²`.
    pub fn objective(&self, data: &[(Vec<T>, T)]) -> T {
        let m = T::from_usize_lossy(data.len().max(1));
        let sse: T = data
            .iter()
            .map(|(w, v)| {
                let r = *v - self.predict(w);
                r * r
            })
            .sum();
        sse / m + self.reg * dot(&self.weights, &self.weights)
    }

    /// Gradient of [`Self::objective`] as `(weights, intercept)`.
    pub fn objective_gradient(&self, data: &[(Vec<T>, T)]) -> (Vec<T>, T) {
        let k = self.weights.len();
        let m = T::from_usize_lossy(data.len().max(1));
        let two = T::lit(2.0);
        let mut gw: Vec<T> = self.weights.iter().map(|&b| two * self.reg * b).collect();
        let mut gb = T::zero();
        let mut phi = vec![T::zero(); k];
        for (w, v) in data {
            self.rff.features_into(w, &mut phi);
            let r = *v - dot(&self.weights, &phi) - self.intercept;
            let c = -two * r / m;
            for j in 0..k {
                gw[j] += c * phi[j];
            }
            gb += c;
        }
        (gw, gb)
    }
}

impl<T: Real> Predict<T> for RidgeModel<T> {
    fn predict(&self, input: &[T]) -> T {
        let mut s = self.intercept;
        let mut phi = vec![T::zero(); self.weights.len()];
        self.rff.features_into(input, &mut phi);
        s += dot(&self.weights, &phi);
        s
    }
}

fn sigmoid<T: Real>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> LogisticModel<T> {
    pub fn zeros(rff: Arc<RffMap<T>>, reg: T) -> Self {
        let n = rff.n_components();
        Self { rff, weights: vec![T::zero(); n], intercept: T::zero(), reg }
    }

    pub fn logit(&self, input: &[T]) -> T {
        dot(&self.weights, &self.rff.features(input)) + self.intercept
    }

    /// Gradient of the mean negative log-likelihood plus `reg·‖β‖²`.
    pub fn objective_gradient(&self, data: &[(Vec<T>, T)]) -> (Vec<T>, T) {
        let k = self.weights.len();
        let m = T::from_usize_lossy(data.len().max(1));
        let two = T::lit(2.0);
        let mut gw: Vec<T> = self.weights.iter().map(|&b| two * self.reg * b).collect();
        let mut gb = T::zero();
        let mut phi = vec![T::zero(); k];
        for (w, y) in data {
            self.rff.features_into(w, &mut phi);
            let c = (sigmoid(dot(&self.weights, &phi) + self.intercept) - *y) / m;
            for j in 0..k {
                gw[j] += c * phi[j];
            }
            gb += c;
        }
        (gw, gb)
    }
}

impl<T: Real> Predict<T> for LogisticModel<T> {
    fn predict(&self, input: &[T]) -> T {
        sigmoid(self.logit(input))
    }
}

fn check_data<T: Real>(feat: &RffMap<T>, data: &[(Vec<T>, T)], reg_scale: T) -> Result<T> {
    if data.is_empty() {
        return Err(Error::EmptySample("model fit needs at least one pair"));
    }
    if let Some((w, _)) = data.iter().find(|(w, _)| w.len() != feat.input_dim()) {
        return Err(Error::Dimension(format!("input of length {} vs map dimension {}", w.len(), feat.input_dim())));
    }
    let reg = reg_scale / T::from_usize_lossy(data.len());
    if !(reg > T::zero()) {
        return Err(Error::InvalidArgument(format!("regularization must be positive, got {reg}")));
    }
    Ok(reg)
}

/// Closed-form ridge fit with `reg = reg_scale / m`.
pub fn ridge_fit<T: Real>(feat: &Arc<RffMap<T>>, data: &[(Vec<T>, T)], reg_scale: T) -> Result<RidgeModel<T>> {
    let reg = check_data(feat, data, reg_scale)?;
    let k = feat.n_components();
    let m = T::from_usize_lossy(data.len());
    let phis: Vec<Vec<T>> = data.iter().map(|(w, _)| feat.features(w)).collect();
    let mut phibar = vec![T::zero(); k];
    let mut vbar = T::zero();
    for (p, (_, v)) in phis.iter().zip(data) {
        for j in 0..k {
            phibar[j] += p[j] / m;
        }
        vbar += *v / m;
    }
    let mut a = Mat::<T>::zeros(k, k);
    let mut rhs = vec![T::zero(); k];
    let mut c = vec![T::zero(); k];
    for (p, (_, v)) in phis.iter().zip(data) {
        for j in 0..k {
            c[j] = p[j] - phibar[j];
        }
        a.add_outer(&c, T::one() / m);
        let vc = (*v - vbar) / m;
        for j in 0..k {
            rhs[j] += c[j] * vc;
        }
    }
    for j in 0..k {
        a[(j, j)] += reg;
    }
    let l = cholesky(&a).expect("ridge normal equations are positive definite when reg > 0");
    let weights = cholesky_solve(&l, &rhs);
    let intercept = vbar - dot(&weights, &phibar);
    Ok(RidgeModel { rff: feat.clone(), weights, intercept, reg })
}

const NEWTON_TOL: f64 = 1e-8;
const NEWTON_CAP: usize = 100;

/// Penalized logistic fit by Newton iterations; single-class data gets a smoothed constant logit.
pub fn logistic_fit<T: Real>(feat: &Arc<RffMap<T>>, data: &[(Vec<T>, T)], reg_scale: T) -> Result<LogisticModel<T>> {
    let reg = check_data(feat, data, reg_scale)?;
    let k = feat.n_components();
    let m = data.len();
    let ones = data.iter().filter(|(_, y)| *y > T::lit(0.5)).count();
    let mut model = LogisticModel::zeros(feat.clone(), reg);
    if ones == 0 || ones == m {
        let p = (ones as f64 + 0.5) / (m as f64 + 1.0);
        model.intercept = T::lit((p / (1.0 - p)).ln());
        return Ok(model);
    }
    let mf = T::from_usize_lossy(m);
    let phis: Vec<Vec<T>> = data.iter().map(|(w, _)| feat.features(w)).collect();
    let nll = |beta: &[T], b: T| -> T {
        let mut s = T::zero();
        for (p, (_, y)) in phis.iter().zip(data) {
            let z = dot(beta, p) + b;
            let sp = if z > T::zero() { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            s += sp - *y * z;
        }
        s / mf + reg * dot(beta, beta)
    };
    let two = T::lit(2.0);
    for _ in 0..NEWTON_CAP {
        // Parameters ordered as (β₁..β_k, b).
        let mut grad = vec![T::zero(); k + 1];
        let mut hess = Mat::<T>::zeros(k + 1, k + 1);
        let mut ext = vec![T::zero(); k + 1];
        for (p, (_, y)) in phis.iter().zip(data) {
            let s = sigmoid(dot(&model.weights, p) + model.intercept);
            ext[..k].copy_from_slice(p);
            ext[k] = T::one();
            for j in 0..=k {
                grad[j] += (s - *y) * ext[j] / mf;
            }
            hess.add_outer(&ext, s * (T::one() - s) / mf);
        }
        for j in 0..k {
            grad[j] += two * reg * model.weights[j];
            hess[(j, j)] += two * reg;
        }
        if norm2(&grad) <= T::lit(NEWTON_TOL) {
            return Ok(model);
        }
        let step = crate::numkit::solve_spd(&hess, &grad)?;
        let f0 = nll(&model.weights, model.intercept);
        let mut t = T::one();
        loop {
            let bw: Vec<T> = model.weights.iter().zip(&step).map(|(&a, &d)| a - t * d).collect();
            let bb = model.intercept - t * step[k];
            if nll(&bw, bb) <= f0 || t < T::lit(1e-10) {
                model.weights = bw;
                model.intercept = bb;
                break;
            }
            t *= T::lit(0.5);
        }
    }
    Err(Error::NoConvergence { what: "logistic Newton", iters: NEWTON_CAP })
}
