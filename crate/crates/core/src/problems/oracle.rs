use crate::numkit::DEFAULT_STEP;
use crate::problems::{NuisanceFn, ProblemKind, Sample, ScalarFn};
use crate::scalar::dot;
use crate::{Error, Real, Result};

/// Default propensity clip level for the restricted causal losses.
pub const DEFAULT_CLIP: f64 = 0.05;

/// Stochastic first-order access to a risk `L(θ, g) = E ℓ(θ, g; Z)`.
pub trait GradientOracle<T: Real>: Send + Sync {
    fn kind(&self) -> ProblemKind;
    fn dim(&self) -> usize;

    /// Writes the per-sample gradient into `out`.
    fn gradient_into(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, out: &mut [T]) -> Result<()>;

    fn gradient(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim()];
        self.gradient_into(theta, g, z, &mut out)?;
        Ok(out)
    }

    /// Directional derivative in `g` of the per-sample gradient, along `h`.
    fn gradient_dirderiv(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, h: &NuisanceFn<T>) -> Result<Vec<T>>;
}

/// Loss, score and nuisance derivatives of one problem.
#[derive(Clone, Debug, PartialEq)]
pub struct GradOracle<T> {
    pub kind: ProblemKind,
    pub dim: usize,
    /// Propensity clip `c₀` for the restricted CATE and CRR losses.
    pub clip: T,
}

#[inline]
fn softplus<T: Real>(s: T) -> T {
    if s > T::zero() {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Real>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> GradOracle<T> {
    pub fn new(kind: ProblemKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            clip: T::lit(DEFAULT_CLIP),
        }
    }

    fn check(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>) -> Result<()> {
        g.expect_kind(self.kind)?;
        if theta.len() != self.dim || z.x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{}: theta {} / x {} vs dim {}",
                self.kind,
                theta.len(),
                z.x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Argument nuisance functions are evaluated at for this sample.
    pub fn nuisance_input<'a>(&self, z: &'a Sample<T>) -> &'a [T] {
        if self.kind.is_plm() {
            &z.w
        } else {
            &z.x
        }
    }

    fn treat(z: &Sample<T>) -> Result<bool> {
        z.treat
            .ok_or_else(|| Error::Domain("causal loss requires a treatment indicator".into()))
    }

    pub fn clip_prop(&self, p: T) -> T {
        p.max(self.clip).min(T::one() - self.clip)
    }

    /// Pseudo-outcome of the restricted CATE loss.
    fn cate_res_mu(&self, g0: &ScalarFn<T>, g1: &ScalarFn<T>, prop: &ScalarFn<T>, z: &Sample<T>) -> Result<T> {
        let x = &z.x;
        let w = Self::treat(z)?;
        let (a0, a1) = (g0.eval(x), g1.eval(x));
        let p = self.clip_prop(prop.eval(x));
        let (gw, wv) = if w { (a1, T::one()) } else { (a0, T::zero()) };
        Ok(a1 - a0 + (wv - p) / (p * (T::one() - p)) * (z.y - gw))
    }

    fn crr_mu(&self, g0: &ScalarFn<T>, g1: &ScalarFn<T>, prop: &ScalarFn<T>, z: &Sample<T>) -> Result<(T, T, T)> {
        if z.y < T::zero() {
            return Err(Error::Domain(format!("relative-risk loss needs y >= 0, got {}", z.y)));
        }
        let x = &z.x;
        let w = Self::treat(z)?;
        let (a0, a1) = (g0.eval(x), g1.eval(x));
        let p = self.clip_prop(prop.eval(x));
        let mu1 = if w { a1 + (z.y - a1) / p } else { a1 };
        let mu0 = if w { a0 } else { a0 + (z.y - a0) / (T::one() - p) };
        Ok((mu0, mu1, p))
    }

    fn crr_logit(&self, theta: &[T], x: &[T]) -> Result<T> {
        let s = dot(theta, x);
        let p = sigmoid(s);
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::Domain(format!("logit {s} saturates the sigmoid")));
        }
        Ok(s)
    }

    pub fn loss(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>) -> Result<T> {
        self.check(theta, g, z)?;
        let half = T::lit(0.5);
        Ok(match g {
            NuisanceFn::PlmOrth { g_y, g_x } => {
                let w = &z.w;
                let mut r = z.y - g_y.eval(w);
                for j in 0..self.dim {
                    r -= theta[j] * (z.x[j] - g_x[j].eval(w));
                }
                half * r * r
            }
            NuisanceFn::PlmNonorth { g } => {
                let r = z.y - g.eval(&z.w) - dot(theta, &z.x);
                half * r * r
            }
            NuisanceFn::CateUnres { out, prop } => {
                let x = &z.x;
                let w = if Self::treat(z)? { T::one() } else { T::zero() };
                let r = z.y - out.eval(x) - (w - prop.eval(x)) * dot(theta, x);
                half * r * r
            }
            NuisanceFn::CateRes { g0, g1, prop } => {
                let r = self.cate_res_mu(g0, g1, prop, z)? - dot(theta, &z.x);
                half * r * r
            }
            NuisanceFn::Crr { g0, g1, prop } => {
                let (mu0, mu1, _) = self.crr_mu(g0, g1, prop, z)?;
                let s = self.crr_logit(theta, &z.x)?;
                // -log σ(s) = softplus(-s), -log(1-σ(s)) = softplus(s)
                mu1 * softplus(-s) + mu0 * softplus(s)
            }
        })
    }

    pub fn score_into(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, out: &mut [T]) -> Result<()> {
        self.check(theta, g, z)?;
        let d = self.dim;
        match g {
            NuisanceFn::PlmOrth { g_y, g_x } => {
                let w = &z.w;
                let mut r = z.y - g_y.eval(w);
                for j in 0..d {
                    out[j] = z.x[j] - g_x[j].eval(w);
                    r -= theta[j] * out[j];
                }
                for o in out.iter_mut() {
                    *o = -r * *o;
                }
            }
            NuisanceFn::PlmNonorth { g } => {
                let r = z.y - g.eval(&z.w) - dot(theta, &z.x);
                for (o, &x) in out.iter_mut().zip(&z.x) {
                    *o = -r * x;
                }
            }
            NuisanceFn::CateUnres { out: go, prop } => {
                let x = &z.x;
                let w = if Self::treat(z)? { T::one() } else { T::zero() };
                let wt = w - prop.eval(x);
                let r = z.y - go.eval(x) - wt * dot(theta, x);
                for (o, &xj) in out.iter_mut().zip(x) {
                    *o = -r * wt * xj;
                }
            }
            NuisanceFn::CateRes { g0, g1, prop } => {
                let r = self.cate_res_mu(g0, g1, prop, z)? - dot(theta, &z.x);
                for (o, &x) in out.iter_mut().zip(&z.x) {
                    *o = -r * x;
                }
            }
            NuisanceFn::Crr { g0, g1, prop } => {
                let (mu0, mu1, _) = self.crr_mu(g0, g1, prop, z)?;
                let p = sigmoid(self.crr_logit(theta, &z.x)?);
                let c = p * (mu1 + mu0) - mu1;
                for (o, &x) in out.iter_mut().zip(&z.x) {
                    *o = c * x;
                }
            }
        }
        Ok(())
    }

    pub fn score(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim];
        self.score_into(theta, g, z, &mut out)?;
        Ok(out)
    }

    /// `D_g ℓ(θ, g; z)[h]`.
    pub fn dirderiv_g(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, h: &NuisanceFn<T>) -> Result<T> {
        self.check(theta, g, z)?;
        h.expect_kind(self.kind)?;
        match (g, h) {
            (NuisanceFn::PlmOrth { g_y, g_x }, NuisanceFn::PlmOrth { g_y: h_y, g_x: h_x }) => {
                let w = &z.w;
                let mut r = z.y - g_y.eval(w);
                let mut th = T::zero();
                for j in 0..self.dim {
                    r -= theta[j] * (z.x[j] - g_x[j].eval(w));
                    th += theta[j] * h_x[j].eval(w);
                }
                Ok(r * (th - h_y.eval(w)))
            }
            (NuisanceFn::PlmNonorth { g }, NuisanceFn::PlmNonorth { g: hg }) => {
                let r = z.y - g.eval(&z.w) - dot(theta, &z.x);
                Ok(-r * hg.eval(&z.w))
            }
            _ => {
                let t = T::lit(DEFAULT_STEP);
                let up = self.loss(theta, &g.plus_scaled(t, h)?, z)?;
                let dn = self.loss(theta, &g.plus_scaled(-t, h)?, z)?;
                let v = (up - dn) / (t + t);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteEval { coord: 0 })
                }
            }
        }
    }

    /// `D_g S(θ, g; z)[h]`.
    pub fn dirderiv_score(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, h: &NuisanceFn<T>) -> Result<Vec<T>> {
        self.check(theta, g, z)?;
        h.expect_kind(self.kind)?;
        let d = self.dim;
        match (g, h) {
            (NuisanceFn::PlmOrth { g_y, g_x }, NuisanceFn::PlmOrth { g_y: h_y, g_x: h_x }) => {
                let w = &z.w;
                let xt: Vec<T> = (0..d).map(|j| z.x[j] - g_x[j].eval(w)).collect();
                let hx: Vec<T> = h_x.iter().map(|f| f.eval(w)).collect();
                let r = z.y - g_y.eval(w) - dot(theta, &xt);
                let a = h_y.eval(w) - dot(theta, &hx);
                Ok((0..d).map(|j| a * xt[j] + r * hx[j]).collect())
            }
            (NuisanceFn::PlmNonorth { .. }, NuisanceFn::PlmNonorth { g: hg }) => {
                let hv = hg.eval(&z.w);
                Ok(z.x.iter().map(|&x| hv * x).collect())
            }
            _ => {
                let t = T::lit(DEFAULT_STEP);
                let up = self.score(theta, &g.plus_scaled(t, h)?, z)?;
                let dn = self.score(theta, &g.plus_scaled(-t, h)?, z)?;
                let v: Vec<T> = up.iter().zip(&dn).map(|(&a, &b)| (a - b) / (t + t)).collect();
                if let Some(coord) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteEval { coord });
                }
                Ok(v)
            }
        }
    }
}

impl<T: Real> GradientOracle<T> for GradOracle<T> {
    fn kind(&self) -> ProblemKind {
        self.kind
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn gradient_into(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, out: &mut [T]) -> Result<()> {
        self.score_into(theta, g, z, out)
    }

    fn gradient_dirderiv(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, h: &NuisanceFn<T>) -> Result<Vec<T>> {
        self.dirderiv_score(theta, g, z, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff_grad;

    fn c(v: f64) -> ScalarFn<f64> {
        ScalarFn::Const(v)
    }

    #[test]
    fn plm_orth_zero_predictor() {
        let p = GradOracle::<f64>::new(ProblemKind::PlmOrth, 2);
        let g = NuisanceFn::zero(ProblemKind::PlmOrth, 2);
        let z = Sample::plm(vec![1.0, 0.0], vec![0.3, 0.1], 1.0);
        assert_eq!(p.loss(&[0.0, 0.0], &g, &z).unwrap(), 0.5);
        assert_eq!(p.score(&[0.0, 0.0], &g, &z).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn plm_nonorth_zero_residual() {
        let p = GradOracle::<f64>::new(ProblemKind::PlmNonorth, 2);
        let g = NuisanceFn::PlmNonorth { g: c(0.5) };
        let z = Sample::plm(vec![1.0, 2.0], vec![0.0, 0.0], 0.5 + 0.25 + 2.0);
        let th = [0.25, 1.0];
        assert_eq!(p.loss(&th, &g, &z).unwrap(), 0.0);
        assert_eq!(p.score(&th, &g, &z).unwrap(), vec![0.0, 0.0]);
        let h = NuisanceFn::PlmNonorth { g: c(7.0) };
        assert_eq!(p.dirderiv_g(&th, &g, &z, &h).unwrap(), 0.0);
    }

    #[test]
    fn plm_nonorth_dirderiv_value() {
        let p = GradOracle::<f64>::new(ProblemKind::PlmNonorth, 1);
        let g = NuisanceFn::PlmNonorth { g: c(0.0) };
        let z = Sample::plm(vec![0.0], vec![0.0], 2.0);
        let h = NuisanceFn::PlmNonorth { g: c(3.0) };
        let v = p.dirderiv_g(&[0.0], &g, &z, &h).unwrap();
        assert_eq!(v, -6.0);
        let t = 1e-5;
        let fd = (p.loss(&[0.0], &g.plus_scaled(t, &h).unwrap(), &z).unwrap()
            - p.loss(&[0.0], &g.plus_scaled(-t, &h).unwrap(), &z).unwrap())
            / (2.0 * t);
        assert!((fd - v).abs() < 1e-6);
        let zero = NuisanceFn::PlmNonorth { g: ScalarFn::Zero };
        assert_eq!(p.dirderiv_g(&[0.0], &g, &z, &zero).unwrap(), 0.0);
    }

    #[test]
    fn cate_unres_hand_value() {
        let p = GradOracle::<f64>::new(ProblemKind::CateUnres, 1);
        let g = NuisanceFn::CateUnres { out: c(1.0), prop: c(0.5) };
        let z = Sample::causal(vec![1.0], true, 2.0);
        assert!((p.loss(&[1.0], &g, &z).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn crr_rejects_negative_outcome_and_saturation() {
        let p = GradOracle::<f64>::new(ProblemKind::Crr, 1);
        let g = NuisanceFn::Crr { g0: c(0.3), g1: c(0.5), prop: c(0.5) };
        let z = Sample::causal(vec![1.0], true, -1.0);
        assert!(matches!(p.loss(&[0.0], &g, &z), Err(Error::Domain(_))));
        let z = Sample::causal(vec![1.0], true, 1.0);
        assert!(matches!(p.loss(&[1e3], &g, &z), Err(Error::Domain(_))));
        assert!(p.loss(&[0.3], &g, &z).is_ok());
    }

    #[test]
    fn kind_mismatch() {
        let p = GradOracle::<f64>::new(ProblemKind::PlmOrth, 1);
        let g = NuisanceFn::zero(ProblemKind::Crr, 1);
        let z = Sample::plm(vec![1.0], vec![0.0], 1.0);
        assert!(matches!(p.loss(&[0.0], &g, &z), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn restricted_cate_clips_propensity() {
        let p = GradOracle::<f64>::new(ProblemKind::CateRes, 1);
        let g = NuisanceFn::CateRes { g0: c(0.0), g1: c(0.0), prop: c(0.0) };
        let z = Sample::causal(vec![1.0], true, 1.0);
        // p clipped to 0.05: mu = (1 - 0.05) / (0.05 * 0.95) = 20
        let l = p.loss(&[0.0], &g, &z).unwrap();
        assert!((l - 0.5 * 400.0).abs() < 1e-9);
    }

    #[test]
    fn crr_score_matches_fd() {
        let p = GradOracle::<f64>::new(ProblemKind::Crr, 2);
        let g = NuisanceFn::Crr { g0: c(0.3), g1: c(0.6), prop: c(0.4) };
        for (w, y) in [(true, 1.0), (false, 0.0), (false, 2.5)] {
            let z = Sample::causal(vec![1.0, -0.7], w, y);
            let th = [0.2, -0.4];
            let s = p.score(&th, &g, &z).unwrap();
            let fd = finite_diff_grad(|t: &[f64]| p.loss(t, &g, &z).unwrap(), &th, 1e-5).unwrap();
            for j in 0..2 {
                assert!((s[j] - fd[j]).abs() < 1e-7);
            }
        }
    }
}
