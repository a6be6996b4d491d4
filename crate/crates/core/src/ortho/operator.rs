use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::nuisance::{
    detect_binary_x, logistic_fit, ridge_fit, FittedModel, LogisticModel, ModelDoc, RffMap, RidgeModel, StreamConfig,
    StreamFitState, StreamModel, Updater,
};
use crate::numkit::{stats::MeanAccumulator, MonteCarlo, Rng};
use crate::problems::{GradOracle, GradientOracle, NormEstimate, NuisanceFn, ProblemKind, Sample, ScalarFn};
use crate::scalar::dot;
use crate::simdata::Dgp;
use crate::{Error, Real, Result};

/// A linear map from nuisance functions to `ℝ^d`, `[Γg]_j = E[γ_j(W) g(W)]`.
#[derive(Clone, Debug)]
pub struct OrthoOperator<T> {
    pub representers: Vec<ScalarFn<T>>,
}

impl<T: Real> OrthoOperator<T> {
    pub fn new(representers: Vec<ScalarFn<T>>) -> Self {
        Self { representers }
    }

    pub fn zero(d: usize) -> Self {
        Self { representers: vec![ScalarFn::Zero; d] }
    }

    pub fn dim(&self) -> usize {
        self.representers.len()
    }

    pub fn is_zero(&self) -> bool {
        self.representers.iter().all(ScalarFn::is_zero)
    }

    /// `γ(v)` for one nuisance input.
    pub fn eval(&self, v: &[T]) -> Vec<T> {
        self.representers.iter().map(|r| r.eval(v)).collect()
    }

    /// Representers shifted by `s · other`.
    pub fn plus_scaled(&self, s: T, other: &OrthoOperator<T>) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension(format!("operator dims {} vs {}", self.dim(), other.dim())));
        }
        Ok(Self {
            representers: self
                .representers
                .iter()
                .zip(&other.representers)
                .map(|(a, b)| a.plus_scaled(s, b))
                .collect(),
        })
    }

    /// Monte-Carlo `Γg` with per-coordinate standard errors.
    pub fn action(&self, g: &ScalarFn<T>, dgp: &Dgp<T>, mc: MonteCarlo) -> (Vec<f64>, Vec<f64>) {
        let mut rng = Rng::new(mc.seed).child_named("operator_action");
        let mut acc = MeanAccumulator::new(self.dim());
        let mut row = vec![T::zero(); self.dim()];
        for _ in 0..mc.n {
            let v = dgp.draw_nuisance_input(&mut rng);
            let gv = g.eval(&v);
            for (o, r) in row.iter_mut().zip(&self.representers) {
                *o = r.eval(&v) * gv;
            }
            acc.push(&row);
        }
        (acc.mean().to_vec(), acc.std_err())
    }
}

/// `γ_j(w) = E[X_j | W = w]` for the Gaussian partially linear model.
pub fn plm_true_operator<T: Real>(dgp: &Dgp<T>) -> Result<OrthoOperator<T>> {
    let cfg = dgp
        .as_plm()
        .ok_or_else(|| Error::Unsupported("true operator needs the Gaussian partially linear model".into()))?;
    Ok(OrthoOperator {
        representers: (0..cfg.dim())
            .map(|j| {
                let c = cfg.clone();
                ScalarFn::analytic(move |w: &[T]| c.cond_mean_x(w)[j])
            })
            .collect(),
    })
}

/// Operator whose first representer is a Gaussian bump with unit `L²(P_W)` norm and whose others are zero.
///
/// `Γ₀ + ρ·operator_bump` has Frobenius error exactly `ρ` up to Monte-Carlo error in the normalization.
pub fn operator_bump<T: Real>(dgp: &Dgp<T>, mc: MonteCarlo) -> Result<(OrthoOperator<T>, NormEstimate)> {
    let d = dgp.x_dim();
    let raw = OrthoOperator::new(
        std::iter::once(crate::problems::bump(dgp.nuisance_input_center(), T::one()))
            .chain(std::iter::repeat_n(ScalarFn::Zero, d - 1))
            .collect(),
    );
    let n = frob_error(&raw, &OrthoOperator::zero(d), dgp, mc)?;
    if !(n.value > 0.0) {
        return Err(Error::Domain("operator bump has zero norm".into()));
    }
    let zero = OrthoOperator::zero(d);
    Ok((zero.plus_scaled(T::lit(1.0 / n.value), &raw)?, n))
}

/// Per-coordinate regressions of `x_j` on `φ(w)`; logistic for 0/1 coordinates.
pub fn fit_operator_models<T: Real>(
    feat: &Arc<RffMap<T>>,
    data: &[(Vec<T>, Vec<T>)],
    reg_scale: T,
) -> Result<Vec<FittedModel<T>>> {
    let first = data.first().ok_or(Error::EmptySample("estimate_operator"))?;
    let d = first.0.len();
    let as_samples: Vec<Sample<T>> = data.iter().map(|(x, w)| Sample::plm(x.clone(), w.clone(), T::zero())).collect();
    let binary = detect_binary_x(&as_samples);
    (0..d)
        .map(|j| {
            let pairs: Vec<(Vec<T>, T)> = data.iter().map(|(x, w)| (w.clone(), x[j])).collect();
            Ok(if binary[j] {
                FittedModel::Logistic(logistic_fit(feat, &pairs, reg_scale)?)
            } else {
                FittedModel::Ridge(ridge_fit(feat, &pairs, reg_scale)?)
            })
        })
        .collect()
}

/// Estimated operator from `(x, w)` pairs.
pub fn estimate_operator<T: Real>(
    feat: &Arc<RffMap<T>>,
    data: &[(Vec<T>, Vec<T>)],
    reg_scale: T,
) -> Result<OrthoOperator<T>> {
    Ok(OrthoOperator::new(
        fit_operator_models(feat, data, reg_scale)?.iter().map(FittedModel::to_scalar_fn).collect(),
    ))
}

/// One model document per representer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub representers: Vec<ModelDoc>,
}

impl OperatorDoc {
    pub fn from_models<T: Real>(models: &[FittedModel<T>]) -> Self {
        Self { representers: models.iter().map(ModelDoc::from_model).collect() }
    }

    pub fn to_operator<T: Real>(&self) -> Result<OrthoOperator<T>> {
        Ok(OrthoOperator::new(
            self.representers
                .iter()
                .map(|d| d.to_model().map(|m| m.to_scalar_fn()))
                .collect::<Result<_>>()?,
        ))
    }
}

/// `(Σ_j E[(γ_a^j(W) − γ_b^j(W))²])^{1/2}` over fresh draws.
pub fn frob_error<T: Real>(a: &OrthoOperator<T>, b: &OrthoOperator<T>, dgp: &Dgp<T>, mc: MonteCarlo) -> Result<NormEstimate> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("operator dims {} vs {}", a.dim(), b.dim())));
    }
    let mut rng = Rng::new(mc.seed).child_named("frob_error");
    let mut acc = MeanAccumulator::new(1);
    for _ in 0..mc.n {
        let v = dgp.draw_nuisance_input(&mut rng);
        let s: f64 = a
            .representers
            .iter()
            .zip(&b.representers)
            .map(|(x, y)| (x.eval(&v) - y.eval(&v)).to_f64_lossy().powi(2))
            .sum();
        acc.push(&[s]);
    }
    let (m, se) = (acc.mean()[0], acc.std_err()[0]);
    let (value, se) = if m > 0.0 { (m.sqrt(), se / (2.0 * m.sqrt())) } else { (0.0, 0.0) };
    Ok(NormEstimate { value, se, mc })
}

/// Score minus the operator applied to the nuisance gradient of the loss.
#[derive(Clone, Debug)]
pub struct NoOracle<T> {
    pub base: GradOracle<T>,
    pub gamma: OrthoOperator<T>,
}

impl<T: Real> NoOracle<T> {
    pub fn new(base: GradOracle<T>, gamma: OrthoOperator<T>) -> Result<Self> {
        if gamma.dim() != base.dim {
            return Err(Error::Dimension(format!("operator dim {} vs problem dim {}", gamma.dim(), base.dim)));
        }
        Ok(Self { base, gamma })
    }

    fn unsupported(&self) -> Error {
        Error::Unsupported(format!(
            "{} has no closed-form representer of the nuisance gradient",
            self.base.kind
        ))
    }

    pub fn no_score_into(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, out: &mut [T]) -> Result<()> {
        if self.gamma.is_zero() {
            return self.base.score_into(theta, g, z, out);
        }
        match g {
            NuisanceFn::PlmNonorth { g } => {
                if theta.len() != self.base.dim || z.x.len() != self.base.dim {
                    return Err(Error::Dimension("no_score: theta/x length".into()));
                }
                let r = z.y - g.eval(&z.w) - dot(theta, &z.x);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = -r * (z.x[j] - self.gamma.representers[j].eval(&z.w));
                }
                Ok(())
            }
            other => {
                other.expect_kind(self.base.kind)?;
                Err(self.unsupported())
            }
        }
    }

    pub fn no_score(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.base.dim];
        self.no_score_into(theta, g, z, &mut out)?;
        Ok(out)
    }

    /// `Γ∇_gℓ(θ, g; z)`, so that `score = no_score + correction`.
    pub fn correction(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>) -> Result<Vec<T>> {
        match g {
            NuisanceFn::PlmNonorth { g } => {
                let r = z.y - g.eval(&z.w) - dot(theta, &z.x);
                Ok(self.gamma.representers.iter().map(|f| -r * f.eval(&z.w)).collect())
            }
            _ => Err(self.unsupported()),
        }
    }
}

impl<T: Real> GradientOracle<T> for NoOracle<T> {
    fn kind(&self) -> ProblemKind {
        self.base.kind
    }

    fn dim(&self) -> usize {
        self.base.dim
    }

    fn gradient_into(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, out: &mut [T]) -> Result<()> {
        self.no_score_into(theta, g, z, out)
    }

    fn gradient_dirderiv(&self, theta: &[T], g: &NuisanceFn<T>, z: &Sample<T>, h: &NuisanceFn<T>) -> Result<Vec<T>> {
        if self.gamma.is_zero() {
            return self.base.dirderiv_score(theta, g, z, h);
        }
        match (g, h) {
            (NuisanceFn::PlmNonorth { .. }, NuisanceFn::PlmNonorth { g: hg }) => {
                let hv = hg.eval(&z.w);
                Ok((0..self.base.dim)
                    .map(|j| hv * (z.x[j] - self.gamma.representers[j].eval(&z.w)))
                    .collect())
            }
            _ => {
                h.expect_kind(self.base.kind)?;
                Err(self.unsupported())
            }
        }
    }
}

/// Streaming per-coordinate ridge estimate of `E[X | W]`.
#[derive(Clone, Debug)]
pub struct StreamingOperator<T> {
    parts: Vec<StreamFitState<T>>,
}

impl<T: Real> StreamingOperator<T> {
    pub fn new(d: usize, rff: Arc<RffMap<T>>, cfg: StreamConfig, binary: &[bool]) -> Result<Self> {
        let step = T::lit(cfg.step_size());
        let reg = T::lit(cfg.reg);
        let parts = (0..d)
            .map(|j| {
                let model = if binary.get(j).copied().unwrap_or(false) {
                    StreamModel::Logistic(LogisticModel::zeros(rff.clone(), reg))
                } else {
                    StreamModel::Ridge(RidgeModel::zeros(rff.clone(), reg))
                };
                StreamFitState::new(model, step, cfg.minibatch)
            })
            .collect::<Result<_>>()?;
        Ok(Self { parts })
    }

    pub fn set_step(&mut self, step: T) {
        for p in &mut self.parts {
            p.step = step;
        }
    }
}

impl<T: Real> Updater<T> for StreamingOperator<T> {
    type Output = OrthoOperator<T>;

    fn minibatch(&self) -> usize {
        self.parts.first().map_or(1, |p| p.minibatch)
    }

    fn update(&mut self, batch: &[Sample<T>]) -> Result<()> {
        for (j, st) in self.parts.iter_mut().enumerate() {
            if st.step == T::zero() {
                continue;
            }
            let pairs: Vec<(Vec<T>, T)> = batch.iter().map(|z| (z.w.clone(), z.x[j])).collect();
            let mut tmp = st.clone();
            tmp.minibatch = pairs.len();
            let mut next = crate::nuisance::sgd_step(tmp, &pairs)?;
            next.minibatch = st.minibatch;
            *st = next;
        }
        Ok(())
    }

    fn current(&self) -> OrthoOperator<T> {
        OrthoOperator::new(self.parts.iter().map(|p| p.model.to_scalar_fn()).collect())
    }
}
