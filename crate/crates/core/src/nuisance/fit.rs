use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::nuisance::{
    logistic_fit, median_heuristic, ridge_fit, sgd_step, Gamma, LogisticModel, RffMap, RidgeModel, StreamFitState,
    StreamModel, DEFAULT_MINIBATCH, DEFAULT_STEP_SCALE,
};
use crate::numkit::{Mat, Rng};
use crate::problems::{NuisanceFn, ProblemKind, Sample, ScalarFn};
use crate::{Error, Real, Result};

/// Which observed quantity a nuisance component regresses on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Response {
    Y,
    U,
    X(usize),
    Treat,
}

/// How one component is fit: its response, an optional treatment-arm filter, and whether it is a probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentSpec {
    pub name: String,
    pub response: Response,
    pub arm: Option<bool>,
    pub binary: bool,
}

impl ComponentSpec {
    fn new(name: impl Into<String>, response: Response, arm: Option<bool>, binary: bool) -> Self {
        Self { name: name.into(), response, arm, binary }
    }

    /// `(input, response)` for `z`, or `None` when `z` is outside this component's arm.
    pub fn pair<T: Real>(&self, kind: ProblemKind, z: &Sample<T>) -> Result<Option<(Vec<T>, T)>> {
        if let Some(arm) = self.arm {
            if z.treat != Some(arm) {
                return Ok(None);
            }
        }
        let v = match self.response {
            Response::Y => z.y,
            Response::U => z.u.ok_or_else(|| Error::MissingComponent("sample proxy u".into()))?,
            Response::X(j) => *z.x.get(j).ok_or_else(|| Error::Dimension(format!("x has no coordinate {j}")))?,
            Response::Treat => match z.treat {
                Some(true) => T::one(),
                Some(false) => T::zero(),
                None => return Err(Error::MissingComponent("sample treatment".into())),
            },
        };
        let input = if kind.is_plm() { z.w.clone() } else { z.x.clone() };
        Ok(Some((input, v)))
    }
}

/// Components to estimate for a problem. `binary_x[j]` marks 0/1 coordinates of `x`.
pub fn component_specs(kind: ProblemKind, d: usize, binary_x: &[bool]) -> Vec<ComponentSpec> {
    use Response::*;
    match kind {
        ProblemKind::PlmOrth => {
            let mut v = vec![ComponentSpec::new("g_y", Y, None, false)];
            v.extend((0..d).map(|j| ComponentSpec::new(format!("g_x{j}"), X(j), None, binary_x.get(j).copied().unwrap_or(false))));
            v
        }
        ProblemKind::PlmNonorth => vec![ComponentSpec::new("g", U, None, false)],
        ProblemKind::CateUnres => vec![
            ComponentSpec::new("out", Y, None, false),
            ComponentSpec::new("prop", Treat, None, true),
        ],
        ProblemKind::CateRes | ProblemKind::Crr => vec![
            ComponentSpec::new("g0", Y, Some(false), false),
            ComponentSpec::new("g1", Y, Some(true), false),
            ComponentSpec::new("prop", Treat, None, true),
        ],
    }
}

/// Coordinates of `x` that take both values 0 and 1 and nothing else in `samples`.
pub fn detect_binary_x<T: Real>(samples: &[Sample<T>]) -> Vec<bool> {
    let d = samples.first().map_or(0, |s| s.x.len());
    (0..d)
        .map(|j| {
            let all01 = samples.iter().all(|s| s.x[j] == T::zero() || s.x[j] == T::one());
            all01 && samples.iter().any(|s| s.x[j] == T::one()) && samples.iter().any(|s| s.x[j] == T::zero())
        })
        .collect()
}

/// Assembles a nuisance function from named components.
pub fn as_nuisance<T: Real>(models: &BTreeMap<String, ScalarFn<T>>, kind: ProblemKind, d: usize) -> Result<NuisanceFn<T>> {
    let get = |name: &str| {
        models
            .get(name)
            .cloned()
            .ok_or_else(|| Error::MissingComponent(format!("{kind} requires component {name:?}")))
    };
    Ok(match kind {
        ProblemKind::PlmOrth => NuisanceFn::PlmOrth {
            g_y: get("g_y")?,
            g_x: (0..d).map(|j| get(&format!("g_x{j}"))).collect::<Result<_>>()?,
        },
        ProblemKind::PlmNonorth => NuisanceFn::PlmNonorth { g: get("g")? },
        ProblemKind::CateUnres => NuisanceFn::CateUnres { out: get("out")?, prop: get("prop")? },
        ProblemKind::CateRes => NuisanceFn::CateRes { g0: get("g0")?, g1: get("g1")?, prop: get("prop")? },
        ProblemKind::Crr => NuisanceFn::Crr { g0: get("g0")?, g1: get("g1")?, prop: get("prop")? },
    })
}

/// Feature map and regularization settings for nuisance fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_components: usize,
    pub gamma: Gamma,
    pub reg_scale: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { n_components: 20, gamma: Gamma::Median, reg_scale: 0.01 }
    }
}

/// A fitted component model.
#[derive(Clone, Debug, PartialEq)]
pub enum FittedModel<T> {
    Ridge(RidgeModel<T>),
    Logistic(LogisticModel<T>),
}

impl<T: Real> FittedModel<T> {
    pub fn to_scalar_fn(&self) -> ScalarFn<T> {
        match self {
            FittedModel::Ridge(m) => ScalarFn::model(m.clone()),
            FittedModel::Logistic(m) => ScalarFn::model(m.clone()),
        }
    }
}

/// Batch-fitted nuisance with its component models.
#[derive(Clone, Debug)]
pub struct FittedNuisance<T> {
    pub kind: ProblemKind,
    pub dim: usize,
    pub models: BTreeMap<String, FittedModel<T>>,
}

impl<T: Real> FittedNuisance<T> {
    pub fn nuisance(&self) -> Result<NuisanceFn<T>> {
        let fns = self.models.iter().map(|(k, m)| (k.clone(), m.to_scalar_fn())).collect();
        as_nuisance(&fns, self.kind, self.dim)
    }
}

fn inputs_of<T: Real>(kind: ProblemKind, samples: &[Sample<T>]) -> Vec<Vec<T>> {
    samples
        .iter()
        .map(|z| if kind.is_plm() { z.w.clone() } else { z.x.clone() })
        .collect()
}

/// Fits every component of `kind` on `samples` with one shared feature map.
pub fn fit_nuisance<T: Real>(
    kind: ProblemKind,
    samples: &[Sample<T>],
    cfg: FitConfig,
    rng: &mut Rng,
) -> Result<FittedNuisance<T>> {
    if samples.is_empty() {
        return Err(Error::EmptySample("fit_nuisance"));
    }
    let d = samples[0].x.len();
    let rff = Arc::new(super::rff_fit(rng, &inputs_of(kind, samples), cfg.n_components, cfg.gamma)?);
    let mut models = BTreeMap::new();
    for spec in component_specs(kind, d, &detect_binary_x(samples)) {
        let mut data = Vec::new();
        for z in samples {
            if let Some(p) = spec.pair(kind, z)? {
                data.push(p);
            }
        }
        if data.is_empty() {
            return Err(Error::EmptySample("no samples in treatment arm"));
        }
        let reg = T::lit(cfg.reg_scale);
        let m = if spec.binary {
            FittedModel::Logistic(logistic_fit(&rff, &data, reg)?)
        } else {
            FittedModel::Ridge(ridge_fit(&rff, &data, reg)?)
        };
        models.insert(spec.name, m);
    }
    Ok(FittedNuisance { kind, dim: d, models })
}

/// Incrementally refined estimate fed from a sample stream.
pub trait Updater<T: Real>: Send {
    type Output;
    fn minibatch(&self) -> usize;
    fn update(&mut self, batch: &[Sample<T>]) -> Result<()>;
    fn current(&self) -> Self::Output;
}

/// Streaming settings: feature count, bandwidth, step, minibatch, ridge penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub n_components: usize,
    pub gamma: Gamma,
    /// Defaults to `0.05 / n_components`.
    pub step: Option<f64>,
    pub minibatch: usize,
    pub reg: f64,
    /// Samples drawn up front to resolve a median bandwidth.
    pub warmup: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self { n_components: 20, gamma: Gamma::Median, step: None, minibatch: DEFAULT_MINIBATCH, reg: 0.0, warmup: 200 }
    }
}

impl StreamConfig {
    pub fn step_size(&self) -> f64 {
        self.step.unwrap_or(DEFAULT_STEP_SCALE / self.n_components as f64)
    }
}

/// Per-component streaming SGD for one problem, all components sharing one feature map.
#[derive(Clone, Debug)]
pub struct StreamingNuisance<T> {
    kind: ProblemKind,
    dim: usize,
    parts: Vec<(ComponentSpec, StreamFitState<T>)>,
}

impl<T: Real> StreamingNuisance<T> {
    /// Starts every component at zero (probability components at ½).
    pub fn new(kind: ProblemKind, dim: usize, rff: Arc<RffMap<T>>, cfg: StreamConfig) -> Result<Self> {
        let step = T::lit(cfg.step_size());
        let reg = T::lit(cfg.reg);
        let parts = component_specs(kind, dim, &[])
            .into_iter()
            .map(|spec| {
                let model = if spec.binary {
                    StreamModel::Logistic(LogisticModel::zeros(rff.clone(), reg))
                } else {
                    StreamModel::Ridge(RidgeModel::zeros(rff.clone(), reg))
                };
                Ok((spec, StreamFitState::new(model, step, cfg.minibatch)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { kind, dim, parts })
    }

    /// Builds the feature map from a warm-up sample.
    pub fn from_warmup(kind: ProblemKind, dim: usize, warmup: &[Sample<T>], cfg: StreamConfig, rng: &mut Rng) -> Result<Self> {
        let inputs = inputs_of(kind, warmup);
        let gamma = match cfg.gamma {
            Gamma::Fixed(g) => g,
            Gamma::Median => median_heuristic(&inputs)?,
        };
        let d_in = inputs.first().map(|v| v.len()).ok_or(Error::EmptySample("stream warm-up"))?;
        let rff = Arc::new(RffMap::new(rng, d_in, cfg.n_components, gamma)?);
        Self::new(kind, dim, rff, cfg)
    }

    pub fn states(&self) -> impl Iterator<Item = (&str, &StreamFitState<T>)> {
        self.parts.iter().map(|(s, st)| (s.name.as_str(), st))
    }

    /// Overwrites the step size of every component.
    pub fn set_step(&mut self, step: T) {
        for (_, st) in &mut self.parts {
            st.step = step;
        }
    }
}

impl<T: Real> Updater<T> for StreamingNuisance<T> {
    type Output = NuisanceFn<T>;

    fn minibatch(&self) -> usize {
        self.parts.first().map_or(1, |p| p.1.minibatch)
    }

    fn update(&mut self, batch: &[Sample<T>]) -> Result<()> {
        if self.parts.iter().any(|(_, st)| st.step == T::zero()) {
            return Ok(());
        }
        for (spec, st) in &mut self.parts {
            let mut pairs = Vec::with_capacity(batch.len());
            for z in batch {
                if let Some(p) = spec.pair(self.kind, z)? {
                    pairs.push(p);
                }
            }
            if pairs.is_empty() {
                continue;
            }
            // Arm-filtered components see partial batches.
            let mut tmp = st.clone();
            tmp.minibatch = pairs.len();
            let mut next = sgd_step(tmp, &pairs)?;
            next.minibatch = st.minibatch;
            *st = next;
        }
        Ok(())
    }

    fn current(&self) -> NuisanceFn<T> {
        let fns = self
            .parts
            .iter()
            .map(|(s, st)| (s.name.clone(), st.model.to_scalar_fn()))
            .collect();
        as_nuisance(&fns, self.kind, self.dim).expect("component set matches problem kind")
    }
}

/// Serialized form of one fitted component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub kind: String,
    pub gamma: f64,
    pub frequencies: Vec<Vec<f64>>,
    pub phases: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub reg: f64,
}

/// All components of a fitted nuisance, keyed by component name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceDoc {
    pub problem: ProblemKind,
    pub dim: usize,
    pub components: BTreeMap<String, ModelDoc>,
}

fn f<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

impl ModelDoc {
    pub fn from_model<T: Real>(m: &FittedModel<T>) -> Self {
        let (kind, rff, w, b, reg) = match m {
            FittedModel::Ridge(m) => ("ridge", &m.rff, &m.weights, m.intercept, m.reg),
            FittedModel::Logistic(m) => ("logistic", &m.rff, &m.weights, m.intercept, m.reg),
        };
        let fr = rff.frequencies();
        Self {
            kind: kind.into(),
            gamma: rff.gamma().to_f64_lossy(),
            frequencies: (0..fr.rows()).map(|i| f(fr.row(i))).collect(),
            phases: f(rff.phases()),
            weights: f(w),
            intercept: b.to_f64_lossy(),
            reg: reg.to_f64_lossy(),
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<FittedModel<T>> {
        let rows: Vec<Vec<T>> = self.frequencies.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect();
        if rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(Error::Dimension("ragged frequency matrix".into()));
        }
        let rff = Arc::new(RffMap::from_parts(
            T::lit(self.gamma),
            Mat::from_rows(&rows),
            self.phases.iter().map(|&v| T::lit(v)).collect(),
        )?);
        if self.weights.len() != rff.n_components() {
            return Err(Error::Dimension(format!("{} weights for {} features", self.weights.len(), rff.n_components())));
        }
        let weights = self.weights.iter().map(|&v| T::lit(v)).collect();
        let (intercept, reg) = (T::lit(self.intercept), T::lit(self.reg));
        match self.kind.as_str() {
            "ridge" => Ok(FittedModel::Ridge(RidgeModel { rff, weights, intercept, reg })),
            "logistic" => Ok(FittedModel::Logistic(LogisticModel { rff, weights, intercept, reg })),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }
}

impl NuisanceDoc {
    pub fn from_fitted<T: Real>(n: &FittedNuisance<T>) -> Self {
        Self {
            problem: n.kind,
            dim: n.dim,
            components: n.models.iter().map(|(k, m)| (k.clone(), ModelDoc::from_model(m))).collect(),
        }
    }

    pub fn to_fitted<T: Real>(&self) -> Result<FittedNuisance<T>> {
        let models = self
            .components
            .iter()
            .map(|(k, d)| Ok((k.clone(), d.to_model()?)))
            .collect::<Result<_>>()?;
        Ok(FittedNuisance { kind: self.problem, dim: self.dim, models })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Predict;
    use crate::simdata::{Dgp, PlmConfig};

    fn samples(n: usize, seed: u64) -> Vec<Sample<f64>> {
        let dgp = Dgp::plm(PlmConfig::standard(0.5)).unwrap();
        let mut rng = Rng::new(seed);
        (0..n).map(|_| dgp.draw(&mut rng)).collect()
    }

    #[test]
    fn missing_component() {
        let mut m = BTreeMap::new();
        m.insert("g_x0".to_string(), ScalarFn::<f64>::Zero);
        m.insert("g_x1".to_string(), ScalarFn::Zero);
        assert!(matches!(as_nuisance(&m, ProblemKind::PlmOrth, 2), Err(Error::MissingComponent(_))));
    }

    #[test]
    fn wiring_passes_through() {
        let s = samples(300, 1);
        let fit = fit_nuisance(ProblemKind::PlmNonorth, &s, FitConfig::default(), &mut Rng::new(2)).unwrap();
        let NuisanceFn::PlmNonorth { g } = fit.nuisance().unwrap() else { panic!() };
        let FittedModel::Ridge(m) = &fit.models["g"] else { panic!() };
        for z in s.iter().take(100) {
            assert_eq!(g.eval(&z.w), m.predict(&z.w));
        }
    }

    #[test]
    fn json_round_trip() {
        let s = samples(200, 3);
        let fit = fit_nuisance(ProblemKind::PlmOrth, &s, FitConfig::default(), &mut Rng::new(4)).unwrap();
        let doc = NuisanceDoc::from_fitted(&fit);
        let text = serde_json::to_string(&doc).unwrap();
        let back: NuisanceDoc = serde_json::from_str(&text).unwrap();
        let re = back.to_fitted::<f64>().unwrap();
        let (a, b) = (fit.nuisance().unwrap(), re.nuisance().unwrap());
        let NuisanceFn::PlmOrth { g_y: ay, .. } = a else { panic!() };
        let NuisanceFn::PlmOrth { g_y: by, .. } = b else { panic!() };
        for z in &s[..20] {
            assert!((ay.eval(&z.w) - by.eval(&z.w)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_step_updater_is_frozen() {
        let s = samples(64, 5);
        let cfg = StreamConfig { minibatch: 32, ..StreamConfig::default() };
        let mut up = StreamingNuisance::from_warmup(ProblemKind::PlmNonorth, 2, &s, cfg, &mut Rng::new(1)).unwrap();
        up.set_step(0.0);
        let before = format!("{:?}", up.states().collect::<Vec<_>>());
        up.update(&s[..32]).unwrap();
        assert_eq!(before, format!("{:?}", up.states().collect::<Vec<_>>()));
    }
}
