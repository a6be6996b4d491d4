use crate::nuisance::{LogisticModel, RidgeModel};
use crate::problems::ScalarFn;
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum StreamModel<T> {
    Ridge(RidgeModel<T>),
    Logistic(LogisticModel<T>),
}

impl<T: Real> StreamModel<T> {
    pub fn to_scalar_fn(&self) -> ScalarFn<T> {
        match self {
            StreamModel::Ridge(m) => ScalarFn::model(m.clone()),
            StreamModel::Logistic(m) => ScalarFn::model(m.clone()),
        }
    }
}

/// Mutable state of a minibatch SGD fit.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFitState<T> {
    pub model: StreamModel<T>,
    pub step: T,
    pub iter: usize,
    pub minibatch: usize,
}

/// Default streaming minibatch size.
pub const DEFAULT_MINIBATCH: usize = 32;
/// Default streaming step numerator; the step is this over the number of features.
pub const DEFAULT_STEP_SCALE: f64 = 0.05;

impl<T: Real> StreamFitState<T> {
    pub fn new(model: StreamModel<T>, step: T, minibatch: usize) -> Result<Self> {
        // Zero is allowed and freezes the state.
        if !(step >= T::zero() && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("streaming step must be finite and >= 0, got {step}")));
        }
        if minibatch == 0 {
            return Err(Error::InvalidArgument("minibatch must be >= 1".into()));
        }
        Ok(Self { model, step, iter: 0, minibatch })
    }

    fn check_batch<V>(&self, batch: &[V]) -> Result<()> {
        if batch.len() != self.minibatch {
            return Err(Error::Dimension(format!(
                "batch of {} rows for minibatch size {}",
                batch.len(),
                self.minibatch
            )));
        }
        Ok(())
    }
}

fn apply<T: Real>(weights: &mut [T], intercept: &mut T, step: T, grad: (Vec<T>, T)) {
    for (b, g) in weights.iter_mut().zip(grad.0) {
        *b -= step * g;
    }
    *intercept -= step * grad.1;
}

/// One SGD step on the ridge objective evaluated on `batch`.
pub fn ridge_sgd_step<T: Real>(mut state: StreamFitState<T>, batch: &[(Vec<T>, T)]) -> Result<StreamFitState<T>> {
    state.check_batch(batch)?;
    let step = state.step;
    match &mut state.model {
        StreamModel::Ridge(m) => {
            let g = m.objective_gradient(batch);
            apply(&mut m.weights, &mut m.intercept, step, g);
        }
        StreamModel::Logistic(_) => return Err(Error::InvalidArgument("ridge step on a logistic model".into())),
    }
    state.iter += 1;
    Ok(state)
}

/// One SGD step on the penalized logistic objective evaluated on `batch`.
pub fn logistic_sgd_step<T: Real>(mut state: StreamFitState<T>, batch: &[(Vec<T>, T)]) -> Result<StreamFitState<T>> {
    state.check_batch(batch)?;
    let step = state.step;
    match &mut state.model {
        StreamModel::Logistic(m) => {
            let g = m.objective_gradient(batch);
            apply(&mut m.weights, &mut m.intercept, step, g);
        }
        StreamModel::Ridge(_) => return Err(Error::InvalidArgument("logistic step on a ridge model".into())),
    }
    state.iter += 1;
    Ok(state)
}

/// Dispatches to the step matching the model type.
pub fn sgd_step<T: Real>(state: StreamFitState<T>, batch: &[(Vec<T>, T)]) -> Result<StreamFitState<T>> {
    match state.model {
        StreamModel::Ridge(_) => ridge_sgd_step(state, batch),
        StreamModel::Logistic(_) => logistic_sgd_step(state, batch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{ridge_fit, RffMap};
    use crate::numkit::Rng;
    use crate::problems::Predict;
    use std::sync::Arc;

    type Pairs = Vec<(Vec<f64>, f64)>;

    fn setup() -> (Arc<RffMap<f64>>, Pairs) {
        let rff = Arc::new(RffMap::new(&mut Rng::new(3), 1, 10, 1.0).unwrap());
        let batch: Vec<_> = (0..8).map(|i| (vec![i as f64 * 0.3], (i as f64 * 0.3).cos())).collect();
        (rff, batch)
    }

    #[test]
    fn perfect_fit_is_fixed_point() {
        let (rff, batch) = setup();
        let mut m = RidgeModel::zeros(rff, 0.0);
        m.weights[0] = 0.7;
        m.intercept = -0.2;
        let batch: Vec<_> = batch.iter().map(|(w, _)| (w.clone(), m.predict(w))).collect();
        let s = StreamFitState::new(StreamModel::Ridge(m.clone()), 0.1, 8).unwrap();
        let s = ridge_sgd_step(s, &batch).unwrap();
        assert_eq!(s.model, StreamModel::Ridge(m));
        assert_eq!(s.iter, 1);
    }

    #[test]
    fn objective_nonincreasing_on_repeated_batch() {
        let (rff, batch) = setup();
        let mut s = StreamFitState::new(StreamModel::Ridge(RidgeModel::zeros(rff, 0.01)), 0.05, 8).unwrap();
        let obj = |s: &StreamFitState<f64>| match &s.model {
            StreamModel::Ridge(m) => m.objective(&batch),
            _ => unreachable!(),
        };
        let mut prev = obj(&s);
        for _ in 0..100 {
            s = ridge_sgd_step(s, &batch).unwrap();
            let cur = obj(&s);
            assert!(cur <= prev + 1e-15);
            prev = cur;
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let (rff, batch) = setup();
        let s = StreamFitState::new(StreamModel::Ridge(RidgeModel::zeros(rff, 0.01)), 0.05, 8).unwrap();
        assert_eq!(ridge_sgd_step(s.clone(), &batch).unwrap(), ridge_sgd_step(s.clone(), &batch).unwrap());
        assert!(ridge_sgd_step(s, &batch[..3]).is_err());
    }

    #[test]
    fn decaying_step_approaches_batch_solution() {
        let rff = Arc::new(RffMap::new(&mut Rng::new(3), 1, 10, 1.0).unwrap());
        let draw = |rng: &mut Rng| {
            let w = rng.uniform_range(-2.0, 2.0);
            (vec![w], w.sin() + 0.3 * rng.standard_normal())
        };
        let mut rng = Rng::new(9);
        let big: Vec<_> = (0..20_000).map(|_| draw(&mut rng)).collect();
        let batch_fit = ridge_fit(&rff, &big, 0.01).unwrap();
        let grid: Vec<f64> = (0..41).map(|i| -2.0 + i as f64 * 0.1).collect();
        let dist = |s: &StreamFitState<f64>| match &s.model {
            StreamModel::Ridge(m) => grid.iter().map(|&w| (m.predict(&[w]) - batch_fit.predict(&[w])).powi(2)).sum::<f64>(),
            _ => unreachable!(),
        };
        let checks = [100usize, 1_000, 10_000];
        let mut totals = [0.0; 3];
        for seed in 0..10 {
            let mut rng = Rng::new(100 + seed);
            let mut s = StreamFitState::new(StreamModel::Ridge(RidgeModel::zeros(rff.clone(), 0.0)), 1.0, 8).unwrap();
            for t in 1..=checks[2] {
                s.step = 0.3 / (1.0 + t as f64 / 200.0).sqrt();
                let batch: Vec<_> = (0..8).map(|_| draw(&mut rng)).collect();
                s = ridge_sgd_step(s, &batch).unwrap();
                if let Some(k) = checks.iter().position(|&c| c == t) {
                    totals[k] += dist(&s);
                }
            }
        }
        assert!(totals[2] < totals[1] && totals[1] < totals[0], "{totals:?}");
    }
}
