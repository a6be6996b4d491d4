use serde::{Deserialize, Serialize};

use crate::numkit::{stats::median, Mat, Rng};
use crate::{Error, Real, Result};

/// Kernel bandwidth choice for `exp(−γ‖w − w′‖²)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    Fixed(f64),
    /// `1 / median ‖wᵢ − wⱼ‖²` over the fitting sample.
    #[default]
    Median,
}

/// Frozen random Fourier feature map `φ(w) = √(2/n)·cos(Ωw + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RffMap<T> {
    gamma: T,
    frequencies: Mat<T>,
    phases: Vec<T>,
    scale: T,
}

const MEDIAN_POINTS: usize = 400;

pub fn median_heuristic<T: Real>(w: &[Vec<T>]) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::EmptySample("median heuristic needs at least two points"));
    }
    let pts = &w[..w.len().min(MEDIAN_POINTS)];
    let mut d2 = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
    for i in 0..pts.len() {
        for j in 0..i {
            d2.push(crate::scalar::dist2(&pts[i], &pts[j]).to_f64_lossy().powi(2));
        }
    }
    let m = median(&d2);
    if m > 0.0 {
        Ok(1.0 / m)
    } else {
        Ok(1.0)
    }
}

impl<T: Real> RffMap<T> {
    /// Draws a map for inputs of dimension `input_dim` with a known bandwidth.
    pub fn new(rng: &mut Rng, input_dim: usize, n_components: usize, gamma: f64) -> Result<Self> {
        if n_components == 0 {
            return Err(Error::InvalidArgument("n_components must be >= 1".into()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        let sd = T::lit((2.0 * gamma).sqrt());
        let data = (0..n_components * input_dim).map(|_| rng.normal(T::zero(), sd)).collect();
        let frequencies = Mat::from_row_major(n_components, input_dim, data)?;
        let phases = (0..n_components)
            .map(|_| T::lit(rng.uniform() * std::f64::consts::TAU))
            .collect();
        Ok(Self {
            gamma: T::lit(gamma),
            frequencies,
            phases,
            scale: T::lit((2.0 / n_components as f64).sqrt()),
        })
    }

    pub fn from_parts(gamma: T, frequencies: Mat<T>, phases: Vec<T>) -> Result<Self> {
        if frequencies.rows() != phases.len() || phases.is_empty() {
            return Err(Error::Dimension(format!(
                "{} frequency rows vs {} phases",
                frequencies.rows(),
                phases.len()
            )));
        }
        let scale = T::lit((2.0 / phases.len() as f64).sqrt());
        Ok(Self { gamma, frequencies, phases, scale })
    }

    pub fn n_components(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.cols()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn frequencies(&self) -> &Mat<T> {
        &self.frequencies
    }

    pub fn phases(&self) -> &[T] {
        &self.phases
    }

    pub fn features_into(&self, w: &[T], out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            let s = crate::scalar::dot(self.frequencies.row(k), w) + self.phases[k];
            *o = self.scale * s.cos();
        }
    }

    pub fn features(&self, w: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_components()];
        self.features_into(w, &mut out);
        out
    }
}

/// Fits a feature map on `w_samples`, resolving the bandwidth if requested.
pub fn rff_fit<T: Real>(rng: &mut Rng, w_samples: &[Vec<T>], n_components: usize, gamma: Gamma) -> Result<RffMap<T>> {
    let first = w_samples
        .first()
        .ok_or(Error::EmptySample("rff_fit needs samples to infer input dimension"))?;
    let g = match gamma {
        Gamma::Fixed(g) => g,
        Gamma::Median => median_heuristic(w_samples)?,
    };
    RffMap::new(rng, first.len(), n_components, g)
}
