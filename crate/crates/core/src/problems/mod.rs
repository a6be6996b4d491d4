//! Loss families, their scores and nuisance derivatives, plus ground truth for simulated models.

mod func;
mod norm;
mod oracle;
mod truth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use func::{NuisanceFn, Predict, ScalarFn};
pub use norm::{nuisance_norm, NormEstimate};
pub use oracle::{GradOracle, GradientOracle, DEFAULT_CLIP};
pub use truth::{
    bump, diagnostics, population_gradient, random_directions, target, true_nuisance, unit_direction, DiagReport,
    TARGET_MC,
};

use crate::Error;

/// Stable problem identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    PlmOrth,
    PlmNonorth,
    CateUnres,
    CateRes,
    Crr,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::PlmOrth,
        ProblemKind::PlmNonorth,
        ProblemKind::CateUnres,
        ProblemKind::CateRes,
        ProblemKind::Crr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::PlmOrth => "plm_orth",
            ProblemKind::PlmNonorth => "plm_nonorth",
            ProblemKind::CateUnres => "cate_unres",
            ProblemKind::CateRes => "cate_res",
            ProblemKind::Crr => "crr",
        }
    }

    pub fn is_plm(self) -> bool {
        matches!(self, ProblemKind::PlmOrth | ProblemKind::PlmNonorth)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown problem id {s:?}")))
    }
}

/// One observation.
///
/// PLM problems read `(x, w, y)` and nuisances take `w`; the causal problems read
/// `(x, treat, y)` and nuisances take `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Real")]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub w: Vec<T>,
    pub y: T,
    #[serde(default)]
    pub treat: Option<bool>,
    #[serde(default)]
    pub u: Option<T>,
    /// Structural outcome noise, kept for identity checks on simulated data.
    #[serde(default)]
    pub eps: Option<T>,
}

impl<T: crate::Real> Sample<T> {
    pub fn plm(x: Vec<T>, w: Vec<T>, y: T) -> Self {
        Self { x, w, y, treat: None, u: None, eps: None }
    }

    pub fn causal(x: Vec<T>, treat: bool, y: T) -> Self {
        Self { x, w: Vec::new(), y, treat: Some(treat), u: None, eps: None }
    }

    pub fn is_finite(&self) -> bool {
        crate::scalar::all_finite(&self.x)
            && crate::scalar::all_finite(&self.w)
            && self.y.is_finite()
            && self.u.is_none_or(|u| u.is_finite())
    }
}
