use std::fmt;
use std::sync::Arc;

use crate::problems::ProblemKind;
use crate::{Error, Real, Result};

/// Anything that maps a nuisance input to a real prediction.
pub trait Predict<T>: Send + Sync + fmt::Debug {
    fn predict(&self, input: &[T]) -> T;
}

type Closure<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// One real-valued component of a nuisance function.
#[derive(Clone)]
pub enum ScalarFn<T> {
    Zero,
    Const(T),
    Analytic(Closure<T>),
    Model(Arc<dyn Predict<T>>),
    /// `base + scale · dir`
    Shifted { base: Arc<ScalarFn<T>>, scale: T, dir: Arc<ScalarFn<T>> },
}

impl<T: fmt::Debug> fmt::Debug for ScalarFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Zero => write!(f, "Zero"),
            ScalarFn::Const(c) => write!(f, "Const({c:?})"),
            ScalarFn::Analytic(_) => write!(f, "Analytic(..)"),
            ScalarFn::Model(m) => write!(f, "Model({m:?})"),
            ScalarFn::Shifted { base, scale, dir } => write!(f, "({base:?} + {scale:?}·{dir:?})"),
        }
    }
}

impl<T: Real> ScalarFn<T> {
    pub fn analytic(f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        ScalarFn::Analytic(Arc::new(f))
    }

    pub fn model(m: impl Predict<T> + 'static) -> Self {
        ScalarFn::Model(Arc::new(m))
    }

    #[inline]
    pub fn eval(&self, input: &[T]) -> T {
        match self {
            ScalarFn::Zero => T::zero(),
            ScalarFn::Const(c) => *c,
            ScalarFn::Analytic(f) => f(input),
            ScalarFn::Model(m) => m.predict(input),
            ScalarFn::Shifted { base, scale, dir } => base.eval(input) + *scale * dir.eval(input),
        }
    }

    /// `self + s · other`.
    pub fn plus_scaled(&self, s: T, other: &ScalarFn<T>) -> ScalarFn<T> {
        if matches!(other, ScalarFn::Zero) || s == T::zero() {
            return self.clone();
        }
        ScalarFn::Shifted {
            base: Arc::new(self.clone()),
            scale: s,
            dir: Arc::new(other.clone()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarFn::Zero)
    }
}

/// An element of the nuisance class for one problem kind.
#[derive(Clone, Debug)]
pub enum NuisanceFn<T> {
    PlmOrth { g_y: ScalarFn<T>, g_x: Vec<ScalarFn<T>> },
    PlmNonorth { g: ScalarFn<T> },
    CateUnres { out: ScalarFn<T>, prop: ScalarFn<T> },
    CateRes { g0: ScalarFn<T>, g1: ScalarFn<T>, prop: ScalarFn<T> },
    Crr { g0: ScalarFn<T>, g1: ScalarFn<T>, prop: ScalarFn<T> },
}

impl<T: Real> NuisanceFn<T> {
    pub fn kind(&self) -> ProblemKind {
        match self {
            NuisanceFn::PlmOrth { .. } => ProblemKind::PlmOrth,
            NuisanceFn::PlmNonorth { .. } => ProblemKind::PlmNonorth,
            NuisanceFn::CateUnres { .. } => ProblemKind::CateUnres,
            NuisanceFn::CateRes { .. } => ProblemKind::CateRes,
            NuisanceFn::Crr { .. } => ProblemKind::Crr,
        }
    }

    /// The all-zero nuisance of a kind; `d` is the target dimension.
    pub fn zero(kind: ProblemKind, d: usize) -> Self {
        let z = || ScalarFn::Zero;
        match kind {
            ProblemKind::PlmOrth => NuisanceFn::PlmOrth { g_y: z(), g_x: vec![z(); d] },
            ProblemKind::PlmNonorth => NuisanceFn::PlmNonorth { g: z() },
            ProblemKind::CateUnres => NuisanceFn::CateUnres { out: z(), prop: z() },
            ProblemKind::CateRes => NuisanceFn::CateRes { g0: z(), g1: z(), prop: z() },
            ProblemKind::Crr => NuisanceFn::Crr { g0: z(), g1: z(), prop: z() },
        }
    }

    /// Components in a fixed order with stable names.
    pub fn components(&self) -> Vec<(String, &ScalarFn<T>)> {
        match self {
            NuisanceFn::PlmOrth { g_y, g_x } => {
                let mut v = vec![("g_y".to_string(), g_y)];
                v.extend(g_x.iter().enumerate().map(|(j, f)| (format!("g_x{j}"), f)));
                v
            }
            NuisanceFn::PlmNonorth { g } => vec![("g".into(), g)],
            NuisanceFn::CateUnres { out, prop } => vec![("out".into(), out), ("prop".into(), prop)],
            NuisanceFn::CateRes { g0, g1, prop } | NuisanceFn::Crr { g0, g1, prop } => {
                vec![("g0".into(), g0), ("g1".into(), g1), ("prop".into(), prop)]
            }
        }
    }

    /// Componentwise `self + s · h`.
    pub fn plus_scaled(&self, s: T, h: &NuisanceFn<T>) -> Result<NuisanceFn<T>> {
        use NuisanceFn::*;
        let ps = |a: &ScalarFn<T>, b: &ScalarFn<T>| a.plus_scaled(s, b);
        Ok(match (self, h) {
            (PlmOrth { g_y, g_x }, PlmOrth { g_y: hy, g_x: hx }) => {
                if g_x.len() != hx.len() {
                    return Err(Error::Dimension(format!("g_x has {} components, h_x {}", g_x.len(), hx.len())));
                }
                PlmOrth {
                    g_y: ps(g_y, hy),
                    g_x: g_x.iter().zip(hx).map(|(a, b)| ps(a, b)).collect(),
                }
            }
            (PlmNonorth { g }, PlmNonorth { g: hg }) => PlmNonorth { g: ps(g, hg) },
            (CateUnres { out, prop }, CateUnres { out: ho, prop: hp }) => CateUnres {
                out: ps(out, ho),
                prop: ps(prop, hp),
            },
            (CateRes { g0, g1, prop }, CateRes { g0: a, g1: b, prop: c }) => CateRes {
                g0: ps(g0, a),
                g1: ps(g1, b),
                prop: ps(prop, c),
            },
            (Crr { g0, g1, prop }, Crr { g0: a, g1: b, prop: c }) => Crr {
                g0: ps(g0, a),
                g1: ps(g1, b),
                prop: ps(prop, c),
            },
            _ => {
                return Err(Error::KindMismatch {
                    expected: self.kind(),
                    found: h.kind(),
                })
            }
        })
    }

    /// `self − other` as a nuisance function.
    pub fn minus(&self, other: &NuisanceFn<T>) -> Result<NuisanceFn<T>> {
        self.plus_scaled(-T::one(), other)
    }

    pub fn expect_kind(&self, kind: ProblemKind) -> Result<()> {
        if self.kind() == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind,
                found: self.kind(),
            })
        }
    }
}
