use crate::{Error, Real, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient `(f(x+h·e_i) − f(x−h·e_i)) / 2h`.
pub fn finite_diff_grad<T: Real>(f: impl Fn(&[T]) -> T, at: &[T], h: T) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let xi = x[i];
        x[i] = xi + h;
        let fp = f(&x);
        x[i] = xi - h;
        let fm = f(&x);
        x[i] = xi;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEval { coord: i });
        }
        grad.push((fp - fm) / (h + h));
    }
    Ok(grad)
}

/// Central difference of a scalar function of one variable.
pub fn finite_diff_scalar<T: Real>(f: impl Fn(T) -> T, at: T, h: T) -> T {
    (f(at + h) - f(at - h)) / (h + h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_grad(|x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]), &[1.0, -2.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-6 && (g[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_gives_zero() {
        let g = finite_diff_grad(|_: &[f64]| 3.0, &[0.3, 0.1, 9.0], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_and_bad_step_are_errors() {
        let e = finite_diff_grad(|x: &[f64]| if x[1] > 0.0 { f64::NAN } else { 0.0 }, &[0.0, 0.0], 1e-5);
        assert!(matches!(e, Err(Error::NonFiniteEval { coord: 1 })));
        assert!(finite_diff_grad(|_: &[f64]| 0.0, &[0.0], 0.0).is_err());
    }

    #[test]
    fn smooth_function_matches_analytic_gradient() {
        let f = |x: &[f64]| (x[0] * x[1]).sin() + x[0].exp() * x[2];
        let at = [0.3f64, -0.7, 1.2];
        let analytic = [
            (at[0] * at[1]).cos() * at[1] + at[0].exp() * at[2],
            (at[0] * at[1]).cos() * at[0],
            at[0].exp(),
        ];
        let g = finite_diff_grad(f, &at, 1e-5).unwrap();
        let scale = 1.0 + analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(analytic) {
            assert!((a - b).abs() <= 1e-4 * scale);
        }
    }
}
