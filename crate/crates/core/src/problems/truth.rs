use serde::{Deserialize, Serialize};

use crate::numkit::{max_eig_sym, min_eig_sym, solve_spd, stats::MeanAccumulator, Mat, MonteCarlo, Rng};
use crate::problems::{nuisance_norm, GradOracle, NormEstimate, NuisanceFn, ProblemKind, Sample, ScalarFn};
use crate::scalar::{dot, norm_inf};
use crate::simdata::Dgp;
use crate::{Error, Real, Result};

/// Monte-Carlo budget used when the target has no closed form.
pub const TARGET_MC: MonteCarlo = MonteCarlo { n: 50_000, seed: 0x007a_46e7 };

fn unsupported<T>(p: ProblemKind, what: &str) -> Result<T> {
    Err(Error::Unsupported(format!("{what} for {p} under this data model")))
}

/// The true nuisance `g₀` of problem `p` under `dgp`.
pub fn true_nuisance<T: Real>(p: &GradOracle<T>, dgp: &Dgp<T>) -> Result<NuisanceFn<T>> {
    match (p.kind, dgp) {
        (ProblemKind::PlmOrth, Dgp::Plm(d)) => {
            let cfg = d.cfg.clone();
            let g_x = (0..cfg.dim())
                .map(|j| {
                    let c = cfg.clone();
                    ScalarFn::analytic(move |w: &[T]| c.cond_mean_x(w)[j])
                })
                .collect();
            let g_y = ScalarFn::analytic(move |w: &[T]| dot(&cfg.theta0, &cfg.cond_mean_x(w)) + cfg.alpha0(w));
            Ok(NuisanceFn::PlmOrth { g_y, g_x })
        }
        (ProblemKind::PlmNonorth, Dgp::Plm(d)) => {
            let a = d.cfg.alpha;
            Ok(NuisanceFn::PlmNonorth { g: ScalarFn::analytic(move |w: &[T]| a.eval(w)) })
        }
        (ProblemKind::PlmNonorth, Dgp::SemiSynthetic(s)) => {
            let a = s.alpha;
            Ok(NuisanceFn::PlmNonorth { g: ScalarFn::analytic(move |w: &[T]| a.eval(w)) })
        }
        (ProblemKind::CateUnres, Dgp::Causal(c)) => {
            let (c1, c2) = (c.clone(), c.clone());
            Ok(NuisanceFn::CateUnres {
                out: ScalarFn::analytic(move |x: &[T]| {
                    let e = c1.propensity(x);
                    e * c1.mu1(x) + (T::one() - e) * c1.mu0(x)
                }),
                prop: ScalarFn::analytic(move |x: &[T]| c2.propensity(x)),
            })
        }
        (ProblemKind::CateRes | ProblemKind::Crr, Dgp::Causal(c)) => {
            let (c0, c1, c2) = (c.clone(), c.clone(), c.clone());
            let g0 = ScalarFn::analytic(move |x: &[T]| c0.mu0(x));
            let g1 = ScalarFn::analytic(move |x: &[T]| c1.mu1(x));
            let prop = ScalarFn::analytic(move |x: &[T]| c2.propensity(x));
            Ok(if p.kind == ProblemKind::Crr {
                NuisanceFn::Crr { g0, g1, prop }
            } else {
                NuisanceFn::CateRes { g0, g1, prop }
            })
        }
        (k, _) => unsupported(k, "no analytic nuisance"),
    }
}

/// Minimizer of the empirical risk `θ ↦ mean ℓ(θ, g; zᵢ)` by damped Newton steps on the full batch.
pub fn minimize_risk<T: Real>(p: &GradOracle<T>, g: &NuisanceFn<T>, samples: &[Sample<T>]) -> Result<Vec<T>> {
    if samples.is_empty() {
        return Err(Error::EmptySample("minimize_risk"));
    }
    let d = p.dim;
    let n = T::from_usize_lossy(samples.len());
    let mean_loss = |th: &[T]| -> Result<T> {
        let mut s = T::zero();
        for z in samples {
            s += p.loss(th, g, z)?;
        }
        Ok(s / n)
    };
    let mean_score = |th: &[T]| -> Result<Vec<T>> {
        let mut acc = vec![T::zero(); d];
        let mut buf = vec![T::zero(); d];
        for z in samples {
            p.score_into(th, g, z, &mut buf)?;
            for j in 0..d {
                acc[j] += buf[j];
            }
        }
        Ok(acc.into_iter().map(|v| v / n).collect())
    };
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e3));
    let h = T::epsilon().cbrt();
    let mut theta = vec![T::zero(); d];
    for _ in 0..200 {
        let grad = mean_score(&theta)?;
        if norm_inf(&grad) <= tol {
            return Ok(theta);
        }
        let mut hess = Mat::zeros(d, d);
        for j in 0..d {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[j] += h;
            b[j] -= h;
            let (sa, sb) = (mean_score(&a)?, mean_score(&b)?);
            for i in 0..d {
                hess[(i, j)] = (sa[i] - sb[i]) / (h + h);
            }
        }
        let sym = Mat::from_fn(d, d, |i, j| T::lit(0.5) * (hess[(i, j)] + hess[(j, i)]));
        let dir = solve_spd(&sym, &grad).unwrap_or_else(|_| grad.clone());
        let f0 = mean_loss(&theta)?;
        let slope = dot(&grad, &dir);
        let mut t = T::one();
        let mut next;
        loop {
            next = theta.iter().zip(&dir).map(|(&a, &b)| a - t * b).collect::<Vec<_>>();
            match mean_loss(&next) {
                Ok(f) if f <= f0 - T::lit(1e-4) * t * slope => break,
                _ if t < T::lit(1e-12) => break,
                _ => t *= T::lit(0.5),
            }
        }
        if next == theta {
            return Ok(theta);
        }
        theta = next;
    }
    Err(Error::NoConvergence { what: "full-batch target", iters: 200 })
}

/// The population minimizer `θ⋆` of `L(·, g₀)`.
pub fn target<T: Real>(p: &GradOracle<T>, dgp: &Dgp<T>) -> Result<Vec<T>> {
    match (p.kind.is_plm(), dgp) {
        (true, Dgp::Plm(d)) => Ok(d.cfg.theta0.clone()),
        (true, Dgp::SemiSynthetic(s)) => Ok(s.theta0.clone()),
        (false, Dgp::Causal(_)) => {
            let g0 = true_nuisance(p, dgp)?;
            let mut rng = Rng::new(TARGET_MC.seed).child_named("target");
            let samples: Vec<_> = (0..TARGET_MC.n).map(|_| dgp.draw(&mut rng)).collect();
            minimize_risk(p, &g0, &samples)
        }
        _ => unsupported(p.kind, "no target"),
    }
}

/// Closed-form `∇_θ L(θ, g₀)` for the Gaussian partially linear model.
pub fn population_gradient<T: Real>(p: &GradOracle<T>, theta: &[T], dgp: &Dgp<T>) -> Result<Vec<T>> {
    let cfg = match dgp.as_plm() {
        Some(c) => c,
        None => return unsupported(p.kind, "no analytic population gradient"),
    };
    let m = match p.kind {
        ProblemKind::PlmNonorth => cfg.second_moment_x(),
        ProblemKind::PlmOrth => cfg.residual_x_second_moment(),
        k => return unsupported(k, "no analytic population gradient"),
    };
    let delta: Vec<T> = theta.iter().zip(&cfg.theta0).map(|(&a, &b)| a - b).collect();
    Ok(m.matvec(&delta))
}

/// Gaussian bump `exp(−‖v − center‖² / (2·width²))`.
pub fn bump<T: Real>(center: Vec<T>, width: T) -> ScalarFn<T> {
    let denom = T::lit(2.0) * width * width;
    ScalarFn::analytic(move |v: &[T]| {
        let s: T = v.iter().zip(&center).map(|(&a, &c)| (a - c) * (a - c)).sum();
        (-s / denom).exp()
    })
}

fn shape<T: Real>(kind: ProblemKind, d: usize, parts: &[ScalarFn<T>]) -> NuisanceFn<T> {
    let z = ScalarFn::Zero;
    let f = |i: usize| parts.get(i).cloned().unwrap_or(ScalarFn::Zero);
    match kind {
        ProblemKind::PlmOrth => NuisanceFn::PlmOrth {
            g_y: f(0),
            g_x: (0..d).map(|j| f(1 + j)).collect(),
        },
        ProblemKind::PlmNonorth => NuisanceFn::PlmNonorth { g: f(0) },
        ProblemKind::CateUnres => NuisanceFn::CateUnres { out: f(0), prop: z },
        ProblemKind::CateRes => NuisanceFn::CateRes { g0: f(0), g1: f(1), prop: z },
        ProblemKind::Crr => NuisanceFn::Crr { g0: f(0), g1: f(1), prop: z },
    }
}

fn normalize<T: Real>(
    p: &GradOracle<T>,
    raw: NuisanceFn<T>,
    dgp: &Dgp<T>,
    mc: MonteCarlo,
) -> Result<(NuisanceFn<T>, NormEstimate)> {
    let zero = NuisanceFn::zero(p.kind, p.dim);
    let n = nuisance_norm(p, &raw, &zero, dgp, mc)?;
    if n.value <= 0.0 || !n.value.is_finite() {
        return Err(Error::Domain("perturbation direction has zero norm".into()));
    }
    let h = zero.plus_scaled(T::lit(1.0 / n.value), &raw)?;
    Ok((h, n))
}

/// Fixed smooth perturbation direction with unit nuisance norm.
///
/// A unit-width bump at the center of the nuisance-input distribution, placed in the
/// outcome-type components and (for `plm_orth`) the first coordinate of `g_X`.
pub fn unit_direction<T: Real>(
    p: &GradOracle<T>,
    dgp: &Dgp<T>,
    mc: MonteCarlo,
) -> Result<(NuisanceFn<T>, NormEstimate)> {
    let b = bump(dgp.nuisance_input_center(), T::one());
    let raw = shape(p.kind, p.dim, &[b.clone(), b]);
    normalize(p, raw, dgp, mc)
}

/// `count` random unit-norm bump directions.
pub fn random_directions<T: Real>(
    p: &GradOracle<T>,
    dgp: &Dgp<T>,
    count: usize,
    rng: &Rng,
    mc: MonteCarlo,
) -> Result<Vec<NuisanceFn<T>>> {
    let center = dgp.nuisance_input_center();
    let ncomp = if p.kind == ProblemKind::PlmOrth { 1 + p.dim } else { 2 };
    (0..count)
        .map(|i| {
            let mut r = rng.child(i as u64);
            let parts: Vec<ScalarFn<T>> = (0..ncomp)
                .map(|_| {
                    let c: Vec<T> = center.iter().map(|&c| c + T::lit(r.standard_normal())).collect();
                    let width = T::lit(r.uniform_range(0.7, 2.0));
                    let coef = T::lit(r.uniform_range(-1.0, 1.0));
                    ScalarFn::Zero.plus_scaled(coef, &bump(c, width))
                })
                .collect();
            normalize(p, shape(p.kind, p.dim, &parts), dgp, mc).map(|x| x.0)
        })
        .collect()
}

/// Curvature and unbiasedness diagnostics at `(θ⋆, g₀)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagReport {
    pub kind: ProblemKind,
    pub theta_star: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub mu_hat: f64,
    pub m_hat: f64,
    /// Point at which the score mean was checked.
    pub theta_check: Vec<f64>,
    pub score_mean: Vec<f64>,
    pub score_se: Vec<f64>,
    pub population_gradient: Option<Vec<f64>>,
    /// Largest per-coordinate |mean − truth| / SE when the truth is analytic.
    pub max_abs_z: Option<f64>,
    pub mc: MonteCarlo,
}

impl DiagReport {
    pub fn unbiased(&self) -> Option<bool> {
        self.max_abs_z.map(|z| z <= 4.0)
    }
}

pub fn diagnostics<T: Real>(p: &GradOracle<T>, dgp: &Dgp<T>, mc: MonteCarlo) -> Result<DiagReport> {
    let d = p.dim;
    let theta_star = target(p, dgp)?;
    let g0 = true_nuisance(p, dgp)?;
    let root = Rng::new(mc.seed).child_named("diagnostics");
    let mut rng = root.child(0);
    let samples: Vec<_> = (0..mc.n).map(|_| dgp.draw(&mut rng)).collect();

    let h = T::epsilon().cbrt();
    let mut hacc = MeanAccumulator::new(d * d);
    let mut row = vec![T::zero(); d * d];
    for z in &samples {
        for j in 0..d {
            let mut a = theta_star.clone();
            let mut b = theta_star.clone();
            a[j] += h;
            b[j] -= h;
            let (sa, sb) = (p.score(&a, &g0, z)?, p.score(&b, &g0, z)?);
            for i in 0..d {
                row[i * d + j] = (sa[i] - sb[i]) / (h + h);
            }
        }
        hacc.push(&row);
    }
    let hm = hacc.mean();
    let hess = Mat::from_fn(d, d, |i, j| 0.5 * (hm[i * d + j] + hm[j * d + i]));

    let mut r = root.child(1);
    let theta_check: Vec<T> = theta_star.iter().map(|&t| t + T::lit(0.5 * r.standard_normal())).collect();
    let mut sacc = MeanAccumulator::new(d);
    let mut rng = root.child(2);
    let mut buf = vec![T::zero(); d];
    for _ in 0..mc.n {
        let z = dgp.draw(&mut rng);
        p.score_into(&theta_check, &g0, &z, &mut buf)?;
        sacc.push(&buf);
    }
    let pop = population_gradient(p, &theta_check, dgp).ok();
    let (sm, se) = (sacc.mean().to_vec(), sacc.std_err());
    let max_abs_z = pop.as_ref().map(|g| {
        (0..d)
            .map(|j| (sm[j] - g[j].to_f64_lossy()).abs() / se[j].max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    });
    let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
    Ok(DiagReport {
        kind: p.kind,
        theta_star: f(&theta_star),
        hessian: (0..d).map(|i| hess.row(i).to_vec()).collect(),
        mu_hat: min_eig_sym(&hess)?,
        m_hat: max_eig_sym(&hess)?,
        theta_check: f(&theta_check),
        score_mean: sm,
        score_se: se,
        population_gradient: pop.map(|g| f(&g)),
        max_abs_z,
        mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{CausalConfig, PlmConfig};

    #[test]
    fn independent_design_gives_constant_gx() {
        let dgp = Dgp::plm(PlmConfig::<f64>::standard(0.0)).unwrap();
        let p = GradOracle::new(ProblemKind::PlmOrth, 2);
        let NuisanceFn::PlmOrth { g_x, .. } = true_nuisance(&p, &dgp).unwrap() else { panic!() };
        for w in [[0.0, 0.0], [5.0, -3.0]] {
            assert_eq!(g_x[0].eval(&w), 1.0);
            assert_eq!(g_x[1].eval(&w), 1.0);
        }
    }

    #[test]
    fn gx_at_mean_of_w() {
        let dgp = Dgp::plm(PlmConfig::<f64>::standard(0.5)).unwrap();
        let p = GradOracle::new(ProblemKind::PlmOrth, 2);
        let NuisanceFn::PlmOrth { g_x, .. } = true_nuisance(&p, &dgp).unwrap() else { panic!() };
        assert_eq!(g_x[0].eval(&[2.0, 2.0]), 1.0);
        assert!((g_x[0].eval(&[3.05, 2.0]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn plm_target_is_theta0() {
        let dgp = Dgp::plm(PlmConfig::<f64>::standard(0.5)).unwrap();
        for k in [ProblemKind::PlmOrth, ProblemKind::PlmNonorth] {
            assert_eq!(target(&GradOracle::new(k, 2), &dgp).unwrap(), vec![-0.5, 1.0]);
        }
    }

    #[test]
    fn causal_targets_converge() {
        let dgp = Dgp::causal(CausalConfig::<f64>::standard(true)).unwrap();
        for k in [ProblemKind::CateUnres, ProblemKind::CateRes, ProblemKind::Crr] {
            let t = target(&GradOracle::new(k, 3), &dgp).unwrap();
            assert!(t.iter().all(|v| v.is_finite() && v.abs() < 10.0), "{k}: {t:?}");
        }
    }

    #[test]
    fn unit_direction_has_unit_norm() {
        let dgp = Dgp::plm(PlmConfig::<f64>::standard(0.5)).unwrap();
        for k in [ProblemKind::PlmOrth, ProblemKind::PlmNonorth] {
            let p = GradOracle::new(k, 2);
            let mc = MonteCarlo::new(20_000, 8);
            let (h, _) = unit_direction(&p, &dgp, mc).unwrap();
            let n = nuisance_norm(&p, &h, &NuisanceFn::zero(k, 2), &dgp, mc).unwrap();
            assert!((n.value - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nonorth_hessian_matches_second_moment() {
        let dgp = Dgp::plm(PlmConfig::<f64>::standard(0.5)).unwrap();
        let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
        let r = diagnostics(&p, &dgp, MonteCarlo::new(50_000, 1)).unwrap();
        // eigenvalues of 1.05 I + 11ᵀ are 1.05 and 3.05
        assert!((r.mu_hat - 1.05).abs() < 0.05, "{}", r.mu_hat);
        assert!((r.m_hat - 3.05).abs() < 0.1, "{}", r.m_hat);
    }
}
