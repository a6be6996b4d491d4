use serde::{Deserialize, Serialize};

use crate::numkit::{stats::MeanAccumulator, MonteCarlo, Rng};
use crate::problems::{GradOracle, NuisanceFn, ScalarFn};
use crate::simdata::Dgp;
use crate::{Error, Real, Result};

/// A Monte-Carlo norm estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub se: f64,
    pub mc: MonteCarlo,
}

/// `(E a)^{1/p}` from per-draw `a = |·|^p`, with delta-method SE.
fn lp_from_moment(mean: f64, se_mean: f64, p: f64) -> (f64, f64) {
    if mean <= 0.0 {
        return (0.0, 0.0);
    }
    let v = mean.powf(1.0 / p);
    (v, v / (p * mean) * se_mean)
}

/// Problem-specific distance `‖g1 − g2‖` over fresh nuisance-input draws from `dgp`.
pub fn nuisance_norm<T: Real>(
    p: &GradOracle<T>,
    g1: &NuisanceFn<T>,
    g2: &NuisanceFn<T>,
    dgp: &Dgp<T>,
    mc: MonteCarlo,
) -> Result<NormEstimate> {
    g1.expect_kind(p.kind)?;
    g2.expect_kind(p.kind)?;
    if mc.n == 0 {
        return Err(Error::EmptySample("nuisance_norm needs mc.n > 0"));
    }
    let mut rng = Rng::new(mc.seed).child_named("nuisance_norm");
    let diff = |a: &ScalarFn<T>, b: &ScalarFn<T>, v: &[T]| (a.eval(v) - b.eval(v)).to_f64_lossy();

    // Each group is one L_p term; the norm is the max over groups.
    let (powers, mut acc): (Vec<f64>, MeanAccumulator) = match g1 {
        NuisanceFn::PlmNonorth { .. } => (vec![2.0], MeanAccumulator::new(1)),
        NuisanceFn::CateRes { .. } | NuisanceFn::Crr { .. } => (vec![4.0; 3], MeanAccumulator::new(3)),
        _ => (vec![4.0; 2], MeanAccumulator::new(2)),
    };
    let mut row = vec![0.0; powers.len()];
    for _ in 0..mc.n {
        let v = dgp.draw_nuisance_input(&mut rng);
        match (g1, g2) {
            (NuisanceFn::PlmOrth { g_y: a, g_x: ax }, NuisanceFn::PlmOrth { g_y: b, g_x: bx }) => {
                let sq: f64 = ax.iter().zip(bx).map(|(f, g)| diff(f, g, &v).powi(2)).sum();
                row[0] = sq * sq;
                row[1] = diff(a, b, &v).powi(4);
            }
            (NuisanceFn::PlmNonorth { g: a }, NuisanceFn::PlmNonorth { g: b }) => {
                row[0] = diff(a, b, &v).powi(2);
            }
            (NuisanceFn::CateUnres { out: a, prop: pa }, NuisanceFn::CateUnres { out: b, prop: pb }) => {
                row[0] = diff(a, b, &v).powi(4);
                row[1] = diff(pa, pb, &v).powi(4);
            }
            (
                NuisanceFn::CateRes { g0: a0, g1: a1, prop: pa } | NuisanceFn::Crr { g0: a0, g1: a1, prop: pa },
                NuisanceFn::CateRes { g0: b0, g1: b1, prop: pb } | NuisanceFn::Crr { g0: b0, g1: b1, prop: pb },
            ) => {
                // Geometric mean of the two overlap weights keeps the distance symmetric.
                let q1 = p.clip_prop(pa.eval(&v)).to_f64_lossy();
                let q2 = p.clip_prop(pb.eval(&v)).to_f64_lossy();
                let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
                let den = (lo * (1.0 - lo) * hi * (1.0 - hi)).sqrt();
                row[0] = (diff(a0, b0, &v) / den).powi(4);
                row[1] = (diff(a1, b1, &v) / den).powi(4);
                row[2] = ((q1 - q2) / den).powi(4);
            }
            _ => unreachable!("kinds checked above"),
        }
        acc.push(&row);
    }
    let (m, se) = (acc.mean().to_vec(), acc.std_err());
    let mut best = (0.0, 0.0);
    for k in 0..powers.len() {
        let est = lp_from_moment(m[k], se[k], powers[k]);
        if est.0 > best.0 {
            best = est;
        }
    }
    Ok(NormEstimate {
        value: best.0,
        se: best.1,
        mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemKind;
    use crate::simdata::PlmConfig;

    fn dgp() -> Dgp<f64> {
        Dgp::plm(PlmConfig::standard(0.5)).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let p = GradOracle::new(ProblemKind::PlmOrth, 2);
        let g = crate::problems::true_nuisance(&p, &dgp()).unwrap();
        let n = nuisance_norm(&p, &g, &g, &dgp(), MonteCarlo::new(1000, 1)).unwrap();
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn constant_offset_nonorth() {
        let p = GradOracle::new(ProblemKind::PlmNonorth, 2);
        let a = NuisanceFn::PlmNonorth { g: ScalarFn::analytic(|w: &[f64]| w[0].sin()) };
        let b = a.plus_scaled(1.0, &NuisanceFn::PlmNonorth { g: ScalarFn::Const(-0.7) }).unwrap();
        let n = nuisance_norm(&p, &a, &b, &dgp(), MonteCarlo::new(1000, 2)).unwrap();
        assert!((n.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn symmetric_for_restricted_kinds() {
        let cdgp = Dgp::causal(crate::simdata::CausalConfig::standard(true)).unwrap();
        let p = GradOracle::new(ProblemKind::CateRes, 3);
        let a = NuisanceFn::CateRes {
            g0: ScalarFn::Const(0.2),
            g1: ScalarFn::Const(0.3),
            prop: ScalarFn::analytic(|x: &[f64]| 0.5 + 0.1 * x[1].tanh()),
        };
        let b = NuisanceFn::CateRes { g0: ScalarFn::Const(0.25), g1: ScalarFn::Const(0.3), prop: ScalarFn::Const(0.4) };
        let mc = MonteCarlo::new(2000, 3);
        let ab = nuisance_norm(&p, &a, &b, &cdgp, mc).unwrap();
        let ba = nuisance_norm(&p, &b, &a, &cdgp, mc).unwrap();
        assert_eq!(ab.value, ba.value);
        assert!(ab.value > 0.0);
    }
}
