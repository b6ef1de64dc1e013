//! Synthetic data generation and extended-precision reference solutions.
//!
//! Targets are produced as y = F(theta*) + Uniform(-s, s) with the model
//! value computed in double-double and only the final sum stored at P64.
//! Reference minimizers anchor every relative-error trace, so they run
//! Newton entirely at the extended tier with LU solves.

use super::families::Kind;
use super::{build_problem, FamilyName, Problem, ProblemSpec};
use crate::error::MpError;
use crate::linalg::{lu_solve, norm2, Mat};
use crate::precision::{Dd, PrecisionTier};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Family defaults: (n, noise half-width, generation anchor, input range).
/// The anchors for poly_exp, lin_nonlin and the sine_poly base come from the
/// experiments these families reproduce; input ranges are calibrated so the
/// documented curvature targets actually realize.
fn defaults(family: FamilyName) -> (usize, f64, Vec<f64>, (f64, f64)) {
    match family {
        FamilyName::PolyExp => (50, 1e-6, vec![6e-7, 2.012e-2], (-1.0, 1.0)),
        FamilyName::SinePoly => (50, 0.1, vec![1.0, 2.0, 1.0, 2.0], (0.0, 2.0)),
        FamilyName::SqrtControlled => (0, 0.0, vec![2e-9, 2e-7], (0.0, 0.0)),
        FamilyName::LinNonlin => (1500, 1e-3, vec![2.012, 5.023], (0.0, 0.12)),
        FamilyName::LogisticBCE | FamilyName::SquaredErrorSigmoid => (0, 0.0, vec![], (0.0, 1.0)),
    }
}

/// Build a generated-data problem. Draw order per family is fixed (anchor
/// perturbation, inputs, coupling matrix, then noise) so a (family, seed)
/// pair names one dataset forever.
pub(super) fn build_generated(spec: &ProblemSpec) -> Result<Problem, MpError> {
    let (n_def, noise_def, theta_def, range_def) = defaults(spec.family);
    let n = spec.n.unwrap_or(n_def);
    let noise = spec.noise_scale.unwrap_or(noise_def);
    let range = spec.x_range.map(|[a, b]| (a, b)).unwrap_or(range_def);
    if n == 0 && spec.family != FamilyName::SqrtControlled {
        return Err(MpError::Config(format!("{:?} needs n >= 1 data points", spec.family)));
    }
    if range.0 >= range.1 && spec.family != FamilyName::SqrtControlled {
        return Err(MpError::Config(format!("empty input range {:?}", range)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    match spec.family {
        FamilyName::PolyExp => {
            let theta = spec.theta_star.clone().unwrap_or(theta_def);
            expect_dim(&theta, 2, spec.family)?;
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(range.0..range.1)).collect();
            let probe = Kind::PolyExp { x: x.clone(), y: vec![0.0; n] };
            let y = targets_from(&probe, &theta, noise, &mut rng);
            Ok(Problem::with_gen(Kind::PolyExp { x, y }, theta))
        }
        FamilyName::SinePoly => {
            // integer anchor plus random decimals, so representation error at
            // low tiers is nonzero (exact integers would hide it)
            let theta = match &spec.theta_star {
                Some(t) => t.clone(),
                None => theta_def.iter().map(|&v| v + rng.gen_range(0.0..0.1)).collect(),
            };
            expect_dim(&theta, 4, spec.family)?;
            let raw = Mat::from_fn(n, 3, |_, _| rng.gen_range(range.0..range.1));
            let feats = Mat::from_fn(n, 3, |i, j| match j {
                0 => raw[(i, 0)] * raw[(i, 0)],
                1 => raw[(i, 1)],
                _ => raw[(i, 2)].powf(2.5),
            });
            let probe = Kind::SinePoly { feats: feats.clone(), y: vec![0.0; n] };
            let y = targets_from(&probe, &theta, noise, &mut rng);
            Ok(Problem::with_gen(Kind::SinePoly { feats, y }, theta))
        }
        FamilyName::SqrtControlled => {
            let [a, b] = spec.anchor.unwrap_or([theta_def[0], theta_def[1]]);
            let alpha_x = spec.alpha_x.unwrap_or(5e2);
            let alpha_y = spec.alpha_y.unwrap_or(5e-4);
            if alpha_x <= 0.0 || alpha_y <= 0.0 {
                return Err(MpError::Config("sqrt_controlled needs positive curvature knobs".into()));
            }
            Ok(Problem::with_gen(Kind::SqrtControlled { a, b, alpha_x, alpha_y }, vec![a, b]))
        }
        FamilyName::LinNonlin => {
            let theta = spec.theta_star.clone().unwrap_or(theta_def);
            expect_dim(&theta, 2, spec.family)?;
            let m = 2usize;
            let a: Mat<f64> = Mat::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
            let x = Mat::from_fn(n, m, |_, _| rng.gen_range(range.0..range.1));
            // w_i = A x_i, the per-datapoint coupled inputs, fixed as data
            let mut w = Mat::zeros(n, m);
            for i in 0..n {
                for c in 0..m {
                    let mut acc = 0.0;
                    for k in 0..m {
                        acc += a[(c, k)] * x[(i, k)];
                    }
                    w[(i, c)] = acc;
                }
            }
            let probe = Kind::LinNonlin {
                x: x.clone(),
                w: w.clone(),
                y_lin: vec![0.0; n * m],
                y_nonlin: vec![0.0; n * m],
            };
            let mut y = targets_from(&probe, &theta, noise, &mut rng);
            let y_nonlin = y.split_off(n * m);
            Ok(Problem::with_gen(Kind::LinNonlin { x, w, y_lin: y, y_nonlin }, theta))
        }
        FamilyName::LogisticBCE | FamilyName::SquaredErrorSigmoid => {
            unreachable!("classification families are routed to build_problem_with_data")
        }
    }
}

/// Model values at theta (double-double, recovered through the residual path
/// against zero targets) plus uniform noise, stored at P64.
fn targets_from(probe: &Kind, theta: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let th: Vec<Dd> = theta.iter().map(|&v| Dd::from_f64(v)).collect();
    let (r, _) = probe.residuals_jacobian::<Dd>(&th).expect("probe families are least squares");
    let c = residual_scale(probe);
    r.iter()
        .map(|ri| {
            let f = ri.div(c);
            let eps = if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
            f.add(Dd::from_f64(eps)).to_f64()
        })
        .collect()
}

/// The constant mapping model-vs-target gaps to residuals (1 where the
/// family uses raw residuals).
fn residual_scale(kind: &Kind) -> Dd {
    match kind {
        Kind::PolyExp { x, .. } => Dd::from_f64((2.0 / x.len() as f64).sqrt()),
        Kind::SinePoly { feats, .. } => Dd::from_f64((2.0 / feats.rows() as f64).sqrt()),
        _ => Dd::ONE,
    }
}

fn expect_dim(theta: &[f64], d: usize, family: FamilyName) -> Result<(), MpError> {
    if theta.len() != d {
        return Err(MpError::Config(format!("{family:?} anchor needs {d} components, got {}", theta.len())));
    }
    Ok(())
}

/// Spec-level entry: data for one regression family at its default ranges.
/// Returns the stored design data and the flattened target vector.
pub fn generate_regression_data(
    family: FamilyName,
    theta_star: &[f64],
    n: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<(Mat<f64>, Vec<f64>), MpError> {
    let mut spec = ProblemSpec::family(family).with_seed(seed);
    spec.n = Some(n);
    spec.noise_scale = Some(noise_scale);
    spec.theta_star = Some(theta_star.to_vec());
    let p = build_problem(&spec)?;
    Ok(match p.kind() {
        Kind::PolyExp { x, y } => (Mat::from_fn(x.len(), 1, |i, _| x[i]), y.clone()),
        Kind::SinePoly { feats, y } => (feats.clone(), y.clone()),
        Kind::LinNonlin { x, y_lin, y_nonlin, .. } => {
            let mut y = y_lin.clone();
            y.extend_from_slice(y_nonlin);
            (x.clone(), y)
        }
        _ => return Err(MpError::Config(format!("{family:?} has no regression data"))),
    })
}

/// Newton entirely at the extended tier with LU solves; anchors the
/// relative-error traces. Stops early once steps fall to the representation
/// floor, caps at `iters`.
pub fn compute_reference_solution(p: &Problem, theta0: &[f64], iters: usize) -> Result<Vec<Dd>, MpError> {
    let mut th: Vec<Dd> = theta0.iter().map(|&v| Dd::from_f64(v)).collect();
    let u_ext = PrecisionTier::Ext.unit_roundoff();
    for _ in 0..iters {
        let g = p.kind().gradient::<Dd>(&th, PrecisionTier::Ext)?;
        let h = p.kind().hessian::<Dd>(&th, PrecisionTier::Ext)?;
        let rhs: Vec<Dd> = g.iter().map(|v| v.neg()).collect();
        let d = lu_solve(&h, &rhs)?;
        for k in 0..th.len() {
            th[k] = th[k].add(d[k]);
        }
        if th.iter().any(|v| !v.is_finite()) {
            return Err(MpError::Numeric("reference Newton run diverged".into()));
        }
        let step = norm2(&d).to_f64();
        let scale = norm2(&th).to_f64();
        if step <= 10.0 * u_ext * scale {
            break;
        }
    }
    Ok(th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spectral_norm, DVec};
    use crate::models::build_problem;

    #[test]
    fn zero_noise_data_fits_exactly() {
        let mut spec = ProblemSpec::family(FamilyName::PolyExp).with_seed(11);
        spec.noise_scale = Some(0.0);
        let p = build_problem(&spec).unwrap();
        let th = DVec::F64(p.theta_gen().unwrap().to_vec());
        let f = p.objective(&th, PrecisionTier::P64).unwrap().value_f64();
        assert!(f <= 1e-25, "objective at the anchor with zero noise: {f:e}");
    }

    #[test]
    fn objective_at_anchor_equals_mean_squared_noise() {
        let spec = ProblemSpec::family(FamilyName::PolyExp).with_seed(13);
        let p = build_problem(&spec).unwrap();
        let theta = p.theta_gen().unwrap().to_vec();
        // reconstruct the injected noise in double-double from the stored data
        let (x, y) = match p.kind() {
            Kind::PolyExp { x, y } => (x.clone(), y.clone()),
            _ => unreachable!(),
        };
        let probe = Kind::PolyExp { x, y: vec![0.0; y.len()] };
        let th_dd: Vec<Dd> = theta.iter().map(|&v| Dd::from_f64(v)).collect();
        let (r, _) = probe.residuals_jacobian::<Dd>(&th_dd).unwrap();
        let c = Dd::from_f64((2.0 / y.len() as f64).sqrt());
        let mut acc = Dd::ZERO;
        for (ri, yi) in r.iter().zip(&y) {
            let noise = ri.div(c).sub(Dd::from_f64(*yi));
            acc = acc.add(noise.mul(noise));
        }
        let oracle = acc.to_f64() / y.len() as f64;

        let f = p.objective(&DVec::F64(theta), PrecisionTier::P64).unwrap().value_f64();
        // cancellation budget: the P64 model values carry ~u * |F| error and
        // the residuals are noise-sized, so f agrees relatively to about
        // u * |F| / noise ~ 2e-12, not to u itself
        let tol = 2e-11 * oracle;
        assert!((f - oracle).abs() <= tol, "f = {f:e} vs mean squared noise {oracle:e}");
    }

    #[test]
    fn noise_has_near_zero_mean() {
        let n = 400;
        let scale = 1e-3;
        let (x, y) = generate_regression_data(FamilyName::PolyExp, &[6e-7, 2.012e-2], n, scale, 21).unwrap();
        let probe = Kind::PolyExp { x: x.col(0), y: vec![0.0; n] };
        let th: Vec<Dd> = [6e-7, 2.012e-2].iter().map(|&v| Dd::from_f64(v)).collect();
        let (r, _) = probe.residuals_jacobian::<Dd>(&th).unwrap();
        let c = Dd::from_f64((2.0 / n as f64).sqrt());
        let mean: f64 = (0..n).map(|i| y[i] - r[i].div(c).to_f64()).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * scale / (n as f64).sqrt(), "noise mean {mean:e}");
    }

    #[test]
    fn reference_solution_reaches_extended_floor() {
        for family in [FamilyName::PolyExp, FamilyName::SinePoly] {
            let spec = ProblemSpec::family(family).with_seed(17);
            let p = build_problem(&spec).unwrap();
            let th0 = p.theta_gen().unwrap().to_vec();
            let star = compute_reference_solution(&p, &th0, 500).unwrap();
            let g = p.kind().gradient::<Dd>(&star, PrecisionTier::Ext).unwrap();
            let h = p.kind().hessian::<Dd>(&star, PrecisionTier::Ext).unwrap();
            let gn = norm2(&g).to_f64();
            let bound = 1e3
                * PrecisionTier::Ext.unit_roundoff()
                * spectral_norm(&h.to_f64_mat()).unwrap()
                * norm2(&star).to_f64().max(1e-30);
            assert!(gn <= bound, "{family:?}: ||g(theta*)|| = {gn:e} above {bound:e}");
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_regression_data(FamilyName::SinePoly, &[1.0, 2.0, 1.0, 2.0], 30, 0.1, 5).unwrap();
        let b = generate_regression_data(FamilyName::SinePoly, &[1.0, 2.0, 1.0, 2.0], 30, 0.1, 5).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_regression_data(FamilyName::SinePoly, &[1.0, 2.0, 1.0, 2.0], 30, 0.1, 6).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn lin_nonlin_layout_is_consistent() {
        let spec = ProblemSpec::family(FamilyName::LinNonlin).with_seed(2);
        let p = build_problem(&spec).unwrap();
        match p.kind() {
            Kind::LinNonlin { x, w, y_lin, y_nonlin } => {
                assert_eq!(x.cols(), 2);
                assert_eq!(w.rows(), x.rows());
                assert_eq!(y_lin.len(), x.rows() * 2);
                assert_eq!(y_nonlin.len(), x.rows() * 2);
            }
            _ => unreachable!(),
        }
        assert_eq!(p.n_residuals().unwrap(), 4 * 1500);
    }
}
