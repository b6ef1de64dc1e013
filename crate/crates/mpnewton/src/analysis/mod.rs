//! A-priori accuracy and conditioning reports. Everything here is computed
//! before (or independently of) a minimization run: the gradient evaluation
//! error psi, the relative-error and gradient-norm floors a run cannot beat,
//! the low-tier admissibility check u_l kappa(H) <= 1/8, the condition for
//! dropping second-order curvature terms, and an empirical probe of how
//! ill-conditioned the gradient map itself is. The structured condition
//! number of regularized normal-equation systems lives in [`structured`].

mod structured;

pub use structured::{structured_cond, PerturbationOperator, StructuredCond};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MpError, Result};
use crate::linalg::{cond_2, eig_sym_min, norm2, spectral_norm, svd, DMat, DVec, Mat};
use crate::models::Problem;
use crate::optimize::{select_top_residuals, GradientSource, HessianSource, PrecisionPolicy};
use crate::precision::{Dd, PrecisionTier, Real};

/// Largest admissible stopping threshold for an inner iterative solver.
/// The low-tier check u_l kappa(H) <= 1/8 translates to a relative residual
/// of eta/(eta + 1) <= 1/8, that is eta <= 1/7.
pub const ETA_MAX: f64 = 1.0 / 7.0;

/// Defaults for [`gradient_conditioning`].
pub const GRAD_COND_SAMPLES: usize = 200;
pub const GRAD_COND_DELTA: f64 = 1e-6;

/// Low-tier admissibility: value = u(pi_l) * kappa_2(H), passing iff it
/// stays at or below 1/8. Past that point the solve tier cannot hold the
/// step system accurately enough for the error analysis to apply.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UlKappaCheck {
    pub value: f64,
    pub passes: bool,
}

/// Condition for dropping second-order curvature terms at the solution:
/// the discarded sum must stay below the smallest eigenvalue of J^T J.
/// The margin parameter sitting between them is free, so only the pair and
/// the strict comparison are reported.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GnCondition {
    pub lhs: f64,
    pub lambda_min: f64,
    pub passes: bool,
}

/// What the theory predicts about a run before it starts. Serialized to
/// JSON next to the traces it describes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    /// Gradient evaluation error at the reference point.
    pub psi: f64,
    /// Floor on the relative error of the iterates.
    pub lim_acc: f64,
    /// Floor on the reachable gradient norm.
    pub lim_g: f64,
    pub kappa_h_star: f64,
    pub u_l_kappa_check: UlKappaCheck,
    /// The constant 1/7; reproduced here so reports are self-contained.
    pub eta_max: f64,
    /// Present for runs whose curvature drops second-order terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gn_condition: Option<GnCondition>,
    pub notes: Vec<String>,
}

fn dd_vec(v: &DVec) -> Vec<Dd> {
    match v {
        DVec::Ext(x) => x.clone(),
        other => other.to_f64_vec().into_iter().map(Dd::from_f64).collect(),
    }
}

fn dd_mat(m: &DMat) -> Mat<Dd> {
    match m {
        DMat::Ext(x) => x.clone(),
        other => other.to_f64_mat().cast::<Dd>(),
    }
}

fn diff_norm_dd(a: &[Dd], b: &[Dd]) -> f64 {
    let d: Vec<Dd> = a.iter().zip(b).map(|(x, y)| x.sub(*y)).collect();
    norm2(&d).to_f64()
}

/// Gradient evaluation error at the reference point: the distance from the
/// gradient at the highest precision available. Below the extended tier
/// this is a direct difference. At the extended tier with an analytic
/// source there is nothing finer to compare against, so the P64 gap is
/// rescaled by u(Ext)/u(P64). A finite-difference source always has the
/// analytic extended gradient as its reference, so its truncation and
/// cancellation error lands in psi directly, at every tier.
pub fn estimate_psi(
    p: &Problem,
    theta_star: &[f64],
    pi_g: PrecisionTier,
    source: GradientSource,
) -> Result<f64> {
    let theta = DVec::from_f64_slice(theta_star, PrecisionTier::Ext)?;
    let g_ref = dd_vec(&p.gradient(&theta, PrecisionTier::Ext)?);
    if pi_g == PrecisionTier::Ext && matches!(source, GradientSource::Analytic) {
        let g64 = dd_vec(&p.gradient(&theta, PrecisionTier::P64)?);
        let scale = PrecisionTier::Ext.unit_roundoff() / PrecisionTier::P64.unit_roundoff();
        return Ok(diff_norm_dd(&g_ref, &g64) * scale);
    }
    let g_tier = match source {
        GradientSource::Analytic => p.gradient(&theta, pi_g)?,
        GradientSource::FiniteDifference { eps } => p.fd_gradient(&theta, eps, pi_g)?,
    };
    Ok(diff_norm_dd(&g_ref, &dd_vec(&g_tier)))
}

/// Smallest relative error the iterates can reliably reach: the gradient
/// error amplified through the curvature inverse, plus the working-tier
/// roundoff. Always at least u(pi_w).
pub fn limiting_accuracy(
    psi: f64,
    h_star: &Mat<f64>,
    x_star: &[f64],
    pi_w: PrecisionTier,
) -> Result<f64> {
    let sv = svd(h_star)?.singular_values;
    let smin = *sv
        .last()
        .ok_or_else(|| MpError::Config("limiting_accuracy got an empty matrix".into()))?;
    if smin == 0.0 {
        return Err(MpError::Singular("limiting_accuracy needs a nonsingular curvature".into()));
    }
    Ok(psi / smin / norm2(x_star) + pi_w.unit_roundoff())
}

/// Smallest gradient norm the iterates can reliably reach. Always at
/// least psi.
pub fn limiting_gradient(
    psi: f64,
    h_at: &Mat<f64>,
    x_at: &[f64],
    pi_w: PrecisionTier,
) -> Result<f64> {
    Ok(psi + pi_w.unit_roundoff() * spectral_norm(h_at)? * norm2(x_at))
}

/// The low-tier gate u(pi_l) * kappa_2(H) <= 1/8. A singular H reports an
/// infinite value and fails rather than erroring; that is a meaningful
/// answer to the question being asked.
pub fn check_assumptions(h: &Mat<f64>, pi_l: PrecisionTier) -> Result<UlKappaCheck> {
    if h.rows() != h.cols() {
        return Err(MpError::Config(format!(
            "check_assumptions needs a square matrix, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let value = pi_l.unit_roundoff() * cond_2(h)?;
    Ok(UlKappaCheck { value, passes: value <= 0.125 })
}

/// Whether the curvature terms outside K are dominated by the Gauss part
/// at the solution: lhs = |sum over j not in K of r_j hess r_j| against the
/// smallest eigenvalue of J^T J. K empty is the plain Gauss-Newton check;
/// K covering every index passes trivially. Accumulation runs at the
/// extended tier so the report itself is clean.
pub fn gn_condition_check(
    j_star: &DMat,
    r_star: &DVec,
    mut residual_hessian: impl FnMut(usize) -> Result<DMat>,
    k_set: &[usize],
) -> Result<GnCondition> {
    let m = r_star.len();
    let n = j_star.cols();
    if j_star.rows() != m {
        return Err(MpError::Config(format!(
            "jacobian has {} rows for {} residuals",
            j_star.rows(),
            m
        )));
    }
    let mut in_k = vec![false; m];
    for &j in k_set {
        if j >= m {
            return Err(MpError::Config(format!("index {j} outside 0..{m} in K")));
        }
        in_k[j] = true;
    }
    let r = dd_vec(r_star);
    let mut s: Mat<Dd> = Mat::zeros(n, n);
    for j in 0..m {
        if in_k[j] {
            continue;
        }
        let hj = dd_mat(&residual_hessian(j)?);
        if hj.rows() != n || hj.cols() != n {
            return Err(MpError::Config(format!(
                "residual hessian {j} is {}x{}, expected {n}x{n}",
                hj.rows(),
                hj.cols()
            )));
        }
        for a in 0..n {
            for b in 0..n {
                s[(a, b)] = s[(a, b)].add(r[j].mul(hj[(a, b)]));
            }
        }
    }
    let lhs = spectral_norm(&s.to_f64_mat())?;
    let jd = dd_mat(j_star);
    let mut jtj: Mat<Dd> = Mat::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let mut acc = Dd::zero();
            for row in 0..m {
                acc = acc.add(jd[(row, a)].mul(jd[(row, b)]));
            }
            jtj[(a, b)] = acc;
            jtj[(b, a)] = acc;
        }
    }
    let lambda_min = eig_sym_min(&jtj.to_f64_mat())?;
    Ok(GnCondition { lhs, lambda_min, passes: lhs < lambda_min })
}

/// Empirical conditioning of the gradient map at theta: the worst observed
/// relative-change ratio over random directions of fixed relative length,
/// everything evaluated at the extended tier. Returns infinity when the
/// gradient vanishes at theta, since the ratio grows without bound as the
/// base gradient shrinks.
pub fn gradient_conditioning(
    p: &Problem,
    theta: &[f64],
    n_samples: usize,
    delta_scale: f64,
    seed: u64,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(MpError::Config("gradient_conditioning needs n_samples > 0".into()));
    }
    if !delta_scale.is_finite() || delta_scale <= 0.0 {
        return Err(MpError::Config(format!(
            "delta_scale must be positive and finite, got {delta_scale:e}"
        )));
    }
    let theta_norm = norm2(theta);
    if theta_norm == 0.0 {
        return Err(MpError::Config(
            "gradient_conditioning scales perturbations by |theta|, which is zero here".into(),
        ));
    }
    let theta_dd: Vec<Dd> = theta.iter().map(|v| Dd::from_f64(*v)).collect();
    let g0 = dd_vec(&p.gradient(&DVec::Ext(theta_dd.clone()), PrecisionTier::Ext)?);
    let g0_norm = norm2(&g0).to_f64();
    if g0_norm == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_samples {
        let raw: Vec<f64> = (0..theta.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let raw_norm = norm2(&raw);
        if raw_norm == 0.0 {
            continue;
        }
        let scale = delta_scale * theta_norm / raw_norm;
        let dx: Vec<f64> = raw.iter().map(|v| v * scale).collect();
        let shifted: Vec<Dd> =
            theta_dd.iter().zip(&dx).map(|(t, d)| t.add(Dd::from_f64(*d))).collect();
        let g1 = dd_vec(&p.gradient(&DVec::Ext(shifted), PrecisionTier::Ext)?);
        let ratio = (diff_norm_dd(&g1, &g0) / g0_norm) / (norm2(&dx) / theta_norm);
        worst = worst.max(ratio);
    }
    Ok(worst)
}

/// Assemble the full report for a problem and policy at the reference
/// solution. The reference Hessian is evaluated at the extended tier and
/// collapsed, so the bounds describe the problem rather than the run.
pub fn bound_report(
    p: &Problem,
    theta_star: &[f64],
    policy: &PrecisionPolicy,
) -> Result<BoundReport> {
    policy.validate()?;
    let theta = DVec::from_f64_slice(theta_star, PrecisionTier::Ext)?;
    let h_star = p.hessian(&theta, PrecisionTier::Ext)?.to_f64_mat();
    let psi = estimate_psi(p, theta_star, policy.pi_g, policy.gradient_source)?;
    let lim_acc = limiting_accuracy(psi, &h_star, theta_star, policy.pi_w)?;
    let lim_g = limiting_gradient(psi, &h_star, theta_star, policy.pi_w)?;
    let kappa_h_star = cond_2(&h_star)?;
    let u_l_kappa_check = check_assumptions(&h_star, policy.pi_l)?;
    let mut notes = vec![
        "the curvature smoothness constant is not machine-checkable; no bound on it is attempted"
            .to_string(),
        "psi is estimated at the reference point; per-iterate bounds reuse that value".to_string(),
    ];
    let gn_condition = match policy.hessian_source {
        HessianSource::Exact => None,
        HessianSource::GaussNewton | HessianSource::GnK { .. } => {
            let (r, j) = p.residuals_jacobian(&theta, PrecisionTier::Ext)?;
            let k = match policy.hessian_source {
                HessianSource::GnK { k_percent } => select_top_residuals(&r, k_percent)?,
                _ => vec![],
            };
            notes.push(
                "the margin between lhs and lambda_min is a free parameter; both sides are \
                 reported without choosing it"
                    .to_string(),
            );
            Some(gn_condition_check(
                &j,
                &r,
                |jx| p.residual_hessian(&theta, jx, PrecisionTier::Ext),
                &k,
            )?)
        }
    };
    Ok(BoundReport {
        psi,
        lim_acc,
        lim_g,
        kappa_h_star,
        u_l_kappa_check,
        eta_max: ETA_MAX,
        gn_condition,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro_norm, matvec};
    use crate::linsolve::cg_mat;
    use crate::models::{build_problem, FamilyName, Kind, ProblemSpec};
    use proptest::prelude::*;

    fn probe(q: Mat<f64>, c: Vec<f64>) -> Problem {
        Problem::from_kind(Kind::QuadraticProbe { q, c })
    }

    fn spd_probe() -> (Mat<f64>, Vec<f64>, Vec<f64>) {
        let q = Mat::from_fn(5, 5, |i, j| {
            if i == j {
                1.0 + i as f64
            } else {
                0.1 / (1.0 + (i as f64 - j as f64).abs())
            }
        });
        let star = vec![1.0, -2.0, 0.5, 3.0, -1.0];
        let c = matvec(&q, &star);
        (q, c, star)
    }

    #[test]
    fn psi_shrinks_as_the_gradient_tier_rises() {
        for (family, seed) in [(FamilyName::PolyExp, 3), (FamilyName::SinePoly, 5)] {
            let p = build_problem(&ProblemSpec::family(family).with_seed(seed)).unwrap();
            let theta: Vec<f64> = p.theta_gen().unwrap().to_vec();
            let at = |tier| estimate_psi(&p, &theta, tier, GradientSource::Analytic).unwrap();
            let (p32, p64, ext) = (at(PrecisionTier::P32), at(PrecisionTier::P64), at(PrecisionTier::Ext));
            assert!(p32 >= p64, "{family:?}: psi(32) = {p32:.3e} < psi(64) = {p64:.3e}");
            assert!(p64 >= ext, "{family:?}: psi(64) = {p64:.3e} < psi(ext) = {ext:.3e}");
            assert!(ext > 0.0);
        }
    }

    #[test]
    fn psi_of_an_affine_gradient_is_rounding_level() {
        let (q, c, star) = spd_probe();
        let p = probe(q.clone(), c.clone());
        let theta: Vec<f64> = star.iter().map(|v| v + 0.7).collect();
        let psi = estimate_psi(&p, &theta, PrecisionTier::P64, GradientSource::Analytic).unwrap();
        // the gradient is Q theta - c, so its evaluation error is a handful
        // of rounded multiply-adds per component
        let scale = fro_norm(&q) * norm2(&theta) + norm2(&c);
        let bound = 4.0 * 5.0 * PrecisionTier::P64.unit_roundoff() * scale;
        assert!(psi <= bound, "psi {psi:.3e} vs affine bound {bound:.3e}");
    }

    #[test]
    fn psi_with_finite_differences_carries_truncation_error() {
        let p = build_problem(&ProblemSpec::family(FamilyName::SinePoly).with_seed(5)).unwrap();
        let theta: Vec<f64> = p.theta_gen().unwrap().iter().map(|v| v + 0.2).collect();
        let analytic =
            estimate_psi(&p, &theta, PrecisionTier::Ext, GradientSource::Analytic).unwrap();
        let fd = |eps| {
            estimate_psi(&p, &theta, PrecisionTier::Ext, GradientSource::FiniteDifference { eps })
                .unwrap()
        };
        let coarse = fd(1e-3);
        let fine = fd(1e-9);
        assert!(
            coarse > 10.0 * analytic,
            "fd psi {coarse:.3e} should dwarf analytic psi {analytic:.3e}"
        );
        // central differences: truncation scales like eps^2 until roundoff
        // takes over, so the wide probe is strictly worse
        assert!(coarse > fine, "coarse {coarse:.3e} vs fine {fine:.3e}");
    }

    #[test]
    fn limiting_accuracy_floors_and_failure() {
        let h = Mat::diag(&[4.0, 1.0]);
        let x = vec![1.0, 1.0];
        let base = limiting_accuracy(0.0, &h, &x, PrecisionTier::P32).unwrap();
        assert_eq!(base, PrecisionTier::P32.unit_roundoff());
        let one = limiting_accuracy(1e-9, &h, &x, PrecisionTier::P64).unwrap();
        let two = limiting_accuracy(2e-9, &h, &x, PrecisionTier::P64).unwrap();
        assert!(two < 2.0 * one && two > one);
        assert!(matches!(
            limiting_accuracy(1e-9, &Mat::diag(&[1.0, 0.0]), &x, PrecisionTier::P64),
            Err(MpError::Singular(_))
        ));
    }

    #[test]
    fn limiting_gradient_floors() {
        let h = Mat::diag(&[3.0, 2.0]);
        assert_eq!(limiting_gradient(0.0, &h, &[0.0, 0.0], PrecisionTier::P64).unwrap(), 0.0);
        let lg = limiting_gradient(1e-12, &h, &[1.0, 0.0], PrecisionTier::P64).unwrap();
        let expect = 1e-12 + PrecisionTier::P64.unit_roundoff() * 3.0;
        assert!((lg - expect).abs() <= 1e-18);
    }

    #[test]
    fn assumption_check_boundary_cases() {
        let pass = check_assumptions(&Mat::identity(4), PrecisionTier::P32).unwrap();
        assert!(pass.passes);
        assert!((pass.value - PrecisionTier::P32.unit_roundoff()).abs() < 1e-12);
        // kappa = 1e7 at the 32-bit tier lands around 0.6, well past 1/8
        let fail = check_assumptions(&Mat::diag(&[1e7, 1.0]), PrecisionTier::P32).unwrap();
        assert!(!fail.passes);
        assert!((fail.value - PrecisionTier::P32.unit_roundoff() * 1e7).abs() / fail.value < 1e-6);
        let sing = check_assumptions(&Mat::diag(&[1.0, 0.0]), PrecisionTier::P64).unwrap();
        assert!(sing.value.is_infinite() && !sing.passes);
        assert!(check_assumptions(&Mat::zeros(2, 3), PrecisionTier::P64).is_err());
    }

    #[test]
    fn gn_condition_trivial_sets() {
        let j = DMat::F64(Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]));
        let provider = |_j: usize| Ok(DMat::F64(Mat::identity(2)));
        let zero_r = DVec::F64(vec![0.0; 3]);
        let out = gn_condition_check(&j, &zero_r, provider, &[]).unwrap();
        assert_eq!(out.lhs, 0.0);
        assert!(out.passes);
        let r = DVec::F64(vec![5.0, -2.0, 1.0]);
        let full = gn_condition_check(&j, &r, provider, &[0, 1, 2]).unwrap();
        assert_eq!(full.lhs, 0.0);
        assert!(full.passes);
        assert!(gn_condition_check(&j, &r, provider, &[3]).is_err());
    }

    #[test]
    fn gn_condition_matches_a_hand_sum() {
        // r_0 H_0 + r_1 H_1 = diag(1, -1), spectral norm 1; J^T J = diag(4, 9)
        let j = DMat::F64(Mat::diag(&[2.0, 3.0]));
        let r = DVec::F64(vec![0.5, -0.25]);
        let provider = |jx: usize| {
            Ok(DMat::F64(if jx == 0 { Mat::diag(&[2.0, 0.0]) } else { Mat::diag(&[0.0, 4.0]) }))
        };
        let out = gn_condition_check(&j, &r, provider, &[]).unwrap();
        assert!((out.lhs - 1.0).abs() < 1e-12);
        assert!((out.lambda_min - 4.0).abs() < 1e-10);
        assert!(out.passes);
        // dropping residual 1 from the complement leaves only r_0 H_0
        let partial = gn_condition_check(&j, &r, provider, &[1]).unwrap();
        assert!((partial.lhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_conditioning_of_a_linear_map_is_exact() {
        let anchor = vec![0.4, -0.2, 1.1];
        let p = probe(Mat::identity(3), anchor.clone());
        let theta = vec![2.0, 1.0, -1.0];
        // g = theta - anchor is linear, so the ratio is |theta|/|g| exactly
        let kg = gradient_conditioning(&p, &theta, 50, 1e-6, 7).unwrap();
        let g: Vec<f64> = theta.iter().zip(&anchor).map(|(t, a)| t - a).collect();
        let expect = norm2(&theta) / norm2(&g);
        assert!((kg - expect).abs() / expect < 1e-9, "got {kg}, expected {expect}");
        // same seed, same answer; more samples can only raise the max
        assert_eq!(kg, gradient_conditioning(&p, &theta, 50, 1e-6, 7).unwrap());
        let more = gradient_conditioning(&p, &theta, 200, 1e-6, 7).unwrap();
        assert!(more >= kg);
    }

    #[test]
    fn gradient_conditioning_edge_cases() {
        let anchor = vec![1.0, 2.0];
        let p = probe(Mat::identity(2), anchor.clone());
        assert!(matches!(
            gradient_conditioning(&p, &[0.0, 0.0], 10, 1e-6, 1),
            Err(MpError::Config(_))
        ));
        assert!(matches!(
            gradient_conditioning(&p, &[1.0, 1.0], 0, 1e-6, 1),
            Err(MpError::Config(_))
        ));
        assert!(matches!(
            gradient_conditioning(&p, &[1.0, 1.0], 10, 0.0, 1),
            Err(MpError::Config(_))
        ));
        // at the minimizer the gradient vanishes and the report is infinite
        let at_min = gradient_conditioning(&p, &anchor, 10, 1e-6, 1).unwrap();
        assert!(at_min.is_infinite());
    }

    #[test]
    fn bound_report_assembles_and_round_trips() {
        let p = build_problem(&ProblemSpec::family(FamilyName::PolyExp).with_seed(3)).unwrap();
        let theta: Vec<f64> = p.theta_gen().unwrap().to_vec();
        let mut policy = PrecisionPolicy::with_tiers(
            PrecisionTier::Ext,
            PrecisionTier::P64,
            PrecisionTier::P32,
        );
        policy.hessian_source = HessianSource::GaussNewton;
        let report = bound_report(&p, &theta, &policy).unwrap();
        assert!(report.psi >= 0.0);
        assert!(report.lim_acc >= PrecisionTier::P64.unit_roundoff());
        assert!(report.lim_g >= report.psi);
        assert!(report.kappa_h_star >= 1.0);
        assert_eq!(report.eta_max, 1.0 / 7.0);
        assert!(report.gn_condition.is_some());
        assert_eq!(report.notes.len(), 3);
        let json = serde_json::to_string(&report).unwrap();
        let back: BoundReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.psi, report.psi);
        assert_eq!(back.gn_condition.unwrap().passes, report.gn_condition.unwrap().passes);

        let exact = bound_report(&p, &theta, &PrecisionPolicy::default()).unwrap();
        assert!(exact.gn_condition.is_none());
        let j2 = serde_json::to_string(&exact).unwrap();
        assert!(!j2.contains("gn_condition"));
    }

    #[test]
    fn eta_one_seventh_is_admissible_when_the_check_passes() {
        let (q, c, star) = spd_probe();
        let check = check_assumptions(&q, PrecisionTier::P32).unwrap();
        assert!(check.passes, "probe matrix should pass at the 32-bit tier");
        // passing the 1/8 gate makes eta = 1/7 admissible by construction
        assert!(check.value / (1.0 - check.value) <= ETA_MAX * 1.01);

        // run one CG step at eta = 1/7 and audit the backward error
        let theta: Vec<f64> = star.iter().map(|v| v + 1.0).collect();
        let g: Vec<f64> = matvec(&q, &theta).iter().zip(&c).map(|(a, b)| a - b).collect();
        let b: Vec<f64> = g.iter().map(|v| -v).collect();
        let out = cg_mat(&q, &b, &vec![0.0; 5], ETA_MAX, 50, PrecisionTier::P64).unwrap();
        assert!(out.converged);
        let residual: Vec<f64> = {
            let qd = matvec(&q, &out.x);
            b.iter().zip(&qd).map(|(bi, qi)| bi - qi).collect()
        };
        let r_norm = norm2(&residual);
        assert!(r_norm <= ETA_MAX * norm2(&b) * (1.0 + 1e-12), "stop not honored");
        // reconstructing eta from the observed normalized backward error
        // dominates the observed relative residual
        let h_norm = spectral_norm(&q).unwrap();
        let kappa = cond_2(&q).unwrap();
        let phi = r_norm / (h_norm * norm2(&out.x));
        let pk = phi * kappa;
        assert!(pk < 1.0);
        let eta_rec = pk / (1.0 - pk);
        let eta_obs = r_norm / norm2(&matvec(&q, &out.x));
        assert!(
            eta_rec >= eta_obs / 1.01,
            "eta_rec {eta_rec:.3e} under eta_obs {eta_obs:.3e}"
        );
    }

    proptest! {
        #[test]
        fn floors_hold_for_arbitrary_inputs(
            psi in 0.0..1e3f64,
            d1 in 1e-6..1e6f64,
            d2 in 1e-6..1e6f64,
            x1 in -10.0..10.0f64,
            x2 in -10.0..10.0f64,
        ) {
            let h = Mat::diag(&[d1, d2]);
            let x = vec![x1, x2];
            for tier in [PrecisionTier::P32, PrecisionTier::P64, PrecisionTier::Ext] {
                let la = limiting_accuracy(psi, &h, &x, tier).unwrap();
                prop_assert!(la >= tier.unit_roundoff());
                let lg = limiting_gradient(psi, &h, &x, tier).unwrap();
                prop_assert!(lg >= psi);
            }
        }
    }
}
