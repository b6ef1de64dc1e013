//! Objective families with analytic derivatives and tier-parameterized
//! evaluation.
//!
//! Two evaluation conventions coexist here and the distinction matters:
//!
//! - `objective` and `fd_gradient` are strict: every scalar operation runs
//!   at the requested tier. Finite differences exist to expose exactly the
//!   cancellation a low tier produces, so nothing may run wider.
//! - `gradient`, `hessian`, `residuals_jacobian`, `residual_hessian` model
//!   "compute, then round": the input is quantized to the tier, arithmetic
//!   runs at max(tier, P64), and outputs round back to the tier. This is the
//!   quantity the accuracy limits reason about, dominated by input and
//!   output representation rather than accumulation noise.

mod families;
mod reference;

pub use families::Kind;
pub use reference::{compute_reference_solution, generate_regression_data};

use crate::error::MpError;
use crate::linalg::{DMat, DVec, Mat};
use crate::precision::{round_f64, Dd, PrecisionTier, Real, RoundedScalar};
use serde::{Deserialize, Serialize};

/// Evaluation-side events that traces want to know about, kept out of the
/// return types. Raised during evaluation, drained by the caller.
pub mod flags {
    use std::cell::Cell;

    pub const CLAMPED_PREDICTION: u32 = 1;

    thread_local! {
        static FLAGS: Cell<u32> = const { Cell::new(0) };
    }

    pub fn raise(bit: u32) {
        FLAGS.with(|f| f.set(f.get() | bit));
    }

    /// Read and clear.
    pub fn take() -> u32 {
        FLAGS.with(|f| f.replace(0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    PolyExp,
    SinePoly,
    SqrtControlled,
    LinNonlin,
    LogisticBCE,
    SquaredErrorSigmoid,
}

/// Config-facing description of a problem instance. Regression families are
/// fully determined by (family, seed, overrides); classification families
/// additionally name a dataset that the caller attaches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub family: FamilyName,
    #[serde(default)]
    pub seed: u64,
    /// Data points; family default when absent.
    #[serde(default)]
    pub n: Option<usize>,
    /// Uniform noise half-width on targets; family default when absent.
    #[serde(default)]
    pub noise_scale: Option<f64>,
    /// Generation anchor theta*; family default when absent.
    #[serde(default)]
    pub theta_star: Option<Vec<f64>>,
    /// Input sampling interval; family default when absent.
    #[serde(default)]
    pub x_range: Option<[f64; 2]>,
    /// L2 strength for the classification families.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub alpha_x: Option<f64>,
    #[serde(default)]
    pub alpha_y: Option<f64>,
    /// Minimum location (a, b) for sqrt_controlled.
    #[serde(default)]
    pub anchor: Option<[f64; 2]>,
    /// Dataset name for classification families; resolved by the caller.
    #[serde(default)]
    pub dataset: Option<String>,
}

impl ProblemSpec {
    pub fn family(family: FamilyName) -> ProblemSpec {
        ProblemSpec {
            family,
            seed: 0,
            n: None,
            noise_scale: None,
            theta_star: None,
            x_range: None,
            lambda: None,
            alpha_x: None,
            alpha_y: None,
            anchor: None,
            dataset: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// An immutable objective instance: family data plus the generation anchor
/// when the data was synthesized.
#[derive(Clone, Debug)]
pub struct Problem {
    kind: Kind,
    theta_gen: Option<Vec<f64>>,
}

/// Build a problem from its spec. Classification families carry no generator
/// and must arrive through [`build_problem_with_data`].
pub fn build_problem(spec: &ProblemSpec) -> Result<Problem, MpError> {
    match spec.family {
        FamilyName::LogisticBCE | FamilyName::SquaredErrorSigmoid => Err(MpError::Config(format!(
            "{:?} needs a dataset; load one and use build_problem_with_data",
            spec.family
        ))),
        _ => reference::build_generated(spec),
    }
}

/// Build a classification problem around an attached design matrix. The last
/// column convention (bias etc.) is the loader's business; this just checks
/// shape.
pub fn build_problem_with_data(spec: &ProblemSpec, x: Mat<f64>, y: Vec<f64>) -> Result<Problem, MpError> {
    if x.rows() != y.len() {
        return Err(MpError::Config(format!("design matrix has {} rows but {} labels", x.rows(), y.len())));
    }
    let lambda = spec.lambda.unwrap_or(1e-4);
    let kind = match spec.family {
        FamilyName::LogisticBCE => Kind::LogisticBCE { x, y, lambda },
        FamilyName::SquaredErrorSigmoid => Kind::SquaredErrorSigmoid { x, y, lambda },
        other => {
            return Err(MpError::Config(format!("{other:?} generates its own data; use build_problem")));
        }
    };
    Ok(Problem { kind, theta_gen: None })
}

impl Problem {
    pub fn from_kind(kind: Kind) -> Problem {
        Problem { kind, theta_gen: None }
    }

    pub(crate) fn with_gen(kind: Kind, theta_gen: Vec<f64>) -> Problem {
        Problem { kind, theta_gen: Some(theta_gen) }
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn n_residuals(&self) -> Option<usize> {
        self.kind.n_residuals()
    }

    pub fn is_least_squares(&self) -> bool {
        self.kind.is_least_squares()
    }

    pub fn family_name(&self) -> &'static str {
        self.kind.name()
    }

    /// The anchor used to synthesize targets, when this problem was
    /// generated. Reference solves start here.
    pub fn theta_gen(&self) -> Option<&[f64]> {
        self.theta_gen.as_deref()
    }

    /// f(theta) with every operation rounded at the tier.
    pub fn objective(&self, theta: &DVec, tier: PrecisionTier) -> Result<RoundedScalar, MpError> {
        self.check_dim(theta)?;
        let tq = theta.round_to(tier)?;
        let value = match &tq {
            DVec::F32(v) => Dd::from_f64(self.kind.objective::<f32>(v, tier)?.to_f64()),
            DVec::F64(v) => Dd::from_f64(self.kind.objective::<f64>(v, tier)?),
            DVec::Ext(v) => self.kind.objective::<Dd>(v, tier)?,
        };
        Ok(RoundedScalar::from_parts(value, tier))
    }

    /// Analytic gradient under the compute-then-round convention.
    pub fn gradient(&self, theta: &DVec, tier: PrecisionTier) -> Result<DVec, MpError> {
        self.check_dim(theta)?;
        match cast_input(theta, tier)? {
            CastEval::Native(v) => DVec::from_f64_slice(&self.kind.gradient::<f64>(&v, tier)?, tier),
            CastEval::Extended(v) => Ok(DVec::Ext(self.kind.gradient::<Dd>(&v, tier)?)),
        }
    }

    /// Analytic Hessian under the compute-then-round convention.
    pub fn hessian(&self, theta: &DVec, tier: PrecisionTier) -> Result<DMat, MpError> {
        self.check_dim(theta)?;
        match cast_input(theta, tier)? {
            CastEval::Native(v) => DMat::from_f64_mat(&self.kind.hessian::<f64>(&v, tier)?, tier),
            CastEval::Extended(v) => Ok(DMat::Ext(self.kind.hessian::<Dd>(&v, tier)?)),
        }
    }

    /// Residual vector and Jacobian for least-squares families, same
    /// convention as `gradient`.
    pub fn residuals_jacobian(&self, theta: &DVec, tier: PrecisionTier) -> Result<(DVec, DMat), MpError> {
        self.check_dim(theta)?;
        match cast_input(theta, tier)? {
            CastEval::Native(v) => {
                let (r, j) = self.kind.residuals_jacobian::<f64>(&v)?;
                Ok((DVec::from_f64_slice(&r, tier)?, DMat::from_f64_mat(&j, tier)?))
            }
            CastEval::Extended(v) => {
                let (r, j) = self.kind.residuals_jacobian::<Dd>(&v)?;
                Ok((DVec::Ext(r), DMat::Ext(j)))
            }
        }
    }

    /// hess r_j for least-squares families; the caller scales by r_j.
    pub fn residual_hessian(&self, theta: &DVec, j: usize, tier: PrecisionTier) -> Result<DMat, MpError> {
        self.check_dim(theta)?;
        match cast_input(theta, tier)? {
            CastEval::Native(v) => DMat::from_f64_mat(&self.kind.residual_hessian::<f64>(&v, j)?, tier),
            CastEval::Extended(v) => Ok(DMat::Ext(self.kind.residual_hessian::<Dd>(&v, j)?)),
        }
    }

    /// Central-difference gradient, strict at the tier:
    /// g_k = (f(theta + eps e_k) - f(theta - eps e_k)) / 2 eps.
    pub fn fd_gradient(&self, theta: &DVec, eps: f64, tier: PrecisionTier) -> Result<DVec, MpError> {
        self.check_dim(theta)?;
        if !(eps > 0.0) {
            return Err(MpError::Config(format!("fd_gradient needs eps > 0, got {eps:e}")));
        }
        if round_f64(eps, tier) == 0.0 {
            return Err(MpError::DegenerateEpsilon { eps, tier: tier.label() });
        }
        let tq = theta.round_to(tier)?;
        match &tq {
            DVec::F32(v) => {
                let g = fd_core::<f32>(&self.kind, v, eps as f32, tier)?;
                DVec::from_f64_slice(&g.iter().map(|x| x.to_f64()).collect::<Vec<_>>(), tier)
            }
            DVec::F64(v) => {
                let g = fd_core::<f64>(&self.kind, v, eps, tier)?;
                DVec::from_f64_slice(&g, tier)
            }
            DVec::Ext(v) => Ok(DVec::Ext(fd_core::<Dd>(&self.kind, v, Dd::from_f64(eps), tier)?)),
        }
    }

    fn check_dim(&self, theta: &DVec) -> Result<(), MpError> {
        if theta.len() != self.dim() {
            return Err(MpError::Config(format!(
                "theta has {} components, problem {} expects {}",
                theta.len(),
                self.family_name(),
                self.dim()
            )));
        }
        Ok(())
    }
}

enum CastEval {
    Native(Vec<f64>),
    Extended(Vec<Dd>),
}

/// Quantize the input to the tier, then choose the evaluation scalar:
/// f64 carries P32 and P64 evaluations, double-double carries Ext.
fn cast_input(theta: &DVec, tier: PrecisionTier) -> Result<CastEval, MpError> {
    let tq = theta.round_to(tier)?;
    Ok(match tq {
        DVec::Ext(v) => CastEval::Extended(v),
        other => CastEval::Native(other.to_f64_vec()),
    })
}

fn fd_core<T: Real>(kind: &Kind, theta: &[T], eps: T, tier: PrecisionTier) -> Result<Vec<T>, MpError> {
    let two_eps = eps.add(eps);
    let mut g = Vec::with_capacity(theta.len());
    let mut work = theta.to_vec();
    for k in 0..theta.len() {
        work[k] = theta[k].add(eps);
        let f_plus = kind.objective::<T>(&work, tier)?;
        work[k] = theta[k].sub(eps);
        let f_minus = kind.objective::<T>(&work, tier)?;
        work[k] = theta[k];
        g.push(f_plus.sub(f_minus).div(two_eps));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig_sym_min, fro_norm, matvec_t, norm2, vec_sub};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_problems() -> Vec<(Problem, Vec<f64>)> {
        // each family with a theta box where gradients are well away from zero
        let mut out = Vec::new();
        for family in [FamilyName::PolyExp, FamilyName::SinePoly, FamilyName::LinNonlin] {
            let spec = ProblemSpec::family(family).with_seed(9);
            let p = build_problem(&spec).unwrap();
            let lo_hi = match family {
                FamilyName::LinNonlin => (0.3, 1.4),
                _ => (0.4, 1.6),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(101);
            let th: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(lo_hi.0..lo_hi.1)).collect();
            out.push((p, th));
        }
        let spec = ProblemSpec::family(FamilyName::SqrtControlled);
        out.push((build_problem(&spec).unwrap(), vec![0.9, 1.3]));

        let (x, y) = tiny_classification_data();
        for family in [FamilyName::LogisticBCE, FamilyName::SquaredErrorSigmoid] {
            let spec = ProblemSpec::family(family);
            let p = build_problem_with_data(&spec, x.clone(), y.clone()).unwrap();
            out.push((p, vec![0.3, -0.7, 0.5]));
        }
        out
    }

    fn tiny_classification_data() -> (Mat<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 40;
        let x = Mat::from_fn(n, 3, |_, j| if j == 2 { 1.0 } else { rng.gen_range(-1.0..1.0) });
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let z = 1.5 * x[(i, 0)] - 0.8 * x[(i, 1)] + 0.2;
                if z + rng.gen_range(-0.3..0.3) > 0.0 { 1.0 } else { 0.0 }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let eps = PrecisionTier::P64.unit_roundoff().sqrt();
        for (p, th_base) in sample_problems() {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let th: Vec<f64> = th_base.iter().map(|&v| v + rng.gen_range(-0.05..0.05)).collect();
                let theta = DVec::F64(th);
                let g = p.gradient(&theta, PrecisionTier::P64).unwrap().to_f64_vec();
                let fd = p.fd_gradient(&theta, eps, PrecisionTier::P64).unwrap().to_f64_vec();
                let rel = norm2(&vec_sub(&fd, &g)) / norm2(&g);
                assert!(rel <= 1e-5, "{}: fd mismatch rel {rel:e}", p.family_name());
            }
        }
    }

    #[test]
    fn hessian_is_symmetric_and_matches_gradient_differences() {
        for (p, th) in sample_problems() {
            let theta = DVec::F64(th.clone());
            let h = p.hessian(&theta, PrecisionTier::P64).unwrap().to_f64_mat();
            let gap = fro_norm(&h.sub(&h.transpose()));
            assert!(gap <= 1e-12 * fro_norm(&h), "{}: asymmetry {gap:e}", p.family_name());

            // directional check: d/dt g(theta + t e_0) ~ H e_0
            let eps = 1e-6;
            let mut plus = th.clone();
            plus[0] += eps;
            let mut minus = th.clone();
            minus[0] -= eps;
            let gp = p.gradient(&DVec::F64(plus), PrecisionTier::P64).unwrap().to_f64_vec();
            let gm = p.gradient(&DVec::F64(minus), PrecisionTier::P64).unwrap().to_f64_vec();
            let col: Vec<f64> = (0..p.dim()).map(|i| (gp[i] - gm[i]) / (2.0 * eps)).collect();
            let hcol = h.col(0);
            let rel = norm2(&vec_sub(&col, &hcol)) / norm2(&hcol).max(1e-30);
            assert!(rel <= 1e-4, "{}: hessian column mismatch rel {rel:e}", p.family_name());
        }
    }

    #[test]
    fn least_squares_identities_hold() {
        for (p, th) in sample_problems() {
            if !p.is_least_squares() {
                continue;
            }
            let theta = DVec::F64(th);
            let g = p.gradient(&theta, PrecisionTier::P64).unwrap().to_f64_vec();
            let (r, j) = p.residuals_jacobian(&theta, PrecisionTier::P64).unwrap();
            let jtr = matvec_t(&j.to_f64_mat(), &r.to_f64_vec());
            let gap = norm2(&vec_sub(&jtr, &g));
            assert!(gap <= 1e-10 * norm2(&g), "{}: J^T R vs g gap {gap:e}", p.family_name());

            // H = J^T J + sum_j r_j hess r_j
            let h = p.hessian(&theta, PrecisionTier::P64).unwrap().to_f64_mat();
            let jm = j.to_f64_mat();
            let mut rebuilt = crate::linalg::matmul(&jm.transpose(), &jm);
            let rv = r.to_f64_vec();
            for jj in 0..rv.len() {
                let rh = p.residual_hessian(&theta, jj, PrecisionTier::P64).unwrap().to_f64_mat();
                rebuilt = rebuilt.add(&rh.scale(rv[jj]));
            }
            let hgap = fro_norm(&rebuilt.sub(&h));
            assert!(hgap <= 1e-10 * fro_norm(&h), "{}: curvature split gap {hgap:e}", p.family_name());
        }
    }

    #[test]
    fn residual_hessian_matches_second_differences() {
        let eps = PrecisionTier::P64.unit_roundoff().powf(1.0 / 3.0);
        for (p, th) in sample_problems() {
            if !p.is_least_squares() {
                continue;
            }
            // pick the row with the strongest curvature so the relative gate
            // is meaningful (rows with sigma'' near zero drown in rounding)
            let n_data = match p.kind() {
                Kind::SquaredErrorSigmoid { x, .. } => x.rows(),
                _ => p.n_residuals().unwrap(),
            };
            let theta = DVec::F64(th.clone());
            let j = (0..n_data)
                .max_by(|&a, &b| {
                    let na = fro_norm(&p.residual_hessian(&theta, a, PrecisionTier::P64).unwrap().to_f64_mat());
                    let nb = fro_norm(&p.residual_hessian(&theta, b, PrecisionTier::P64).unwrap().to_f64_mat());
                    na.partial_cmp(&nb).unwrap()
                })
                .unwrap();
            let rh = p.residual_hessian(&theta, j, PrecisionTier::P64).unwrap().to_f64_mat();
            let r_at = |t: &[f64]| -> f64 {
                let (r, _) = p.residuals_jacobian(&DVec::F64(t.to_vec()), PrecisionTier::P64).unwrap();
                r.to_f64_vec()[j]
            };
            let d = p.dim();
            let mut fd = Mat::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    let mut tpp = th.clone();
                    tpp[a] += eps;
                    tpp[b] += eps;
                    let mut tpm = th.clone();
                    tpm[a] += eps;
                    tpm[b] -= eps;
                    let mut tmp = th.clone();
                    tmp[a] -= eps;
                    tmp[b] += eps;
                    let mut tmm = th.clone();
                    tmm[a] -= eps;
                    tmm[b] -= eps;
                    fd[(a, b)] = (r_at(&tpp) - r_at(&tpm) - r_at(&tmp) + r_at(&tmm)) / (4.0 * eps * eps);
                }
            }
            let scale = fro_norm(&rh).max(1e-8);
            let gap = fro_norm(&fd.sub(&rh));
            assert!(gap <= 1e-4 * scale, "{}: hess r_j mismatch {gap:e} vs {scale:e}", p.family_name());
        }
    }

    #[test]
    fn bce_hessian_stays_positive_definite() {
        let (x, y) = tiny_classification_data();
        let spec = ProblemSpec::family(FamilyName::LogisticBCE);
        let p = build_problem_with_data(&spec, x, y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let th: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let h = p.hessian(&DVec::F64(th), PrecisionTier::P64).unwrap().to_f64_mat();
            let min = eig_sym_min(&h).unwrap();
            assert!(min > 0.0, "lambda-regularized BCE Hessian must be PD, got {min:e}");
        }
    }

    #[test]
    fn non_least_squares_families_reject_residual_calls() {
        let p = build_problem(&ProblemSpec::family(FamilyName::SqrtControlled)).unwrap();
        let theta = DVec::F64(vec![0.1, 0.2]);
        assert!(matches!(p.residuals_jacobian(&theta, PrecisionTier::P64), Err(MpError::Unsupported(_))));

        let (x, y) = tiny_classification_data();
        let bce = build_problem_with_data(&ProblemSpec::family(FamilyName::LogisticBCE), x, y).unwrap();
        let theta = DVec::F64(vec![0.0; 3]);
        assert!(matches!(bce.residuals_jacobian(&theta, PrecisionTier::P64), Err(MpError::Unsupported(_))));
    }

    #[test]
    fn logistic_at_zero_theta_gives_ln2() {
        let (x, y) = tiny_classification_data();
        // balance labels exactly: ln 2 holds for any label mix at theta=0,
        // but pin the textbook case
        let spec = ProblemSpec::family(FamilyName::LogisticBCE);
        let p = build_problem_with_data(&spec, x, y).unwrap();
        let f = p.objective(&DVec::F64(vec![0.0; 3]), PrecisionTier::P64).unwrap().value_f64();
        assert!((f - std::f64::consts::LN_2).abs() < 1e-14, "BCE at theta=0: {f}");
    }

    #[test]
    fn sqrt_controlled_gradient_vanishes_at_anchor() {
        let p = build_problem(&ProblemSpec::family(FamilyName::SqrtControlled)).unwrap();
        let (a, b) = match p.kind() {
            Kind::SqrtControlled { a, b, .. } => (*a, *b),
            _ => unreachable!(),
        };
        let g = p.gradient(&DVec::F64(vec![a, b]), PrecisionTier::P64).unwrap().to_f64_vec();
        assert_eq!(g, vec![0.0, 0.0]);
        let h = p.hessian(&DVec::F64(vec![a, b]), PrecisionTier::P64).unwrap().to_f64_mat();
        let kind_ratio = h[(0, 0)] / h[(1, 1)];
        let kappa = crate::linalg::cond_2(&h).unwrap();
        assert!((kappa - kind_ratio).abs() <= 1e-10 * kind_ratio);
    }

    #[test]
    fn fd_gradient_guards_and_freezes() {
        let p = build_problem(&ProblemSpec::family(FamilyName::SinePoly).with_seed(4)).unwrap();
        let theta = DVec::F64(vec![1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            p.fd_gradient(&theta, 1e-50, PrecisionTier::P32),
            Err(MpError::DegenerateEpsilon { .. })
        ));
        assert!(p.fd_gradient(&theta, 0.0, PrecisionTier::P64).is_err());

        // eps = 1e-14 survives representation at P32, but theta +- eps
        // collapses, so the difference quotient is identically zero
        let g = p.fd_gradient(&theta, 1e-14, PrecisionTier::P32).unwrap().to_f64_vec();
        assert!(g.iter().all(|&v| v == 0.0), "frozen quotient expected, got {g:?}");

        // a sane eps at P64 tracks the analytic gradient
        let eps = PrecisionTier::P64.unit_roundoff().sqrt();
        let g = p.fd_gradient(&theta, eps, PrecisionTier::P64).unwrap().to_f64_vec();
        let ga = p.gradient(&theta, PrecisionTier::P64).unwrap().to_f64_vec();
        let rel = norm2(&vec_sub(&g, &ga)) / norm2(&ga);
        assert!(rel <= 1e-6, "fd at sqrt(u): rel {rel:e}");
    }

    #[test]
    fn clamp_raises_trace_flag() {
        let (x, y) = tiny_classification_data();
        let p = build_problem_with_data(&ProblemSpec::family(FamilyName::LogisticBCE), x, y).unwrap();
        flags::take();
        // extreme theta saturates the sigmoid past the P32 guard
        let _ = p.objective(&DVec::F64(vec![60.0, -60.0, 40.0]), PrecisionTier::P32).unwrap();
        assert_eq!(flags::take() & flags::CLAMPED_PREDICTION, flags::CLAMPED_PREDICTION);
        // and the flag is cleared by draining
        assert_eq!(flags::take(), 0);
    }

    #[test]
    fn cast_semantics_quantize_input_and_output() {
        let p = build_problem(&ProblemSpec::family(FamilyName::PolyExp).with_seed(1)).unwrap();
        let th = vec![0.1, 0.2];
        let g32 = p.gradient(&DVec::F64(th.clone()), PrecisionTier::P32).unwrap();
        assert_eq!(g32.tier(), PrecisionTier::P32);
        // evaluating at the pre-quantized theta in f64 and rounding the output
        // must agree exactly: the eval tier is f64 either way
        let thq: Vec<f64> = th.iter().map(|&v| (v as f32) as f64).collect();
        let g64 = p.gradient(&DVec::F64(thq), PrecisionTier::P64).unwrap();
        let rounded = g64.round_to(PrecisionTier::P32).unwrap();
        assert_eq!(g32.to_f64_vec(), rounded.to_f64_vec());
    }
}
