//! Newton-family minimization under a three-tier precision policy, the
//! AdamW baseline, and the per-run records everything downstream reads.
//!
//! A policy names three tiers: gradients are evaluated at pi_g, curvature
//! and the iterate live at pi_w, and the linear system is rounded to pi_l
//! before it is solved. Steps are pure Newton steps, no line search and no
//! trust region; runs that diverge are reported, not rescued.

mod adamw;
mod gnk;
mod tier;
mod trace;

pub use adamw::{adamw_minimize, adamw_minimize_with_budget, adamw_step, ADAM_EPS};
pub use gnk::{gn_k_curvature, select_top_residuals, GnkCurvature};
pub use trace::{
    digest_theta, plateau, set_timings, IterationRecord, StepAudit, Trace, TRACE_CSV_HEADER,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MpError, Result};
use crate::linalg::{
    cond_2, lu_factor, matmul, matvec, matvec_t, norm2, spectral_norm, DMat, DVec, Mat,
};
use crate::linsolve::{cg_observed, cgls_k_observed, DirectionRule};
use crate::models::{flags as model_flags, Problem};
use crate::precision::{Dd, PrecisionTier, Real};

use tier::TierData;
use trace::{rel_error_f64, timings_enabled};

/// Iteration cap for the inner iterative solvers. Generous for the system
/// sizes here, so hitting it means the solve stalled, not that the budget
/// was short.
pub const INNER_SOLVER_MAXIT: usize = 200;

/// Where the curvature matrix comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianSource {
    /// Analytic Hessian, evaluated at pi_w.
    Exact,
    /// J^T J at pi_w; least-squares families only.
    GaussNewton,
    /// J^T J plus the residual Hessians of the k percent largest residuals.
    GnK { k_percent: f64 },
}

/// How the Newton system is solved at pi_l.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    Lu,
    /// Conjugate gradients on B d = -g, stopping at |r| <= eta |g|.
    Cg { eta: f64 },
    /// CG applying J^T(J p) + S p sequentially instead of forming B.
    CgSmart { eta: f64 },
    /// The regularized least-squares recursion on (J, S, -R).
    CglsK { tol: f64 },
}

/// Where the gradient comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSource {
    Analytic,
    /// Central differences with probe width eps, evaluated at pi_g.
    FiniteDifference { eps: f64 },
}

/// The three evaluation tiers plus the algorithmic choices hanging off
/// them. Tiers serialize as "32" / "64" / "ext"; the enum knobs use
/// snake_case tables (`linear_solver = { cg = { eta = 0.1 } }`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecisionPolicy {
    pub pi_g: PrecisionTier,
    pub pi_w: PrecisionTier,
    pub pi_l: PrecisionTier,
    pub hessian_source: HessianSource,
    pub linear_solver: LinearSolver,
    pub gradient_source: GradientSource,
    /// Permit runs that violate u(pi_g) <= u(pi_w) <= u(pi_l). The ordering
    /// is what the accuracy analysis assumes; inverted runs are for probing
    /// what goes wrong, not for drawing conclusions.
    pub allow_tier_inversion: bool,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            pi_g: PrecisionTier::P64,
            pi_w: PrecisionTier::P64,
            pi_l: PrecisionTier::P64,
            hessian_source: HessianSource::Exact,
            linear_solver: LinearSolver::Lu,
            gradient_source: GradientSource::Analytic,
            allow_tier_inversion: false,
        }
    }
}

impl PrecisionPolicy {
    /// Everything at one tier, exact Hessian, LU.
    pub fn uniform(tier: PrecisionTier) -> Self {
        PrecisionPolicy { pi_g: tier, pi_w: tier, pi_l: tier, ..Default::default() }
    }

    /// A tier triple with the default algorithmic choices.
    pub fn with_tiers(pi_g: PrecisionTier, pi_w: PrecisionTier, pi_l: PrecisionTier) -> Self {
        PrecisionPolicy { pi_g, pi_w, pi_l, ..Default::default() }
    }

    /// The "(ext,64,32)" naming used in legends and logs.
    pub fn label(&self) -> String {
        format!("({},{},{})", self.pi_g.label(), self.pi_w.label(), self.pi_l.label())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.allow_tier_inversion {
            let (ug, uw, ul) = (
                self.pi_g.unit_roundoff(),
                self.pi_w.unit_roundoff(),
                self.pi_l.unit_roundoff(),
            );
            if !(ug <= uw && uw <= ul) {
                return Err(MpError::Config(format!(
                    "tier ordering violated for {}: need u(pi_g) <= u(pi_w) <= u(pi_l); \
                     set allow_tier_inversion to run anyway",
                    self.label()
                )));
            }
        }
        if let HessianSource::GnK { k_percent } = self.hessian_source {
            if !k_percent.is_finite() || !(0.0..=100.0).contains(&k_percent) {
                return Err(MpError::Config(format!(
                    "gn_k coverage must lie in [0, 100], got {k_percent}"
                )));
            }
        }
        match self.linear_solver {
            LinearSolver::Lu => {}
            LinearSolver::Cg { eta } | LinearSolver::CgSmart { eta } => {
                if !eta.is_finite() || eta <= 0.0 || eta >= 1.0 {
                    return Err(MpError::Config(format!(
                        "cg forcing term must lie in (0, 1), got {eta}"
                    )));
                }
            }
            LinearSolver::CglsK { tol } => {
                if !tol.is_finite() || tol <= 0.0 || tol >= 1.0 {
                    return Err(MpError::Config(format!(
                        "cgls_k tolerance must lie in (0, 1), got {tol}"
                    )));
                }
            }
        }
        if let GradientSource::FiniteDifference { eps } = self.gradient_source {
            if !eps.is_finite() || eps <= 0.0 {
                return Err(MpError::Config(format!(
                    "finite-difference width must be positive, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

/// Curvature handed to the solve, either as one operator or factored.
enum Curvature {
    /// B at pi_w, for the dense-operator solvers.
    Full(DMat),
    /// B = J^T J + S with the pieces kept: J and S at pi_w, residuals at
    /// pi_g. The split solvers consume the pieces, LU and plain CG use B.
    Split { b: DMat, j: DMat, s: DMat, r_g: DVec },
}

impl Curvature {
    fn full(&self) -> &DMat {
        match self {
            Curvature::Full(m) => m,
            Curvature::Split { b, .. } => b,
        }
    }
}

fn build_curvature(p: &Problem, x: &DVec, policy: &PrecisionPolicy) -> Result<(Curvature, u64)> {
    match policy.hessian_source {
        HessianSource::Exact => Ok((Curvature::Full(p.hessian(x, policy.pi_w)?), 0)),
        HessianSource::GaussNewton | HessianSource::GnK { .. } => {
            let k = match policy.hessian_source {
                HessianSource::GnK { k_percent } => k_percent,
                _ => 0.0,
            };
            let (r_g, _) = p.residuals_jacobian(x, policy.pi_g)?;
            let (_, j_w) = p.residuals_jacobian(x, policy.pi_w)?;
            let out = gn_k_curvature(
                &r_g,
                &j_w,
                |jx| p.residual_hessian(x, jx, policy.pi_w),
                k,
                policy.pi_w,
            )?;
            Ok((
                Curvature::Split { b: out.matrix, j: j_w, s: out.s_matrix, r_g },
                out.s_assembly_flops,
            ))
        }
    }
}

struct StepSolve {
    d: DVec,
    iterations: usize,
    converged: bool,
}

fn lu_step<T: TierData>(b_l: &DMat, g_l: &DVec) -> Result<StepSolve> {
    let h = T::mat(b_l);
    let neg_g: Vec<T> = T::vec(g_l).iter().map(|v| v.neg()).collect();
    let f = lu_factor(h)?;
    let d = f.solve(&neg_g);
    if d.iter().any(|v| !v.is_finite()) {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: "newton direction from the lu solve".into(),
        });
    }
    Ok(StepSolve { d: T::lift(d), iterations: 1, converged: true })
}

fn cg_step<T: TierData>(b_l: &DMat, g_l: &DVec, eta: f64) -> Result<StepSolve> {
    let h = T::mat(b_l);
    let neg_g: Vec<T> = T::vec(g_l).iter().map(|v| v.neg()).collect();
    let n = neg_g.len();
    let mut d = vec![T::zero(); n];
    let out = cg_observed(
        |p| matvec(h, p),
        &neg_g,
        &vec![T::zero(); n],
        eta,
        INNER_SOLVER_MAXIT,
        |_k, xk| d.copy_from_slice(xk),
    )?;
    Ok(StepSolve { d: T::lift(d), iterations: out.iterations, converged: out.converged })
}

fn smart_step<T: TierData>(j_l: &DMat, s_l: &DMat, g_l: &DVec, eta: f64) -> Result<StepSolve> {
    let a = T::mat(j_l);
    let s = T::mat(s_l);
    let neg_g: Vec<T> = T::vec(g_l).iter().map(|v| v.neg()).collect();
    let n = neg_g.len();
    let mut d = vec![T::zero(); n];
    let out = cg_observed(
        |p| {
            let ap = matvec(a, p);
            let mut atap = matvec_t(a, &ap);
            let sp = matvec(s, p);
            for (t, w) in atap.iter_mut().zip(&sp) {
                *t = t.add(*w);
            }
            atap
        },
        &neg_g,
        &vec![T::zero(); n],
        eta,
        INNER_SOLVER_MAXIT,
        |_k, xk| d.copy_from_slice(xk),
    )?;
    Ok(StepSolve { d: T::lift(d), iterations: out.iterations, converged: out.converged })
}

fn cgls_step<T: TierData>(j_l: &DMat, s_l: &DMat, r_l: &DVec, tol: f64) -> Result<StepSolve> {
    let a = T::mat(j_l);
    let s = T::mat(s_l);
    let b: Vec<T> = T::vec(r_l).iter().map(|v| v.neg()).collect();
    let n = a.cols();
    let mut d = vec![T::zero(); n];
    let out = cgls_k_observed(
        a,
        s,
        &b,
        &vec![T::zero(); n],
        INNER_SOLVER_MAXIT,
        tol,
        DirectionRule::Reduced,
        |_k, xk, _vk| d.copy_from_slice(xk),
    )?;
    Ok(StepSolve { d: T::lift(d), iterations: out.iterations, converged: out.converged })
}

/// Solve the Newton system at pi_l. Returns the step and, for the iterative
/// solvers, the f64 image of the operator the solver saw, which feeds the
/// backward-error audit.
fn solve_step(
    solver: &LinearSolver,
    curv: &Curvature,
    g: &DVec,
    pi_l: PrecisionTier,
) -> Result<(StepSolve, Option<Mat<f64>>)> {
    let g_l = g.round_to(pi_l)?;
    match solver {
        LinearSolver::Lu => {
            let b_l = curv.full().round_to(pi_l)?;
            let step = match pi_l {
                PrecisionTier::P32 => lu_step::<f32>(&b_l, &g_l),
                PrecisionTier::P64 => lu_step::<f64>(&b_l, &g_l),
                PrecisionTier::Ext => lu_step::<Dd>(&b_l, &g_l),
            }?;
            Ok((step, None))
        }
        LinearSolver::Cg { eta } => {
            let b_l = curv.full().round_to(pi_l)?;
            let step = match pi_l {
                PrecisionTier::P32 => cg_step::<f32>(&b_l, &g_l, *eta),
                PrecisionTier::P64 => cg_step::<f64>(&b_l, &g_l, *eta),
                PrecisionTier::Ext => cg_step::<Dd>(&b_l, &g_l, *eta),
            }?;
            Ok((step, Some(b_l.to_f64_mat())))
        }
        LinearSolver::CgSmart { eta } => {
            let Curvature::Split { j, s, .. } = curv else {
                return Err(MpError::Config(
                    "cg_smart needs the factored curvature; use a gauss_newton or gn_k \
                     hessian source"
                        .into(),
                ));
            };
            let j_l = j.round_to(pi_l)?;
            let s_l = s.round_to(pi_l)?;
            let step = match pi_l {
                PrecisionTier::P32 => smart_step::<f32>(&j_l, &s_l, &g_l, *eta),
                PrecisionTier::P64 => smart_step::<f64>(&j_l, &s_l, &g_l, *eta),
                PrecisionTier::Ext => smart_step::<Dd>(&j_l, &s_l, &g_l, *eta),
            }?;
            let jf = j_l.to_f64_mat();
            let h = matmul(&jf.transpose(), &jf).add(&s_l.to_f64_mat());
            Ok((step, Some(h)))
        }
        LinearSolver::CglsK { tol } => {
            let Curvature::Split { j, s, r_g, .. } = curv else {
                return Err(MpError::Config(
                    "cgls_k needs the factored curvature; use a gauss_newton or gn_k \
                     hessian source"
                        .into(),
                ));
            };
            let j_l = j.round_to(pi_l)?;
            let s_l = s.round_to(pi_l)?;
            let r_l = r_g.round_to(pi_l)?;
            let step = match pi_l {
                PrecisionTier::P32 => cgls_step::<f32>(&j_l, &s_l, &r_l, *tol),
                PrecisionTier::P64 => cgls_step::<f64>(&j_l, &s_l, &r_l, *tol),
                PrecisionTier::Ext => cgls_step::<Dd>(&j_l, &s_l, &r_l, *tol),
            }?;
            let jf = j_l.to_f64_mat();
            let h = matmul(&jf.transpose(), &jf).add(&s_l.to_f64_mat());
            Ok((step, Some(h)))
        }
    }
}

/// Recompute the step residual at P64 against the tier-rounded operator and
/// derive the perturbation-bound quantities from it.
fn rigal_gaches_audit(index: usize, h: &Mat<f64>, d: &[f64], g_l: &[f64]) -> Result<StepAudit> {
    let hd = matvec(h, d);
    let r: Vec<f64> = hd.iter().zip(g_l).map(|(hdi, gi)| -gi - hdi).collect();
    let r_norm = norm2(&r);
    let d_norm = norm2(d);
    let hd_norm = norm2(&hd);
    let h_norm = spectral_norm(h)?;
    let kappa = cond_2(h)?;
    let phi = r_norm / (h_norm * d_norm);
    let pk = phi * kappa;
    Ok(StepAudit {
        index,
        backward_error: r_norm / d_norm,
        eta_observed: r_norm / hd_norm,
        sigma: hd_norm / (h_norm * d_norm),
        h_norm,
        kappa,
        eta_reconstructed: if pk >= 1.0 { f64::INFINITY } else { pk / (1.0 - pk) },
        residual_over_grad: r_norm / norm2(g_l),
    })
}

fn add_vecs<T: Real>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    let out: Vec<T> = a.iter().zip(b).map(|(x, y)| x.add(*y)).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: "newton update x + d".into(),
        });
    }
    Ok(out)
}

/// x + d with every addition at the tier both operands live at.
fn add_at_tier(x: &DVec, d: &DVec) -> Result<DVec> {
    match (x, d) {
        (DVec::F32(a), DVec::F32(b)) => Ok(DVec::F32(add_vecs(a, b)?)),
        (DVec::F64(a), DVec::F64(b)) => Ok(DVec::F64(add_vecs(a, b)?)),
        (DVec::Ext(a), DVec::Ext(b)) => Ok(DVec::Ext(add_vecs(a, b)?)),
        _ => Err(MpError::Config("update tier mismatch".into())),
    }
}

/// Collect pending model-evaluation flags plus whatever the caller adds,
/// sorted and deduplicated.
pub(crate) fn drain_flags_sorted(mut base: Vec<String>) -> Vec<String> {
    let bits = model_flags::take();
    if bits & model_flags::CLAMPED_PREDICTION != 0 {
        base.push("clamped_bce".to_string());
    }
    base.sort();
    base.dedup();
    base
}

fn terminal_record(
    trace: &mut Trace,
    p: &Problem,
    x: &DVec,
    g: &DVec,
    policy: &PrecisionPolicy,
    index: usize,
    flag: &str,
    theta_star: Option<&[f64]>,
) -> Result<()> {
    let loss = p.objective(x, policy.pi_w)?.value_f64();
    let flags = drain_flags_sorted(vec![flag.to_string()]);
    trace.records.push(IterationRecord {
        index,
        theta_snapshot_norm: x.norm2_f64(),
        rel_error: rel_error_f64(&x.to_f64_vec(), theta_star),
        grad_norm: g.norm2_f64(),
        loss,
        step_norm: 0.0,
        solver_iterations: 0,
        elapsed_ns: 0,
        flags,
    });
    trace.theta_history.push(x.clone());
    Ok(())
}

/// Newton iteration under `policy`. Per step: gradient at pi_g, curvature
/// at pi_w per the hessian source, system rounded to pi_l and solved there,
/// direction rounded back to pi_w for the update. Stops at `maxit` or when
/// the gradient norm has not improved by at least 1 percent for 10
/// consecutive iterations, whichever comes first.
///
/// Singular or indefinite curvature ends the run with a flagged record and
/// an Ok trace; overflow at any tier aborts with an error. `theta_star` is
/// only consumed for the rel_error column (NaN when absent).
pub fn newton_minimize(
    p: &Problem,
    theta0: &[f64],
    policy: &PrecisionPolicy,
    maxit: usize,
    theta_star: Option<&[f64]>,
) -> Result<Trace> {
    policy.validate()?;
    if theta0.len() != p.dim() {
        return Err(MpError::Config(format!(
            "theta0 has {} entries, problem {} has dimension {}",
            theta0.len(),
            p.family_name(),
            p.dim()
        )));
    }
    let gn_based = matches!(
        policy.hessian_source,
        HessianSource::GaussNewton | HessianSource::GnK { .. }
    );
    if gn_based && !p.is_least_squares() {
        return Err(MpError::Config(format!(
            "{:?} curvature needs a least-squares family; {} is not one",
            policy.hessian_source,
            p.family_name()
        )));
    }
    if matches!(
        policy.linear_solver,
        LinearSolver::CgSmart { .. } | LinearSolver::CglsK { .. }
    ) && !gn_based
    {
        return Err(MpError::Config(
            "cg_smart and cgls_k apply the curvature through J and S; pick a gauss_newton \
             or gn_k hessian source"
                .into(),
        ));
    }

    let _ = model_flags::take();
    let mut x = DVec::from_f64_slice(theta0, policy.pi_w)?;
    let eval_gradient = |x: &DVec| -> Result<DVec> {
        match policy.gradient_source {
            GradientSource::Analytic => p.gradient(x, policy.pi_g),
            GradientSource::FiniteDifference { eps } => p.fd_gradient(x, eps, policy.pi_g),
        }
    };

    let mut trace = Trace {
        records: vec![],
        policy: policy.clone(),
        problem_id: p.family_name().to_string(),
        theta0: theta0.to_vec(),
        theta_star_digest: theta_star.map(digest_theta),
        seed: 0,
        theta_history: vec![],
        audits: vec![],
        final_theta: x.clone(),
        curvature_flops: vec![],
    };

    let mut g = eval_gradient(&x)?;
    let loss0 = p.objective(&x, policy.pi_w)?.value_f64();
    trace.records.push(IterationRecord {
        index: 0,
        theta_snapshot_norm: x.norm2_f64(),
        rel_error: rel_error_f64(&x.to_f64_vec(), theta_star),
        grad_norm: g.norm2_f64(),
        loss: loss0,
        step_norm: 0.0,
        solver_iterations: 0,
        elapsed_ns: 0,
        flags: drain_flags_sorted(vec![]),
    });
    trace.theta_history.push(x.clone());

    let mut best_grad = trace.records[0].grad_norm;
    let mut stall = 0usize;

    for it in 1..=maxit {
        let started = timings_enabled().then(Instant::now);
        let (curv, curv_flops) = build_curvature(p, &x, policy)?;
        trace.curvature_flops.push(curv_flops);
        let (step, h_audit) = match solve_step(&policy.linear_solver, &curv, &g, policy.pi_l) {
            Ok(v) => v,
            Err(MpError::Singular(_)) => {
                terminal_record(&mut trace, p, &x, &g, policy, it, "singular_h", theta_star)?;
                break;
            }
            Err(MpError::Indefinite(_)) => {
                terminal_record(&mut trace, p, &x, &g, policy, it, "indefinite_h", theta_star)?;
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(h) = &h_audit {
            let g_l = g.round_to(policy.pi_l)?;
            trace
                .audits
                .push(rigal_gaches_audit(it, h, &step.d.to_f64_vec(), &g_l.to_f64_vec())?);
        }
        let d_w = step.d.round_to(policy.pi_w)?;
        x = add_at_tier(&x, &d_w)?;
        g = eval_gradient(&x)?;
        let loss = p.objective(&x, policy.pi_w)?.value_f64();
        let mut extra = vec![];
        if !step.converged {
            extra.push("solver_residual_above_eta".to_string());
        }
        let flags = drain_flags_sorted(extra);
        let elapsed = started.map(|t| t.elapsed().as_nanos() as u64).unwrap_or(0);
        trace.records.push(IterationRecord {
            index: it,
            theta_snapshot_norm: x.norm2_f64(),
            rel_error: rel_error_f64(&x.to_f64_vec(), theta_star),
            grad_norm: g.norm2_f64(),
            loss,
            step_norm: d_w.norm2_f64(),
            solver_iterations: step.iterations,
            elapsed_ns: elapsed,
            flags,
        });
        trace.theta_history.push(x.clone());

        let gn = trace.records.last().expect("just pushed").grad_norm;
        if gn < 0.99 * best_grad {
            best_grad = gn;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 10 {
                let last = trace.records.last_mut().expect("just pushed");
                last.flags.push("plateau".into());
                last.flags.sort();
                last.flags.dedup();
                break;
            }
        }
    }

    trace.final_theta = x;
    Ok(trace)
}
