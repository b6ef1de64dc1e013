//! Decoupled-weight-decay Adam at a single precision tier: the first-order
//! baseline the Newton runs are compared against. All update arithmetic
//! goes through [`Real`], so the counter sees it and a run can be stopped
//! on a flop budget instead of wall-clock.

use crate::error::{MpError, Result};
use crate::linalg::DVec;
use crate::models::{flags as model_flags, Problem};
use crate::precision::{flops, Dd, PrecisionTier, Real};

use super::tier::TierData;
use super::trace::{digest_theta, rel_error_f64, IterationRecord, Trace};
use super::PrecisionPolicy;

/// Stability constant added to sqrt(v_hat) in the denominator.
pub const ADAM_EPS: f64 = 1e-8;

/// One AdamW update in place, every operation at T. `b1_pow` and `b2_pow`
/// are beta1^t and beta2^t for the current step count t >= 1; the caller
/// advances them. With a zero gradient the moment terms stay zero and the
/// update reduces to theta <- theta - lr * weight_decay * theta, which is
/// the decoupled decay acting alone.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step<T: Real>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    b1_pow: T,
    b2_pow: T,
    lr: T,
    beta1: T,
    beta2: T,
    weight_decay: T,
) {
    let one = T::one();
    let eps = T::from_f64(ADAM_EPS);
    for i in 0..theta.len() {
        m[i] = beta1.mul(m[i]).add(one.sub(beta1).mul(grad[i]));
        v[i] = beta2.mul(v[i]).add(one.sub(beta2).mul(grad[i].mul(grad[i])));
        let m_hat = m[i].div(one.sub(b1_pow));
        let v_hat = v[i].div(one.sub(b2_pow));
        let update = lr.mul(m_hat).div(v_hat.sqrt().add(eps));
        theta[i] = theta[i].sub(lr.mul(weight_decay).mul(theta[i])).sub(update);
    }
}

/// AdamW with the default run shape: no flop budget, no error reference.
#[allow(clippy::too_many_arguments)]
pub fn adamw_minimize(
    p: &Problem,
    theta0: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    tier: PrecisionTier,
    maxit: usize,
) -> Result<Trace> {
    adamw_minimize_with_budget(p, theta0, lr, beta1, beta2, weight_decay, tier, maxit, None, None)
}

/// AdamW with an optional flop budget and error reference. The budget
/// counts every scalar operation on this thread from the start of the run
/// (gradient evaluations plus update arithmetic); once spent, the run stops
/// and the last record carries a "flop_budget_exhausted" flag. Matched-
/// budget comparisons against Newton use this in place of wall-clock.
#[allow(clippy::too_many_arguments)]
pub fn adamw_minimize_with_budget(
    p: &Problem,
    theta0: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    tier: PrecisionTier,
    maxit: usize,
    flop_budget: Option<u64>,
    theta_star: Option<&[f64]>,
) -> Result<Trace> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(MpError::Config(format!("adamw needs lr > 0, got {lr}")));
    }
    for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
        if !b.is_finite() || !(0.0..1.0).contains(&b) || b == 0.0 {
            return Err(MpError::Config(format!("adamw needs {name} in (0, 1), got {b}")));
        }
    }
    if !weight_decay.is_finite() || weight_decay < 0.0 {
        return Err(MpError::Config(format!(
            "adamw needs weight_decay >= 0, got {weight_decay}"
        )));
    }
    if theta0.len() != p.dim() {
        return Err(MpError::Config(format!(
            "theta0 has {} entries, problem {} has dimension {}",
            theta0.len(),
            p.family_name(),
            p.dim()
        )));
    }
    match tier {
        PrecisionTier::P32 => run::<f32>(p, theta0, lr, beta1, beta2, weight_decay, tier, maxit, flop_budget, theta_star),
        PrecisionTier::P64 => run::<f64>(p, theta0, lr, beta1, beta2, weight_decay, tier, maxit, flop_budget, theta_star),
        PrecisionTier::Ext => run::<Dd>(p, theta0, lr, beta1, beta2, weight_decay, tier, maxit, flop_budget, theta_star),
    }
}

#[allow(clippy::too_many_arguments)]
fn run<T: TierData>(
    p: &Problem,
    theta0: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    tier: PrecisionTier,
    maxit: usize,
    flop_budget: Option<u64>,
    theta_star: Option<&[f64]>,
) -> Result<Trace> {
    let n = theta0.len();
    let start_flops = flops::total();
    let _ = model_flags::take();
    let mut theta: Vec<T> = theta0.iter().map(|v| T::from_f64(*v)).collect();
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: "adamw starting point".into(),
        });
    }
    let (lr_t, b1, b2, wd) = (
        T::from_f64(lr),
        T::from_f64(beta1),
        T::from_f64(beta2),
        T::from_f64(weight_decay),
    );
    let mut m = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut b1_pow = T::one();
    let mut b2_pow = T::one();

    let mut trace = Trace {
        records: vec![],
        policy: PrecisionPolicy::uniform(tier),
        problem_id: p.family_name().to_string(),
        theta0: theta0.to_vec(),
        theta_star_digest: theta_star.map(digest_theta),
        seed: 0,
        theta_history: vec![],
        audits: vec![],
        final_theta: T::lift(theta.clone()),
        curvature_flops: vec![],
    };

    let push_record = |trace: &mut Trace, index: usize, x: &DVec, grad_norm: f64, loss: f64, step_norm: f64| {
        let xf = x.to_f64_vec();
        let flags = super::drain_flags_sorted(vec![]);
        trace.records.push(IterationRecord {
            index,
            theta_snapshot_norm: x.norm2_f64(),
            rel_error: rel_error_f64(&xf, theta_star),
            grad_norm,
            loss,
            step_norm,
            solver_iterations: 0,
            elapsed_ns: 0,
            flags,
        });
        trace.theta_history.push(x.clone());
    };

    let x0 = T::lift(theta.clone());
    let mut grad = p.gradient(&x0, tier)?;
    let loss0 = p.objective(&x0, tier)?.value_f64();
    push_record(&mut trace, 0, &x0, grad.norm2_f64(), loss0, 0.0);

    for it in 1..=maxit {
        if let Some(budget) = flop_budget {
            if flops::total().wrapping_sub(start_flops) >= budget {
                let last = trace.records.last_mut().expect("record 0 exists");
                last.flags.push("flop_budget_exhausted".into());
                last.flags.sort();
                last.flags.dedup();
                break;
            }
        }
        let g = T::vec(&grad).to_vec();
        let prev: Vec<f64> = theta.iter().map(|t| t.to_f64()).collect();
        b1_pow = b1_pow.mul(b1);
        b2_pow = b2_pow.mul(b2);
        adamw_step(&mut theta, &g, &mut m, &mut v, b1_pow, b2_pow, lr_t, b1, b2, wd);
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(MpError::Overflow {
                tier: T::TIER.label(),
                context: format!("adamw update diverged at iteration {it}"),
            });
        }
        let x = T::lift(theta.clone());
        grad = p.gradient(&x, tier)?;
        let loss = p.objective(&x, tier)?.value_f64();
        let step_norm = theta
            .iter()
            .zip(&prev)
            .map(|(t, pv)| {
                let d = t.to_f64() - pv;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        push_record(&mut trace, it, &x, grad.norm2_f64(), loss, step_norm);
    }

    trace.final_theta = T::lift(theta);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::models::{Kind, Problem};

    fn quadratic_bowl() -> Problem {
        let q = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 0.3 });
        Problem::from_kind(Kind::QuadraticProbe { q, c: vec![0.4, -0.2] })
    }

    #[test]
    fn zero_gradient_decays_by_weight_decay_alone() {
        let mut theta = [3.0f64, -1.5, 0.25];
        let grad = [0.0f64; 3];
        let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
        let (lr, wd) = (1e-2, 1e-2);
        let expected: Vec<f64> = theta.iter().map(|t| t - lr * wd * t).collect();
        let before = theta;
        adamw_step(&mut theta, &grad, &mut m, &mut v, 0.9, 0.999, lr, 0.9, 0.999, wd);
        for ((got, want), orig) in theta.iter().zip(&expected).zip(&before) {
            assert_eq!(got, want);
            assert!(got.abs() < orig.abs());
        }
        assert_eq!(m, [0.0; 3]);
        assert_eq!(v, [0.0; 3]);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let p = quadratic_bowl();
        let th = [1.0, 1.0];
        for (lr, b1, b2, wd) in [
            (0.0, 0.9, 0.999, 1e-2),
            (-1e-2, 0.9, 0.999, 1e-2),
            (1e-2, 1.0, 0.999, 1e-2),
            (1e-2, 0.9, 0.0, 1e-2),
            (1e-2, 0.9, 0.999, -0.5),
        ] {
            let r = adamw_minimize(&p, &th, lr, b1, b2, wd, PrecisionTier::P64, 3);
            assert!(matches!(r, Err(MpError::Config(_))), "accepted lr={lr} b1={b1} b2={b2} wd={wd}");
        }
    }

    #[test]
    fn descends_on_a_quadratic() {
        let p = quadratic_bowl();
        let trace = adamw_minimize(&p, &[2.0, -2.0], 1e-2, 0.9, 0.999, 1e-4, PrecisionTier::P64, 400).unwrap();
        assert_eq!(trace.records.len(), 401);
        let first = trace.records[0].grad_norm;
        let last = trace.final_record().grad_norm;
        // constant-lr adam settles into a small limit cycle rather than
        // converging, so the gate is a coarse factor, not a tight one
        assert!(last < first / 10.0, "grad {first:.3e} -> {last:.3e}");
        // indices strictly increase and step norms are recorded
        for (i, r) in trace.records.iter().enumerate() {
            assert_eq!(r.index, i);
        }
        assert!(trace.records[1].step_norm > 0.0);
    }

    #[test]
    fn overflow_at_tier_aborts() {
        let p = quadratic_bowl();
        let r = adamw_minimize(&p, &[1e30, 0.0], 1e-2, 0.9, 0.999, 1e-2, PrecisionTier::P32, 5);
        assert!(matches!(r, Err(MpError::Overflow { .. })));
    }

    #[test]
    fn flop_budget_stops_the_run() {
        let p = quadratic_bowl();
        let full = adamw_minimize_with_budget(
            &p, &[2.0, -2.0], 1e-2, 0.9, 0.999, 1e-2, PrecisionTier::P64, 50, None, None,
        )
        .unwrap();
        assert_eq!(full.steps(), 50);
        let capped = adamw_minimize_with_budget(
            &p, &[2.0, -2.0], 1e-2, 0.9, 0.999, 1e-2, PrecisionTier::P64, 50, Some(500), None,
        )
        .unwrap();
        assert!(capped.steps() < 50, "took {} steps", capped.steps());
        let last_flags = &capped.final_record().flags;
        assert!(last_flags.iter().any(|f| f == "flop_budget_exhausted"));
    }

    #[test]
    fn rel_error_tracks_reference() {
        let p = quadratic_bowl();
        // minimizer of the bowl: Q theta = c
        let q = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 0.3 });
        let f = crate::linalg::lu_factor(&q).unwrap();
        let star = f.solve(&[0.4, -0.2]);
        let trace = adamw_minimize_with_budget(
            &p, &[1.0, 1.0], 2e-2, 0.9, 0.999, 1e-4, PrecisionTier::P64, 500, None, Some(&star),
        )
        .unwrap();
        let first = trace.records[0].rel_error;
        let last = trace.final_record().rel_error;
        assert!(first.is_finite() && last.is_finite());
        assert!(last < first / 5.0, "rel_error {first:.3e} -> {last:.3e}");
        assert!(trace.theta_star_digest.is_some());
    }
}
