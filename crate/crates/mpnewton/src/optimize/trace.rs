//! Per-iteration records, the run trace that collects them, and the
//! backward-error audit entries attached to inexact solves. Everything a
//! convergence figure or a summary table reads comes out of these types.

use std::cell::Cell;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::linalg::DVec;

use super::PrecisionPolicy;

thread_local! {
    static TIMINGS: Cell<bool> = const { Cell::new(false) };
}

/// Turn wall-clock capture on or off for traces produced on this thread.
/// Off by default, so `elapsed_ns` stays 0 and trace files are
/// byte-reproducible across machines.
pub fn set_timings(enabled: bool) {
    TIMINGS.with(|t| t.set(enabled));
}

pub(crate) fn timings_enabled() -> bool {
    TIMINGS.with(|t| t.get())
}

/// One optimizer iteration as the run saw it. Index 0 describes the starting
/// point (no step taken yet); every later record is appended after the
/// update completes, so indices increase strictly.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub index: usize,
    pub theta_snapshot_norm: f64,
    /// |theta - theta*| / |theta*| at P64; NaN when no reference was given.
    pub rel_error: f64,
    /// Gradient norm at the gradient tier of the policy.
    pub grad_norm: f64,
    /// Objective value at the working tier.
    pub loss: f64,
    pub step_norm: f64,
    /// Inner solver iterations (1 for a direct solve, 0 before any step).
    pub solver_iterations: usize,
    /// 0 unless timings were switched on via [`set_timings`].
    pub elapsed_ns: u64,
    /// Sorted, deduplicated event tokens ("clamped_bce", "plateau", ...).
    pub flags: Vec<String>,
}

/// Backward-error audit of one inexact Newton solve. All quantities are
/// recomputed at P64 from the tier-rounded system the solver actually saw,
/// with the residual `r = -g - H d` formed fresh so the audit does not
/// trust the solver's own recurrence.
#[derive(Clone, Debug)]
pub struct StepAudit {
    /// Record index of the step this audit belongs to.
    pub index: usize,
    /// |r| / |d|: the norm of the equivalent Hessian perturbation.
    pub backward_error: f64,
    /// |r| / |H d|: the inexactness level the step actually achieved.
    pub eta_observed: f64,
    /// |H d| / (|H| |d|), the alignment factor in the perturbation bound.
    pub sigma: f64,
    pub h_norm: f64,
    pub kappa: f64,
    /// phi k / (1 - phi k) with phi = |r| / (|H| |d|); infinite once
    /// phi k reaches 1, meaning the perturbation can no longer be
    /// certified small relative to H.
    pub eta_reconstructed: f64,
    /// |r| / |g|, the classical inexact-Newton forcing ratio.
    pub residual_over_grad: f64,
}

/// Everything one optimizer run produced. `records` is nonempty on any
/// completed run (the starting point always gets a record), and
/// `theta_history` holds the full-precision iterate per record so accuracy
/// below P64 resolution can still be measured afterwards.
#[derive(Clone, Debug)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
    pub policy: PrecisionPolicy,
    pub problem_id: String,
    pub theta0: Vec<f64>,
    /// SHA-256 of the reference minimizer bytes, when one was supplied.
    pub theta_star_digest: Option<String>,
    pub seed: u64,
    /// Iterate per record, at the working tier.
    pub theta_history: Vec<DVec>,
    /// One entry per iterative solve that completed.
    pub audits: Vec<StepAudit>,
    pub final_theta: DVec,
    /// Flops spent assembling second-order curvature terms, per step.
    pub curvature_flops: Vec<u64>,
}

/// CSV column header, fixed verbatim; downstream tooling greps for it.
pub const TRACE_CSV_HEADER: &str =
    "iter,rel_error,grad_norm,loss,step_norm,solver_iters,elapsed_ns,flags";

impl Trace {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("completed runs have records")
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_norm).collect()
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rel_error).collect()
    }

    /// Plateau level of the gradient norm, see [`plateau`].
    pub fn plateau_grad_norm(&self) -> f64 {
        plateau(&self.grad_norms())
    }

    /// Plateau level of the relative error, see [`plateau`].
    pub fn plateau_rel_error(&self) -> f64 {
        plateau(&self.rel_errors())
    }

    /// Total Newton steps taken (records minus the starting snapshot).
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// Serialize the records. Floats print with Rust debug formatting, so
    /// NaN and infinities survive a round trip through text, and flags are
    /// joined with ';' inside the one flags column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{},{},{}",
                r.index,
                r.rel_error,
                r.grad_norm,
                r.loss,
                r.step_norm,
                r.solver_iterations,
                r.elapsed_ns,
                r.flags.join(";")
            );
        }
        out
    }
}

/// The "final plateau" statistic used whenever a run is compared against an
/// accuracy bound: the median of the last five recorded values (fewer when
/// the run was shorter). A median because the last iterations of a stalled
/// run bounce around the noise floor rather than sitting on it.
pub fn plateau(values: &[f64]) -> f64 {
    let tail: Vec<f64> = values
        .iter()
        .rev()
        .take(5)
        .copied()
        .filter(|v| !v.is_nan())
        .collect();
    if tail.is_empty() {
        return f64::NAN;
    }
    let mut sorted = tail;
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Content digest of a reference minimizer, stored in traces so a figure
/// can assert two runs were measured against the same theta*.
pub fn digest_theta(theta: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in theta {
        h.update(v.to_le_bytes());
    }
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Relative error against an optional reference, measured in plain f64.
/// Falls back to the absolute error for a zero reference and to NaN when
/// there is no reference at all.
pub(crate) fn rel_error_f64(x: &[f64], star: Option<&[f64]>) -> f64 {
    let Some(star) = star else {
        return f64::NAN;
    };
    let mut diff = 0.0f64;
    let mut base = 0.0f64;
    for (a, b) in x.iter().zip(star) {
        diff += (a - b) * (a - b);
        base += b * b;
    }
    let diff = diff.sqrt();
    let base = base.sqrt();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}
