//! Iterative solvers for the Newton step and extended normal equations.
//!
//! Three entry points, all running every arithmetic operation at a chosen
//! precision tier:
//!   cg        classical conjugate gradient on an explicit operator
//!   cg_smart  CG on (A^T A + S) x = rhs applying the matrix sequentially,
//!             A^T (A p) + S p, so the product A^T A is never formed
//!   cgls_k    the extended-normal-equation solver that additionally avoids
//!             A^T r + S-contaminated residuals via the v_k = -S x_k recursion
//!
//! The CGLS baseline is cgls_k with S = 0; the equivalence is structural,
//! not a separate code path.

use crate::error::{MpError, Result};
use crate::linalg::{dot, matvec, matvec_t, norm2, Mat};
use crate::precision::{Dd, PrecisionTier, Real};

/// Result of one iterative solve. Residual meaning depends on the solver:
/// `cg`/`cg_smart` record the recurrence residual norm of the system they
/// see, `cgls_k` records the reduced residual `s_k = A^T r_k + v_k`.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    /// Entry 0 is the starting residual, one entry per iteration after that.
    pub per_iteration_residuals: Vec<f64>,
}

/// Default stopping tolerance: the unit roundoff of the solve tier.
pub fn default_tol(tier: PrecisionTier) -> f64 {
    tier.unit_roundoff()
}

/// Iteration cap used by the benchmark tables.
pub const DEFAULT_MAXIT: usize = 60;

/// Breakdown guard for the CG-family recursions. Once a run passes its
/// attainable accuracy the loss of orthogonality feeds on itself and the
/// recurrence residual explodes by tens of orders of magnitude, dragging
/// the iterate with it. A residual this far above the best one seen is that
/// explosion, not the bounded oscillation of a converging run, so the solve
/// stops and hands back the best iterate instead.
const BREAKDOWN_FACTOR: f64 = 1e6;

/// Which vector feeds the search-direction update of cgls_k. The source
/// description uses the unreduced residual r_k, which only typechecks for
/// square systems and breaks the CGLS specialization; the reduced residual
/// s_k is what makes S = 0 collapse to textbook CGLS. Both are kept so the
/// discrepancy stays visible instead of silently corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionRule {
    #[default]
    Reduced,
    LiteralResidual,
}

fn cast_vec_checked<T: Real>(v: &[f64], what: &str) -> Result<Vec<T>> {
    let out: Vec<T> = v.iter().map(|x| T::from_f64(*x)).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: format!("casting {what} to the solve tier"),
        });
    }
    Ok(out)
}

fn cast_mat_checked<T: Real>(a: &Mat<f64>, what: &str) -> Result<Mat<T>> {
    let out: Mat<T> = a.cast();
    if !out.is_finite() {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: format!("casting {what} to the solve tier"),
        });
    }
    Ok(out)
}

fn ensure_finite<T: Real>(v: &[T], context: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Conjugate gradient with an explicit operator, all arithmetic at T.
/// Stops when the recurrence residual satisfies |r_k| <= eta |b|.
/// `observe` is called as observe(k, x_k) after every accepted update.
pub fn cg_observed<T: Real>(
    mut apply_a: impl FnMut(&[T]) -> Vec<T>,
    b: &[T],
    x0: &[T],
    eta: f64,
    maxit: usize,
    mut observe: impl FnMut(usize, &[T]),
) -> Result<SolveOutcome> {
    if b.len() != x0.len() {
        return Err(MpError::Config(format!(
            "cg: b has length {}, x0 has length {}",
            b.len(),
            x0.len()
        )));
    }
    let mut x = x0.to_vec();
    let ax0 = apply_a(&x);
    let mut r: Vec<T> = b.iter().zip(&ax0).map(|(bi, ai)| bi.sub(*ai)).collect();
    let b_norm = norm2(b).to_f64();
    let threshold = eta * b_norm;
    let mut rs_old = dot(&r, &r);
    let mut residuals = vec![rs_old.sqrt().to_f64()];
    if residuals[0] <= threshold {
        return Ok(SolveOutcome {
            x: x.iter().map(|v| v.to_f64()).collect(),
            iterations: 0,
            final_residual_norm: residuals[0],
            converged: true,
            per_iteration_residuals: residuals,
        });
    }
    let mut p = r.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut best_res = residuals[0];
    let mut best_x = x.clone();
    let mut broke_down = false;
    for k in 1..=maxit {
        let ap = apply_a(&p);
        ensure_finite(&ap, "cg operator application")?;
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(MpError::Overflow {
                tier: T::TIER.label(),
                context: "cg curvature p^T A p".into(),
            });
        }
        if pap.to_f64() <= 0.0 {
            return Err(MpError::Indefinite(format!(
                "cg: p^T A p = {:e} <= 0 at iteration {k}",
                pap.to_f64()
            )));
        }
        let alpha = rs_old.div(pap);
        for i in 0..x.len() {
            x[i] = x[i].add(alpha.mul(p[i]));
            r[i] = r[i].sub(alpha.mul(ap[i]));
        }
        ensure_finite(&x, "cg iterate")?;
        ensure_finite(&r, "cg residual")?;
        let rs_new = dot(&r, &r);
        let res = rs_new.sqrt().to_f64();
        residuals.push(res);
        iterations = k;
        if best_res > 0.0 && res > BREAKDOWN_FACTOR * best_res {
            x.copy_from_slice(&best_x);
            broke_down = true;
            observe(k, &x);
            break;
        }
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        observe(k, &x);
        if res <= threshold {
            converged = true;
            break;
        }
        let beta = rs_new.div(rs_old);
        for i in 0..p.len() {
            p[i] = r[i].add(beta.mul(p[i]));
        }
        rs_old = rs_new;
    }
    Ok(SolveOutcome {
        x: x.iter().map(|v| v.to_f64()).collect(),
        iterations,
        final_residual_norm: if broke_down { best_res } else { *residuals.last().unwrap() },
        converged,
        per_iteration_residuals: residuals,
    })
}

pub fn cg<T: Real>(
    apply_a: impl FnMut(&[T]) -> Vec<T>,
    b: &[T],
    x0: &[T],
    eta: f64,
    maxit: usize,
) -> Result<SolveOutcome> {
    cg_observed(apply_a, b, x0, eta, maxit, |_, _| {})
}

/// CG on a dense matrix held at f64, solved at the given tier.
pub fn cg_mat(
    a: &Mat<f64>,
    b: &[f64],
    x0: &[f64],
    eta: f64,
    maxit: usize,
    tier: PrecisionTier,
) -> Result<SolveOutcome> {
    fn run<T: Real>(
        a: &Mat<f64>,
        b: &[f64],
        x0: &[f64],
        eta: f64,
        maxit: usize,
    ) -> Result<SolveOutcome> {
        let at: Mat<T> = cast_mat_checked(a, "matrix")?;
        let bt = cast_vec_checked(b, "right-hand side")?;
        let x0t = cast_vec_checked(x0, "starting point")?;
        cg(|p| matvec(&at, p), &bt, &x0t, eta, maxit)
    }
    match tier {
        PrecisionTier::P32 => run::<f32>(a, b, x0, eta, maxit),
        PrecisionTier::P64 => run::<f64>(a, b, x0, eta, maxit),
        PrecisionTier::Ext => run::<Dd>(a, b, x0, eta, maxit),
    }
}

/// The benchmark-table "CG" column: form B = A^T A + S and c = A^T b at the
/// solve tier, then run plain CG on the formed system.
pub fn cg_formed(
    a: &Mat<f64>,
    s: &Mat<f64>,
    b: &[f64],
    x0: &[f64],
    eta: f64,
    maxit: usize,
    tier: PrecisionTier,
) -> Result<SolveOutcome> {
    fn run<T: Real>(
        a: &Mat<f64>,
        s: &Mat<f64>,
        b: &[f64],
        x0: &[f64],
        eta: f64,
        maxit: usize,
    ) -> Result<SolveOutcome> {
        let at: Mat<T> = cast_mat_checked(a, "A")?;
        let st: Mat<T> = cast_mat_checked(s, "S")?;
        let bt = cast_vec_checked(b, "b")?;
        let x0t = cast_vec_checked(x0, "starting point")?;
        let n = at.cols();
        let mut full = Mat::<T>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let gram = dot(&at.col(i), &at.col(j));
                full[(i, j)] = gram.add(st[(i, j)]);
            }
        }
        if !full.is_finite() {
            return Err(MpError::Overflow {
                tier: T::TIER.label(),
                context: "forming A^T A + S".into(),
            });
        }
        let c = matvec_t(&at, &bt);
        ensure_finite(&c, "forming A^T b")?;
        cg(|p| matvec(&full, p), &c, &x0t, eta, maxit)
    }
    match tier {
        PrecisionTier::P32 => run::<f32>(a, s, b, x0, eta, maxit),
        PrecisionTier::P64 => run::<f64>(a, s, b, x0, eta, maxit),
        PrecisionTier::Ext => run::<Dd>(a, s, b, x0, eta, maxit),
    }
}

/// CG on (A^T A + S) x = b_rhs with the product applied sequentially as
/// A^T (A p) + S p. `b_rhs` is the already-reduced right-hand side A^T b.
pub fn cg_smart(
    a: &Mat<f64>,
    s: &Mat<f64>,
    b_rhs: &[f64],
    x0: &[f64],
    eta: f64,
    maxit: usize,
    tier: PrecisionTier,
) -> Result<SolveOutcome> {
    fn run<T: Real>(
        a: &Mat<f64>,
        s: &Mat<f64>,
        b_rhs: &[f64],
        x0: &[f64],
        eta: f64,
        maxit: usize,
    ) -> Result<SolveOutcome> {
        let at: Mat<T> = cast_mat_checked(a, "A")?;
        let st: Mat<T> = cast_mat_checked(s, "S")?;
        let bt = cast_vec_checked(b_rhs, "right-hand side")?;
        let x0t = cast_vec_checked(x0, "starting point")?;
        cg(
            |p| {
                let ap = matvec(&at, p);
                let atap = matvec_t(&at, &ap);
                let sp = matvec(&st, p);
                atap.iter().zip(&sp).map(|(u, v)| u.add(*v)).collect()
            },
            &bt,
            &x0t,
            eta,
            maxit,
        )
    }
    match tier {
        PrecisionTier::P32 => run::<f32>(a, s, b_rhs, x0, eta, maxit),
        PrecisionTier::P64 => run::<f64>(a, s, b_rhs, x0, eta, maxit),
        PrecisionTier::Ext => run::<Dd>(a, s, b_rhs, x0, eta, maxit),
    }
}

/// Extended-normal-equation solver. Takes the unreduced b (an m-vector) and
/// maintains r_k = b - A x_k, v_k = -S x_k and the reduced residual
/// s_k = A^T r_k + v_k. Stops when |s_k| <= tol |s_0|.
/// `observe` receives (k, x_k, v_k) after each accepted update.
pub fn cgls_k_observed<T: Real>(
    a: &Mat<T>,
    s: &Mat<T>,
    b: &[T],
    x0: &[T],
    maxit: usize,
    tol: f64,
    rule: DirectionRule,
    mut observe: impl FnMut(usize, &[T], &[T]),
) -> Result<SolveOutcome> {
    let (m, n) = (a.rows(), a.cols());
    if s.rows() != n || s.cols() != n || b.len() != m || x0.len() != n {
        return Err(MpError::Config(format!(
            "cgls_k: A is {m}x{n}, S is {}x{}, |b| = {}, |x0| = {}",
            s.rows(),
            s.cols(),
            b.len(),
            x0.len()
        )));
    }
    if rule == DirectionRule::LiteralResidual && m != n {
        return Err(MpError::Config(format!(
            "the literal-residual direction rule needs a square system, got {m}x{n}"
        )));
    }
    let mut x = x0.to_vec();
    let ax0 = matvec(a, &x);
    let mut r: Vec<T> = b.iter().zip(&ax0).map(|(bi, ai)| bi.sub(*ai)).collect();
    let sx0 = matvec(s, &x);
    let mut v: Vec<T> = sx0.iter().map(|t| t.neg()).collect();
    let atr = matvec_t(a, &r);
    let mut s_vec: Vec<T> = atr.iter().zip(&v).map(|(u, w)| u.add(*w)).collect();
    let mut s_old = dot(&s_vec, &s_vec);
    let s0_norm = s_old.sqrt().to_f64();
    let mut residuals = vec![s0_norm];
    let threshold = tol * s0_norm;
    if s0_norm == 0.0 {
        return Ok(SolveOutcome {
            x: x.iter().map(|t| t.to_f64()).collect(),
            iterations: 0,
            final_residual_norm: 0.0,
            converged: true,
            per_iteration_residuals: residuals,
        });
    }
    let mut p = s_vec.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut best_res = s0_norm;
    let mut best_x = x.clone();
    let mut best_v = v.clone();
    let mut broke_down = false;
    for k in 1..=maxit {
        let t = matvec(a, &p);
        let w = matvec(s, &p);
        ensure_finite(&t, "cgls_k A p")?;
        ensure_finite(&w, "cgls_k S p")?;
        let denom = dot(&t, &t).add(dot(&p, &w));
        if !denom.is_finite() {
            return Err(MpError::Overflow {
                tier: T::TIER.label(),
                context: "cgls_k step denominator".into(),
            });
        }
        if denom.to_f64() <= 0.0 {
            return Err(MpError::Indefinite(format!(
                "cgls_k: <t,t> + <p,Sp> = {:e} <= 0 at iteration {k}",
                denom.to_f64()
            )));
        }
        let alpha = s_old.div(denom);
        for i in 0..n {
            x[i] = x[i].add(alpha.mul(p[i]));
        }
        for i in 0..m {
            r[i] = r[i].sub(alpha.mul(t[i]));
        }
        for i in 0..n {
            v[i] = v[i].sub(alpha.mul(w[i]));
        }
        ensure_finite(&x, "cgls_k iterate")?;
        ensure_finite(&r, "cgls_k residual")?;
        ensure_finite(&v, "cgls_k shift recursion")?;
        let atr = matvec_t(a, &r);
        for i in 0..n {
            s_vec[i] = atr[i].add(v[i]);
        }
        let s_new = dot(&s_vec, &s_vec);
        let res = s_new.sqrt().to_f64();
        residuals.push(res);
        iterations = k;
        if best_res > 0.0 && res > BREAKDOWN_FACTOR * best_res {
            x.copy_from_slice(&best_x);
            v.copy_from_slice(&best_v);
            broke_down = true;
            observe(k, &x, &v);
            break;
        }
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
            best_v.copy_from_slice(&v);
        }
        observe(k, &x, &v);
        if res <= threshold {
            converged = true;
            break;
        }
        if s_new.to_f64() == 0.0 {
            converged = true;
            break;
        }
        let beta = s_new.div(s_old);
        match rule {
            DirectionRule::Reduced => {
                for i in 0..n {
                    p[i] = s_vec[i].add(beta.mul(p[i]));
                }
            }
            DirectionRule::LiteralResidual => {
                for i in 0..n {
                    p[i] = r[i].add(beta.mul(p[i]));
                }
            }
        }
        s_old = s_new;
    }
    Ok(SolveOutcome {
        x: x.iter().map(|t| t.to_f64()).collect(),
        iterations,
        final_residual_norm: if broke_down { best_res } else { *residuals.last().unwrap() },
        converged,
        per_iteration_residuals: residuals,
    })
}

/// Tier-dispatching front end for cgls_k with the standard direction rule.
pub fn cgls_k(
    a: &Mat<f64>,
    s: &Mat<f64>,
    b: &[f64],
    x0: &[f64],
    maxit: usize,
    tol: f64,
    tier: PrecisionTier,
) -> Result<SolveOutcome> {
    cgls_k_with_rule(a, s, b, x0, maxit, tol, tier, DirectionRule::Reduced)
}

#[allow(clippy::too_many_arguments)]
pub fn cgls_k_with_rule(
    a: &Mat<f64>,
    s: &Mat<f64>,
    b: &[f64],
    x0: &[f64],
    maxit: usize,
    tol: f64,
    tier: PrecisionTier,
    rule: DirectionRule,
) -> Result<SolveOutcome> {
    fn run<T: Real>(
        a: &Mat<f64>,
        s: &Mat<f64>,
        b: &[f64],
        x0: &[f64],
        maxit: usize,
        tol: f64,
        rule: DirectionRule,
    ) -> Result<SolveOutcome> {
        let at: Mat<T> = cast_mat_checked(a, "A")?;
        let st: Mat<T> = cast_mat_checked(s, "S")?;
        let bt = cast_vec_checked(b, "b")?;
        let x0t = cast_vec_checked(x0, "starting point")?;
        cgls_k_observed(&at, &st, &bt, &x0t, maxit, tol, rule, |_, _, _| {})
    }
    match tier {
        PrecisionTier::P32 => run::<f32>(a, s, b, x0, maxit, tol, rule),
        PrecisionTier::P64 => run::<f64>(a, s, b, x0, maxit, tol, rule),
        PrecisionTier::Ext => run::<Dd>(a, s, b, x0, maxit, tol, rule),
    }
}
