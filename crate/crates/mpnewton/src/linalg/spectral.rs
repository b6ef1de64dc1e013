//! Spectra via Jacobi iterations: one-sided SVD, symmetric eigensolve,
//! 2-norm condition numbers.

use super::Mat;
use crate::error::MpError;
use crate::precision::Real;

pub struct SvdResult<T> {
    /// Orthonormal columns, m x n (left factor).
    pub u: Mat<T>,
    /// Descending, non-negative.
    pub singular_values: Vec<T>,
    /// Orthonormal columns, n x n (right factor).
    pub v: Mat<T>,
}

const MAX_SWEEPS: usize = 60;

/// One-sided Jacobi SVD. Rotations are applied to column pairs of a working
/// copy until all pairs are numerically orthogonal; column norms are the
/// singular values. Fine for dense matrices up to a few hundred columns.
pub fn svd<T: Real>(a: &Mat<T>) -> Result<SvdResult<T>, MpError> {
    if a.rows() < a.cols() {
        // run on the transpose and swap factors
        let t = svd(&a.transpose())?;
        return Ok(SvdResult { u: t.v, singular_values: t.singular_values, v: t.u });
    }
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v: Mat<T> = Mat::identity(n);
    let tol = T::from_f64(8.0 * T::TIER.unit_roundoff());

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut app = T::zero();
                let mut aqq = T::zero();
                let mut apq = T::zero();
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    app = app.add(x.mul(x));
                    aqq = aqq.add(y.mul(y));
                    apq = apq.add(x.mul(y));
                }
                if app.to_f64() == 0.0 || aqq.to_f64() == 0.0 {
                    continue;
                }
                let gate = tol.mul(app.mul(aqq).sqrt());
                if apq.abs() <= gate {
                    continue;
                }
                rotated = true;
                // classic Rutishauser rotation choice
                let zeta = aqq.sub(app).div(apq.add(apq));
                let t = if zeta.abs().to_f64() > 1e150 {
                    // asymptotic branch, keeps zeta^2 from overflowing
                    T::one().div(zeta.add(zeta))
                } else {
                    let root = T::one().add(zeta.mul(zeta)).sqrt();
                    let denom = if zeta.to_f64() >= 0.0 { zeta.add(root) } else { zeta.sub(root) };
                    T::one().div(denom)
                };
                let c = T::one().div(T::one().add(t.mul(t)).sqrt());
                let s = c.mul(t);
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c.mul(x).sub(s.mul(y));
                    w[(i, q)] = s.mul(x).add(c.mul(y));
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c.mul(x).sub(s.mul(y));
                    v[(i, q)] = s.mul(x).add(c.mul(y));
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MpError::NoConvergence(format!("one-sided Jacobi SVD did not settle in {MAX_SWEEPS} sweeps")));
    }

    let mut sigma: Vec<T> = Vec::with_capacity(n);
    let mut u: Mat<T> = Mat::zeros(m, n);
    for j in 0..n {
        let mut norm_sq = T::zero();
        for i in 0..m {
            let x = w[(i, j)];
            norm_sq = norm_sq.add(x.mul(x));
        }
        let norm = norm_sq.sqrt();
        sigma.push(norm);
        if norm.to_f64() > 0.0 {
            for i in 0..m {
                u[(i, j)] = w[(i, j)].div(norm);
            }
        } else {
            // null column: any unit vector keeps U well-formed; e_j is fine
            u[(j.min(m - 1), j)] = T::one();
        }
    }

    // sort descending, carrying U and V columns along
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].to_f64().partial_cmp(&sigma[i].to_f64()).unwrap_or(std::cmp::Ordering::Equal));
    let sigma_sorted: Vec<T> = order.iter().map(|&j| sigma[j]).collect();
    let u_sorted = Mat::from_fn(m, n, |i, j| u[(i, order[j])]);
    let v_sorted = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);

    Ok(SvdResult { u: u_sorted, singular_values: sigma_sorted, v: v_sorted })
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(a: &Mat<T>) -> Result<T, MpError> {
    Ok(svd(a)?.singular_values[0])
}

/// 2-norm condition number sigma_max / sigma_min. A vanishing sigma_min
/// reports as infinity rather than an error.
pub fn cond_2<T: Real>(a: &Mat<T>) -> Result<f64, MpError> {
    let s = svd(a)?.singular_values;
    let smax = s[0].to_f64();
    let smin = s[s.len() - 1].to_f64();
    if smin == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, ascending. The input
/// must actually be symmetric: asymmetry beyond 1e-10 * ||A||_F is a caller
/// bug, not something to silently average away.
pub fn eig_sym<T: Real>(a: &Mat<T>) -> Result<Vec<T>, MpError> {
    if a.rows() != a.cols() {
        return Err(MpError::Config(format!("eig_sym needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    let n = a.rows();
    let fro = super::fro_norm(a).to_f64();
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let gap = (a[(i, j)].to_f64() - a[(j, i)].to_f64()).abs();
            if gap > max_asym {
                max_asym = gap;
            }
        }
    }
    if max_asym > 1e-10 * fro {
        return Err(MpError::Numeric(format!(
            "eig_sym: input asymmetry {max_asym:e} exceeds 1e-10 * ||A||_F = {:e}",
            1e-10 * fro
        )));
    }

    // average away the sub-threshold asymmetry so rotations can actually
    // annihilate what they target
    let half = T::from_f64(0.5);
    let mut w = a.add(&a.transpose()).scale(half);
    let tol = T::from_f64(8.0 * T::TIER.unit_roundoff());
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off.add(w[(i, j)].mul(w[(i, j)]));
            }
        }
        let fro_w = super::fro_norm(&w);
        if off.sqrt() <= tol.mul(fro_w) {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[(p, q)];
                let gate = tol.mul(w[(p, p)].abs().add(w[(q, q)].abs()));
                if apq.abs() <= gate {
                    continue;
                }
                let theta = w[(q, q)].sub(w[(p, p)]).div(apq.add(apq));
                let t = if theta.abs().to_f64() > 1e150 {
                    T::one().div(theta.add(theta))
                } else {
                    let root = T::one().add(theta.mul(theta)).sqrt();
                    let denom = if theta.to_f64() >= 0.0 { theta.add(root) } else { theta.sub(root) };
                    T::one().div(denom)
                };
                let c = T::one().div(T::one().add(t.mul(t)).sqrt());
                let s = c.mul(t);
                // two-sided rotation on rows/columns p and q
                for k in 0..n {
                    let (x, y) = (w[(p, k)], w[(q, k)]);
                    w[(p, k)] = c.mul(x).sub(s.mul(y));
                    w[(q, k)] = s.mul(x).add(c.mul(y));
                }
                for k in 0..n {
                    let (x, y) = (w[(k, p)], w[(k, q)]);
                    w[(k, p)] = c.mul(x).sub(s.mul(y));
                    w[(k, q)] = s.mul(x).add(c.mul(y));
                }
            }
        }
    }
    if !converged {
        return Err(MpError::NoConvergence(format!("Jacobi eigensolve did not settle in {MAX_SWEEPS} sweeps")));
    }
    let mut eigs: Vec<T> = (0..n).map(|i| w[(i, i)]).collect();
    eigs.sort_by(|a, b| a.to_f64().partial_cmp(&b.to_f64()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eigs)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn eig_sym_min<T: Real>(a: &Mat<T>) -> Result<T, MpError> {
    Ok(eig_sym(a)?[0])
}
