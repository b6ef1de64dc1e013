//! Curvature assembly for the partial second-order family: Gauss-Newton
//! plus the residual Hessians of the k percent of residuals with the
//! largest magnitudes. k = 0 is plain Gauss-Newton, k = 100 rebuilds the
//! full Hessian of a least-squares objective.

use crate::error::{MpError, Result};
use crate::linalg::{DMat, DVec, Mat};
use crate::precision::{flops, Dd, PrecisionTier};

use super::tier::TierData;

/// Output of [`gn_k_curvature`]. `matrix` is the operator handed to the
/// linear solver, B = J^T J + S; `s_matrix` is the second-order sum S alone,
/// which the split-operator solvers apply separately from J.
#[derive(Clone, Debug)]
pub struct GnkCurvature {
    pub matrix: DMat,
    pub s_matrix: DMat,
    /// Indices in the selected set K, ascending.
    pub selected: Vec<usize>,
    /// Flops spent evaluating and accumulating the second-order term,
    /// residual Hessian evaluations included. The J^T J part is shared by
    /// every k and deliberately left out, so this number is the cost of
    /// raising k above zero.
    pub s_assembly_flops: u64,
}

/// How many residuals k percent selects out of n: ceil(k/100 * n), with the
/// product snapped to the nearest integer first so that 30 percent of 10 is
/// 3 and not ceil(3.0000000000000004) = 4.
fn selection_count(k_percent: f64, n: usize) -> usize {
    let raw = k_percent / 100.0 * n as f64;
    let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    (snapped as usize).min(n)
}

/// The index set K: positions of the k percent largest-magnitude residuals,
/// returned ascending. Ties in magnitude go to the lower index. Magnitudes
/// are compared through an f64 snapshot; extended-tier residuals that agree
/// to 16 digits therefore fall back to the index rule, which is what a tie
/// means anyway.
pub fn select_top_residuals(residuals_g: &DVec, k_percent: f64) -> Result<Vec<usize>> {
    if !k_percent.is_finite() || !(0.0..=100.0).contains(&k_percent) {
        return Err(MpError::Config(format!(
            "k_percent must lie in [0, 100], got {k_percent}"
        )));
    }
    let n = residuals_g.len();
    let mags = residuals_g.to_f64_vec();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mags[b].abs().total_cmp(&mags[a].abs()).then(a.cmp(&b)));
    let mut selected: Vec<usize> =
        order.into_iter().take(selection_count(k_percent, n)).collect();
    selected.sort_unstable();
    Ok(selected)
}

/// Assemble B = J^T J + sum_{j in K} r_j hess r_j at the working tier.
///
/// `residuals_g` are the residuals at the gradient tier; K comes from
/// [`select_top_residuals`] on their magnitudes and the values are then
/// rounded to `pi_w` before they scale the residual Hessians.
/// `residual_hessian(j)` must return hess r_j at `pi_w`.
pub fn gn_k_curvature(
    residuals_g: &DVec,
    jacobian_w: &DMat,
    residual_hessian: impl FnMut(usize) -> Result<DMat>,
    k_percent: f64,
    pi_w: PrecisionTier,
) -> Result<GnkCurvature> {
    let selected = select_top_residuals(residuals_g, k_percent)?;
    let n = residuals_g.len();
    if jacobian_w.rows() != n {
        return Err(MpError::Config(format!(
            "jacobian has {} rows for {} residuals",
            jacobian_w.rows(),
            n
        )));
    }
    if jacobian_w.tier() != pi_w {
        return Err(MpError::Config(format!(
            "jacobian is at tier {}, expected the working tier {}",
            jacobian_w.tier().label(),
            pi_w.label()
        )));
    }
    let r_w = residuals_g.round_to(pi_w)?;
    match pi_w {
        PrecisionTier::P32 => assemble::<f32>(&r_w, jacobian_w, residual_hessian, selected),
        PrecisionTier::P64 => assemble::<f64>(&r_w, jacobian_w, residual_hessian, selected),
        PrecisionTier::Ext => assemble::<Dd>(&r_w, jacobian_w, residual_hessian, selected),
    }
}

fn assemble<T: TierData>(
    r_w: &DVec,
    j_w: &DMat,
    mut residual_hessian: impl FnMut(usize) -> Result<DMat>,
    selected: Vec<usize>,
) -> Result<GnkCurvature> {
    let r = T::vec(r_w);
    let j = T::mat(j_w);
    let d = j.cols();
    let (s_res, s_assembly_flops) = flops::metered(|| -> Result<Mat<T>> {
        let mut s: Mat<T> = Mat::zeros(d, d);
        for &jx in &selected {
            let h_j = residual_hessian(jx)?;
            if h_j.tier() != T::TIER {
                return Err(MpError::Config(format!(
                    "residual hessian provider returned tier {}, expected {}",
                    h_j.tier().label(),
                    T::TIER.label()
                )));
            }
            let h = T::mat(&h_j);
            let rt = r[jx];
            for k in 0..d {
                for l in 0..d {
                    s[(k, l)] = s[(k, l)].add(rt.mul(h[(k, l)]));
                }
            }
        }
        Ok(s)
    });
    let s_sum = s_res?;
    if !s_sum.is_finite() {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: "second-order curvature accumulation".into(),
        });
    }
    // residual Hessians are symmetric, so only the upper triangle of the
    // gram part needs computing; the mirror keeps B bitwise symmetric
    let m = j.rows();
    let mut b: Mat<T> = Mat::zeros(d, d);
    for k in 0..d {
        for l in k..d {
            let mut acc = T::zero();
            for row in 0..m {
                acc = acc.add(j[(row, k)].mul(j[(row, l)]));
            }
            let v = acc.add(s_sum[(k, l)]);
            b[(k, l)] = v;
            b[(l, k)] = v;
        }
    }
    if !b.is_finite() {
        return Err(MpError::Overflow {
            tier: T::TIER.label(),
            context: "gauss-newton gram accumulation".into(),
        });
    }
    Ok(GnkCurvature {
        matrix: T::lift_mat(b),
        s_matrix: T::lift_mat(s_sum),
        selected,
        s_assembly_flops,
    })
}
