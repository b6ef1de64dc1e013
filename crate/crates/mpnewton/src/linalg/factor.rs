//! LU with partial pivoting and Householder QR, unblocked.

use super::Mat;
use crate::error::MpError;
use crate::precision::Real;

/// Packed LU factorization of a square matrix, PA = LU.
pub struct LuFactors<T> {
    lu: Mat<T>,
    piv: Vec<usize>,
}

/// Factor with partial pivoting. A pivot that is exactly zero after row
/// exchange means the matrix is singular at this tier.
pub fn lu_factor<T: Real>(a: &Mat<T>) -> Result<LuFactors<T>, MpError> {
    if a.rows() != a.cols() {
        return Err(MpError::Config(format!("lu_factor needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best.to_f64() == 0.0 {
            return Err(MpError::Singular(format!("zero pivot in column {k} after row exchange")));
        }
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            piv.swap(k, p);
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let m = lu[(i, k)].div(pivot);
            lu[(i, k)] = m;
            for j in k + 1..n {
                let v = lu[(i, j)].sub(m.mul(lu[(k, j)]));
                lu[(i, j)] = v;
            }
        }
    }
    Ok(LuFactors { lu, piv })
}

impl<T: Real> LuFactors<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        // forward substitution with unit lower triangle
        for i in 1..n {
            let mut acc = y[i];
            for j in 0..i {
                acc = acc.sub(self.lu[(i, j)].mul(y[j]));
            }
            y[i] = acc;
        }
        // back substitution
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc = acc.sub(self.lu[(i, j)].mul(y[j]));
            }
            y[i] = acc.div(self.lu[(i, i)]);
        }
        y
    }

    pub fn solve_mat(&self, b: &Mat<T>) -> Mat<T> {
        let n = self.lu.rows();
        assert_eq!(b.rows(), n);
        let mut out = Mat::zeros(n, b.cols());
        for j in 0..b.cols() {
            let x = self.solve(&b.col(j));
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    /// |det A| as the product of pivot magnitudes.
    pub fn det_abs(&self) -> T {
        let n = self.lu.rows();
        let mut d = T::one();
        for i in 0..n {
            d = d.mul(self.lu[(i, i)]);
        }
        d.abs()
    }
}

/// Solve A x = b by LU with partial pivoting at the scalar's tier.
pub fn lu_solve<T: Real>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>, MpError> {
    Ok(lu_factor(a)?.solve(b))
}

/// Orthonormal factor of a square full-rank matrix via Householder
/// reflections. A vanishing column norm during elimination reports rank
/// deficiency so the caller can regenerate its random input.
pub fn qr_orthonormal<T: Real>(m: &Mat<T>) -> Result<Mat<T>, MpError> {
    if m.rows() != m.cols() {
        return Err(MpError::Config(format!("qr_orthonormal needs a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let n = m.rows();
    let mut r = m.clone();
    // reflectors v_k live in column k, rows k.., scaled so H = I - 2 v v^T / (v^T v)
    let mut vs: Vec<Vec<T>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut norm_sq = T::zero();
        for i in k..n {
            let v = r[(i, k)];
            norm_sq = norm_sq.add(v.mul(v));
        }
        let norm = norm_sq.sqrt();
        if norm.to_f64() == 0.0 {
            return Err(MpError::Numeric(format!(
                "qr_orthonormal: column {k} is dependent at this tier; regenerate the random input"
            )));
        }
        let x0 = r[(k, k)];
        let alpha = if x0.to_f64() >= 0.0 { norm.neg() } else { norm };
        let mut v: Vec<T> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] = v[0].sub(alpha);
        let mut vtv = T::zero();
        for w in &v {
            vtv = vtv.add(w.mul(*w));
        }
        if vtv.to_f64() > 0.0 {
            for j in k..n {
                let mut proj = T::zero();
                for i in k..n {
                    proj = proj.add(v[i - k].mul(r[(i, j)]));
                }
                let scale = proj.add(proj).div(vtv);
                for i in k..n {
                    let nv = r[(i, j)].sub(scale.mul(v[i - k]));
                    r[(i, j)] = nv;
                }
            }
        }
        vs.push(v);
    }
    // Q = H_1 H_2 ... H_n applied to the identity, innermost first
    let mut q: Mat<T> = Mat::identity(n);
    for k in (0..n).rev() {
        let v = &vs[k];
        let mut vtv = T::zero();
        for w in v {
            vtv = vtv.add(w.mul(*w));
        }
        if vtv.to_f64() == 0.0 {
            continue;
        }
        for j in 0..n {
            let mut proj = T::zero();
            for i in k..n {
                proj = proj.add(v[i - k].mul(q[(i, j)]));
            }
            let scale = proj.add(proj).div(vtv);
            for i in k..n {
                let nv = q[(i, j)].sub(scale.mul(v[i - k]));
                q[(i, j)] = nv;
            }
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro_norm, matmul, matvec, norm2, vec_sub, Mat};
    use crate::precision::{Dd, PrecisionTier};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_mat(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn lu_identity_and_diagonal() {
        let i4: Mat<f64> = Mat::identity(4);
        let b = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(lu_solve(&i4, &b).unwrap(), b);
        let d: Mat<f64> = Mat::diag(&[2.0, 4.0]);
        assert_eq!(lu_solve(&d, &[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn lu_flags_singular() {
        let a: Mat<f64> = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(lu_solve(&a, &[1.0, 1.0]), Err(MpError::Singular(_))));
    }

    #[test]
    fn lu_p64_matches_ext_reference_when_well_conditioned() {
        // random SPD-ish system with condition around 1e2
        let n = 8;
        let g = random_mat(n, 7);
        let a = matmul(&g.transpose(), &g); // kappa ~ cond(g)^2, still modest
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xstar: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = matvec(&a, &xstar);

        let x64 = lu_solve(&a, &b).unwrap();
        let a_dd: Mat<Dd> = a.cast();
        let b_dd: Vec<Dd> = b.iter().map(|&v| Dd::from_f64(v)).collect();
        let x_ref = lu_solve(&a_dd, &b_dd).unwrap();

        let diff: Vec<f64> = (0..n).map(|i| x64[i] - x_ref[i].to_f64()).collect();
        let rel = norm2(&diff) / norm2(&x64);
        assert!(rel <= 1e-10, "relative error vs extended reference: {rel:e}");
    }

    #[test]
    fn lu_backward_error_is_tier_sized() {
        let n = 10;
        let a = random_mat(n, 3);
        let b: Vec<f64> = (0..n).map(|i| (i as f64) - 4.0).collect();
        let x = lu_solve(&a, &b).unwrap();
        let res = norm2(&vec_sub(&matvec(&a, &x), &b));
        let bound = 100.0 * PrecisionTier::P64.unit_roundoff() * fro_norm(&a) * norm2(&x);
        assert!(res <= bound, "residual {res:e} above c(n) u ||A|| ||x|| = {bound:e}");
    }

    #[test]
    fn qr_of_identity_is_signed_identity() {
        let q = qr_orthonormal::<f64>(&Mat::identity(5)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((q[(i, j)].abs() - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn qr_gram_and_det_gates() {
        let q = qr_orthonormal(&random_mat(10, 42)).unwrap();
        let gram = matmul(&q.transpose(), &q);
        let eye: Mat<f64> = Mat::identity(10);
        let gap = fro_norm(&gram.sub(&eye));
        assert!(gap <= 1e-14, "||Q^TQ - I||_F = {gap:e}");
        let det = lu_factor(&q).unwrap().det_abs();
        assert!((det - 1.0).abs() <= 1e-12, "|det Q| = {det}");
    }

    #[test]
    fn qr_rejects_rank_deficient_input() {
        let mut m: Mat<f64> = Mat::zeros(3, 3);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        assert!(qr_orthonormal(&m).is_err());
    }
}
