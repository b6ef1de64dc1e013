//! Structured conditioning of regularized normal equations. For the system
//! (A^T A + S) x = A^T b the interesting question is not how kappa(B)
//! behaves but how the solution moves when A, S and b are perturbed
//! independently. The answer is the spectral norm of a small matrix M_bar
//! assembled from the solved system; its square root, scaled by the data
//! norm, is the structured condition number kappa_S. Everything runs at the
//! extended tier so the number describes the problem, not the arithmetic.

use serde::Serialize;

use crate::error::{MpError, Result};
use crate::linalg::{dot, fro_norm, lu_factor, matvec, matvec_t, svd, LuFactors, Mat};
use crate::precision::{Dd, Real};

/// kappa_S and its ingredients. alpha weights perturbations to A, beta to
/// b, gamma to S; (1, 1, 1) gives the absolute structured condition number.
#[derive(Clone, Debug, Serialize)]
pub struct StructuredCond {
    pub kappa_s: f64,
    pub m_bar_spectral_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// The assembled matrix, kept for diagnostics (it should be PSD up to
    /// rounding). Not serialized.
    #[serde(skip)]
    pub m_bar: Mat<f64>,
    /// Unit vector for the top eigenvalue of m_bar; feeding it through
    /// [`PerturbationOperator::adjoint`] builds a worst-case perturbation.
    #[serde(skip)]
    pub top_eigenvector: Vec<f64>,
}

/// The solved system lifted to the extended tier: A, S, b, x, the residual
/// r = b - A x, and B = A^T A + S.
struct Core {
    a: Mat<Dd>,
    s: Mat<Dd>,
    b: Vec<Dd>,
    x: Vec<Dd>,
    r: Vec<Dd>,
    b_mat: Mat<Dd>,
}

fn lift(v: &[f64]) -> Vec<Dd> {
    v.iter().map(|t| Dd::from_f64(*t)).collect()
}

impl Core {
    fn build(a: &Mat<f64>, s: &Mat<f64>, b: &[f64], x: &[f64]) -> Result<Core> {
        let (m, n) = (a.rows(), a.cols());
        if n == 0 || m == 0 {
            return Err(MpError::Config("empty system".into()));
        }
        if s.rows() != n || s.cols() != n {
            return Err(MpError::Config(format!(
                "regularizer is {}x{}, expected {n}x{n}",
                s.rows(),
                s.cols()
            )));
        }
        if b.len() != m || x.len() != n {
            return Err(MpError::Config(format!(
                "rhs/solution lengths {}/{} do not match a {m}x{n} system",
                b.len(),
                x.len()
            )));
        }
        let ad: Mat<Dd> = a.cast();
        let sd: Mat<Dd> = s.cast();
        let bd = lift(b);
        let xd = lift(x);
        let ax = matvec(&ad, &xd);
        let rd: Vec<Dd> = bd.iter().zip(&ax).map(|(bi, yi)| bi.sub(*yi)).collect();
        // gram part mirrored so B is symmetric to the bit, then S on top
        let mut gram: Mat<Dd> = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = Dd::zero();
                for k in 0..m {
                    acc = acc.add(ad[(k, i)].mul(ad[(k, j)]));
                }
                gram[(i, j)] = acc;
                gram[(j, i)] = acc;
            }
        }
        let b_mat = gram.add(&sd);
        Ok(Core { a: ad, s: sd, b: bd, x: xd, r: rd, b_mat })
    }
}

/// sqrt(a^2 + b^2 + c^2) with the squares scaled by the largest magnitude,
/// so extreme regularizer spectra cannot overflow on the way through.
fn hypot3(a: Dd, b: Dd, c: Dd) -> Dd {
    let m = a.abs().to_f64().max(b.abs().to_f64()).max(c.abs().to_f64());
    if m == 0.0 {
        return Dd::zero();
    }
    let md = Dd::from_f64(m);
    let (x, y, z) = (a.div(md), b.div(md), c.div(md));
    md.mul(x.mul(x).add(y.mul(y)).add(z.mul(z)).sqrt())
}

/// Structured condition number of (A^T A + S) x = A^T b at the solution x.
///
/// Writes r = b - A x and B = A^T A + S, then assembles
///
///   M_bar = (|x|^2/gamma^2 + |r|^2/alpha^2) B^-1 B^-T
///         + (1/beta^2 + |x|^2/alpha^2) B^-1 A^T A B^-T
///         - (1/alpha^2) (Bt + Bt^T),   Bt = B^-1 A^T r x^T B^-T,
///
/// and reports kappa_S = sqrt(|M_bar|_2) |(A, S, b)|_F / |x|, where the data
/// norm stacks the Frobenius norms of A and S with the euclidean norm of b.
/// x is expected to solve the system to working accuracy; the number is a
/// first-order statement at that point.
pub fn structured_cond(
    a: &Mat<f64>,
    s: &Mat<f64>,
    b: &[f64],
    x: &[f64],
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<StructuredCond> {
    for (w, name) in [(alpha, "alpha"), (beta, "beta"), (gamma, "gamma")] {
        if !w.is_finite() || w <= 0.0 {
            return Err(MpError::Config(format!(
                "weight {name} must be positive and finite, got {w:e}"
            )));
        }
    }
    let core = Core::build(a, s, b, x)?;
    let x2 = dot(&core.x, &core.x);
    if x2.to_f64() == 0.0 {
        return Err(MpError::Config("kappa_S is relative to |x|, which is zero here".into()));
    }
    let (m, n) = (core.a.rows(), core.a.cols());
    let lu = lu_factor(&core.b_mat)?;
    let w_inv = lu.solve_mat(&Mat::identity(n));
    let y_mat = lu.solve_mat(&core.a.transpose());
    let atr = matvec_t(&core.a, &core.r);
    let y = lu.solve(&atr);
    let z = lu.solve(&core.x);

    let r2 = dot(&core.r, &core.r);
    let a2 = Dd::from_f64(alpha).mul(Dd::from_f64(alpha));
    let b2 = Dd::from_f64(beta).mul(Dd::from_f64(beta));
    let g2 = Dd::from_f64(gamma).mul(Dd::from_f64(gamma));
    let c1 = x2.div(g2).add(r2.div(a2));
    let c2 = Dd::one().div(b2).add(x2.div(a2));
    let inv_a2 = Dd::one().div(a2);

    let mut mbar: Mat<Dd> = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut ww = Dd::zero();
            for k in 0..n {
                ww = ww.add(w_inv[(i, k)].mul(w_inv[(j, k)]));
            }
            let mut yy = Dd::zero();
            for k in 0..m {
                yy = yy.add(y_mat[(i, k)].mul(y_mat[(j, k)]));
            }
            let cross = y[i].mul(z[j]).add(z[i].mul(y[j]));
            let v = c1.mul(ww).add(c2.mul(yy)).sub(inv_a2.mul(cross));
            mbar[(i, j)] = v;
            mbar[(j, i)] = v;
        }
    }
    if !mbar.is_finite() {
        return Err(MpError::Overflow { tier: "ext", context: "M_bar assembly".into() });
    }
    let dec = svd(&mbar)?;
    let mnorm = dec.singular_values[0];
    let data_norm = hypot3(fro_norm(&core.a), fro_norm(&core.s), dot(&core.b, &core.b).sqrt());
    let kappa = mnorm.sqrt().mul(data_norm).div(x2.sqrt());
    Ok(StructuredCond {
        kappa_s: kappa.to_f64(),
        m_bar_spectral_norm: mnorm.to_f64(),
        alpha,
        beta,
        gamma,
        m_bar: mbar.to_f64_mat(),
        top_eigenvector: dec.v.col(0).iter().map(|v| v.to_f64()).collect(),
    })
}

/// First-order effect of perturbing the data of a solved system
/// (A^T A + S) x = A^T b. The map takes a triple (E, E_S, g), meaning the
/// data moves to (A + E, S + E_S, b + g), to the induced change in x:
///
///   dx = B^-1 (E^T r + A^T (g - E x) - E_S x).
///
/// Its operator norm over unit-Frobenius triples is sqrt(|M_bar|_2) at unit
/// weights, which is what the tests probe. All arithmetic at the extended
/// tier; inputs and outputs are f64.
pub struct PerturbationOperator {
    core: Core,
    lu: LuFactors<Dd>,
    lu_t: LuFactors<Dd>,
}

impl PerturbationOperator {
    pub fn new(a: &Mat<f64>, s: &Mat<f64>, b: &[f64], x: &[f64]) -> Result<Self> {
        let core = Core::build(a, s, b, x)?;
        let lu = lu_factor(&core.b_mat)?;
        let lu_t = lu_factor(&core.b_mat.transpose())?;
        Ok(PerturbationOperator { core, lu, lu_t })
    }

    /// The directional derivative dx for one concrete triple.
    pub fn apply(&self, e: &Mat<f64>, e_s: &Mat<f64>, g: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = (self.core.a.rows(), self.core.a.cols());
        if e.rows() != m || e.cols() != n || e_s.rows() != n || e_s.cols() != n || g.len() != m {
            return Err(MpError::Config(format!(
                "perturbation shapes {}x{}/{}x{}/{} do not fit a {m}x{n} system",
                e.rows(),
                e.cols(),
                e_s.rows(),
                e_s.cols(),
                g.len()
            )));
        }
        let ed: Mat<Dd> = e.cast();
        let esd: Mat<Dd> = e_s.cast();
        let gd = lift(g);
        let etr = matvec_t(&ed, &self.core.r);
        let ex = matvec(&ed, &self.core.x);
        let gme: Vec<Dd> = gd.iter().zip(&ex).map(|(gi, ei)| gi.sub(*ei)).collect();
        let at_gme = matvec_t(&self.core.a, &gme);
        let esx = matvec(&esd, &self.core.x);
        let rhs: Vec<Dd> = (0..n).map(|i| etr[i].add(at_gme[i]).sub(esx[i])).collect();
        Ok(self.lu.solve(&rhs).iter().map(|v| v.to_f64()).collect())
    }

    /// Adjoint of [`apply`](Self::apply) under the Frobenius pairing: for a
    /// direction u in solution space, returns (E*, E_S*, g*) such that
    /// <u, apply(E, E_S, g)> = <E*, E>_F + <E_S*, E_S>_F + <g*, g> for every
    /// triple. With w = B^-T u these are
    ///
    ///   E* = r w^T - (A w) x^T,   E_S* = -w x^T,   g* = A w.
    ///
    /// Feeding in the top eigenvector of M_bar and normalizing the result
    /// yields the perturbation that attains the supremum.
    pub fn adjoint(&self, u: &[f64]) -> Result<(Mat<f64>, Mat<f64>, Vec<f64>)> {
        let (m, n) = (self.core.a.rows(), self.core.a.cols());
        if u.len() != n {
            return Err(MpError::Config(format!(
                "direction has {} components, the solution space has {n}",
                u.len()
            )));
        }
        let w = self.lu_t.solve(&lift(u));
        let aw = matvec(&self.core.a, &w);
        let e_star =
            Mat::from_fn(m, n, |i, j| self.core.r[i].mul(w[j]).sub(aw[i].mul(self.core.x[j])));
        let es_star = Mat::from_fn(n, n, |i, j| w[i].mul(self.core.x[j]).neg());
        Ok((
            e_star.to_f64_mat(),
            es_star.to_f64_mat(),
            aw.iter().map(|v| v.to_f64()).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{benchmark_system, generate_normal_eq_system, NormalEqSystem};
    use crate::linalg::{eig_sym_min, norm2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small_system() -> NormalEqSystem {
        generate_normal_eq_system(
            &[3.0, 1.5, 0.8, 0.4],
            &[0.5, 0.3, 0.2, 0.1],
            &[1.0, -1.0, 0.5, 2.0],
            4,
            11,
        )
        .unwrap()
    }

    fn combined_fro(e: &Mat<f64>, e_s: &Mat<f64>, g: &[f64]) -> f64 {
        (fro_norm(e).powi(2) + fro_norm(e_s).powi(2) + dot(g, g)).sqrt()
    }

    fn random_triple(
        m: usize,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Mat<f64>, Mat<f64>, Vec<f64>) {
        let e = Mat::from_fn(m, n, |_, _| StandardNormal.sample(rng));
        let e_s = Mat::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        let g: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let f = combined_fro(&e, &e_s, &g);
        (e.scale(1.0 / f), e_s.scale(1.0 / f), g.iter().map(|v| v / f).collect())
    }

    #[test]
    fn identity_system_has_a_closed_form() {
        // A = I, S = 0, b = x = e1: B = I, r = 0, so
        // M_bar = (1/gamma^2 + 1/beta^2 + 1/alpha^2 |x|^2 terms) collapses
        // to 3 I at unit weights, and kappa_S = sqrt(3) * sqrt(3) / 1 = 3
        let a = Mat::identity(2);
        let s = Mat::zeros(2, 2);
        let sc = structured_cond(&a, &s, &[1.0, 0.0], &[1.0, 0.0], 1.0, 1.0, 1.0).unwrap();
        assert!((sc.m_bar_spectral_norm - 3.0).abs() < 1e-12);
        assert!((sc.kappa_s - 3.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_a_perturbed_resolve() {
        let sys = small_system();
        let n = sys.n();
        let op = PerturbationOperator::new(&sys.a, &sys.s, &sys.b, &sys.x_star).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (e, e_s, g) = random_triple(n, n, &mut rng);
        let dx = op.apply(&e, &e_s, &g).unwrap();

        // central difference of the actual solve at the extended tier
        let solve_at = |t: f64| -> Vec<Dd> {
            let td = Dd::from_f64(t);
            let at = Mat::from_fn(n, n, |i, j| {
                Dd::from_f64(sys.a[(i, j)]).add(td.mul(Dd::from_f64(e[(i, j)])))
            });
            let st = Mat::from_fn(n, n, |i, j| {
                Dd::from_f64(sys.s[(i, j)]).add(td.mul(Dd::from_f64(e_s[(i, j)])))
            });
            let bt: Vec<Dd> = (0..n)
                .map(|i| Dd::from_f64(sys.b[i]).add(td.mul(Dd::from_f64(g[i]))))
                .collect();
            let mut bm: Mat<Dd> = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = Dd::zero();
                    for k in 0..n {
                        acc = acc.add(at[(k, i)].mul(at[(k, j)]));
                    }
                    bm[(i, j)] = acc.add(st[(i, j)]);
                }
            }
            let rhs = matvec_t(&at, &bt);
            lu_factor(&bm).unwrap().solve(&rhs)
        };
        let t = 1e-8;
        let xp = solve_at(t);
        let xm = solve_at(-t);
        let fd: Vec<f64> =
            (0..n).map(|i| xp[i].sub(xm[i]).div(Dd::from_f64(2.0 * t)).to_f64()).collect();
        let diff = norm2(&fd.iter().zip(&dx).map(|(a, b)| a - b).collect::<Vec<f64>>());
        let scale = norm2(&dx).max(1e-30);
        assert!(diff / scale < 1e-6, "derivative mismatch: {:.3e}", diff / scale);
    }

    #[test]
    fn random_perturbations_stay_under_the_bound_and_the_adjoint_attains_it() {
        let sys = small_system();
        let (m, n) = (sys.m(), sys.n());
        let sc = structured_cond(&sys.a, &sys.s, &sys.b, &sys.x_star, 1.0, 1.0, 1.0).unwrap();
        let op = PerturbationOperator::new(&sys.a, &sys.s, &sys.b, &sys.x_star).unwrap();
        let bound = sc.m_bar_spectral_norm.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut best = 0.0f64;
        for _ in 0..200 {
            let (e, e_s, g) = random_triple(m, n, &mut rng);
            let dx = op.apply(&e, &e_s, &g).unwrap();
            let len = norm2(&dx);
            assert!(len <= bound * (1.0 + 1e-9), "|dx| = {len:.6e} above {bound:.6e}");
            best = best.max(len);
        }
        assert!(best > 0.0);

        let (e, e_s, g) = op.adjoint(&sc.top_eigenvector).unwrap();
        let f = combined_fro(&e, &e_s, &g);
        assert!(f > 0.0);
        let dx = op
            .apply(&e.scale(1.0 / f), &e_s.scale(1.0 / f), &g.iter().map(|v| v / f).collect::<Vec<f64>>())
            .unwrap();
        let achieved = norm2(&dx);
        assert!(
            achieved >= 0.99 * bound && achieved <= bound * (1.0 + 1e-9),
            "adjoint direction reaches {achieved:.6e} of {bound:.6e}"
        );
    }

    #[test]
    fn suppressing_a_channel_cannot_raise_kappa() {
        for sys in [small_system(), benchmark_system(1, 1).unwrap()] {
            let base = structured_cond(&sys.a, &sys.s, &sys.b, &sys.x_star, 1.0, 1.0, 1.0).unwrap();
            let no_s =
                structured_cond(&sys.a, &sys.s, &sys.b, &sys.x_star, 1.0, 1.0, 1e12).unwrap();
            assert!(
                no_s.kappa_s <= base.kappa_s * 1.001,
                "gamma -> inf raised kappa_S: {:.6e} vs {:.6e}",
                no_s.kappa_s,
                base.kappa_s
            );
        }
    }

    #[test]
    fn m_bar_is_psd_up_to_rounding() {
        for sys in [small_system(), benchmark_system(1, 1).unwrap(), benchmark_system(3, 1).unwrap()]
        {
            let sc = structured_cond(&sys.a, &sys.s, &sys.b, &sys.x_star, 1.0, 1.0, 1.0).unwrap();
            assert!(sc.kappa_s.is_finite() && sc.kappa_s > 0.0);
            let lam_min = eig_sym_min(&sc.m_bar).unwrap();
            assert!(
                lam_min >= -1e-8 * sc.m_bar_spectral_norm,
                "lambda_min {lam_min:.3e} vs norm {:.3e}",
                sc.m_bar_spectral_norm
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = small_system();
        for w in [(0.0, 1.0, 1.0), (1.0, -2.0, 1.0), (1.0, 1.0, f64::NAN)] {
            assert!(matches!(
                structured_cond(&sys.a, &sys.s, &sys.b, &sys.x_star, w.0, w.1, w.2),
                Err(MpError::Config(_))
            ));
        }
        assert!(matches!(
            structured_cond(&sys.a, &Mat::zeros(3, 3), &sys.b, &sys.x_star, 1.0, 1.0, 1.0),
            Err(MpError::Config(_))
        ));
        assert!(matches!(
            structured_cond(&sys.a, &sys.s, &sys.b, &[0.0; 4], 1.0, 1.0, 1.0),
            Err(MpError::Config(_))
        ));
        // B = 0 is singular
        assert!(matches!(
            structured_cond(&Mat::zeros(2, 2), &Mat::zeros(2, 2), &[1.0, 1.0], &[1.0, 1.0], 1.0, 1.0, 1.0),
            Err(MpError::Singular(_))
        ));
        let op = PerturbationOperator::new(&sys.a, &sys.s, &sys.b, &sys.x_star).unwrap();
        assert!(op.apply(&Mat::zeros(2, 4), &Mat::zeros(4, 4), &[0.0; 4]).is_err());
        assert!(op.adjoint(&[1.0, 0.0]).is_err());
    }
}
