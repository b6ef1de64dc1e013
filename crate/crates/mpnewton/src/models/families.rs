//! The objective families and their analytic derivatives, generic over the
//! evaluation scalar. Data lives at P64 and is lifted entry by entry; every
//! arithmetic step goes through [`Real`] so it rounds at the evaluation tier.
//!
//! Least-squares families expose residuals R, Jacobian J, and per-residual
//! Hessians; their objective is f = 1/2 R^T R with the 1/N convention folded
//! into a sqrt(2/N) residual scale where the family calls for it.

use super::flags;
use crate::error::MpError;
use crate::linalg::Mat;
use crate::precision::{PrecisionTier, Real};

/// Family payloads. Construction happens in `build_problem` and the data
/// generators; evaluation code treats everything as read-only.
#[derive(Clone, Debug)]
pub enum Kind {
    /// theta_1 e^{theta_0} x + theta_1 e^{theta_1} x^2 regression.
    PolyExp { x: Vec<f64>, y: Vec<f64> },
    /// theta_0 + theta_1 a + sin(theta_2 b) + theta_3 c with per-term inputs;
    /// feats columns are [x_0^2, x_1, x_2^2.5], precomputed at P64.
    SinePoly { feats: Mat<f64>, y: Vec<f64> },
    /// sqrt(1 + ax(theta_0 - a)^2) + sqrt(1 + ay(theta_1 - b)^2); diagonal
    /// Hessian with kappa = ax/ay at the minimum, no data.
    SqrtControlled { a: f64, b: f64, alpha_x: f64, alpha_y: f64 },
    /// Two blocks of per-datapoint, per-feature residuals:
    /// (sum_i theta_i^2) (A x)_c - y and sin(prod_i theta_i x_c) - y.
    /// `w` holds A applied to each datapoint; targets are flattened row-major.
    LinNonlin { x: Mat<f64>, w: Mat<f64>, y_lin: Vec<f64>, y_nonlin: Vec<f64> },
    /// Binary cross-entropy with sigmoid predictions and L2 term.
    LogisticBCE { x: Mat<f64>, y: Vec<f64>, lambda: f64 },
    /// Mean squared error on sigmoid predictions with L2 term, expressed in
    /// least-squares form with sqrt(lambda) theta_k tail residuals.
    SquaredErrorSigmoid { x: Mat<f64>, y: Vec<f64>, lambda: f64 },
    /// 1/2 theta^T Q theta - c^T theta with a fixed SPD Q. Exact Hessian,
    /// so a single exact Newton step lands on the minimizer; used by tests
    /// that need that property. Not exposed through the config surface.
    QuadraticProbe { q: Mat<f64>, c: Vec<f64> },
}

impl Kind {
    pub fn dim(&self) -> usize {
        match self {
            Kind::PolyExp { .. } => 2,
            Kind::SinePoly { .. } => 4,
            Kind::SqrtControlled { .. } => 2,
            Kind::LinNonlin { .. } => 2,
            Kind::LogisticBCE { x, .. } => x.cols(),
            Kind::SquaredErrorSigmoid { x, .. } => x.cols(),
            Kind::QuadraticProbe { q, .. } => q.rows(),
        }
    }

    /// Residual count for least-squares families.
    pub fn n_residuals(&self) -> Option<usize> {
        match self {
            Kind::PolyExp { x, .. } => Some(x.len()),
            Kind::SinePoly { feats, .. } => Some(feats.rows()),
            Kind::LinNonlin { y_lin, y_nonlin, .. } => Some(y_lin.len() + y_nonlin.len()),
            Kind::SquaredErrorSigmoid { x, .. } => Some(x.rows() + x.cols()),
            Kind::SqrtControlled { .. } | Kind::LogisticBCE { .. } | Kind::QuadraticProbe { .. } => None,
        }
    }

    pub fn is_least_squares(&self) -> bool {
        self.n_residuals().is_some()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kind::PolyExp { .. } => "poly_exp",
            Kind::SinePoly { .. } => "sine_poly",
            Kind::SqrtControlled { .. } => "sqrt_controlled",
            Kind::LinNonlin { .. } => "lin_nonlin",
            Kind::LogisticBCE { .. } => "logistic_bce",
            Kind::SquaredErrorSigmoid { .. } => "squared_error_sigmoid",
            Kind::QuadraticProbe { .. } => "quadratic_probe",
        }
    }

    pub fn objective<T: Real>(&self, th: &[T], pi: PrecisionTier) -> Result<T, MpError> {
        let f = match self {
            Kind::SqrtControlled { a, b, alpha_x, alpha_y } => {
                let dx = th[0].sub(T::from_f64(*a));
                let dy = th[1].sub(T::from_f64(*b));
                let tx = T::one().add(T::from_f64(*alpha_x).mul(dx.mul(dx))).sqrt();
                let ty = T::one().add(T::from_f64(*alpha_y).mul(dy.mul(dy))).sqrt();
                tx.add(ty)
            }
            Kind::LogisticBCE { x, y, lambda } => {
                let one = T::one();
                let mut acc = T::zero();
                for i in 0..x.rows() {
                    let p = clamped_sigmoid(logit(x.row(i), th), pi);
                    let yi = T::from_f64(y[i]);
                    let t = yi.mul(p.ln()).add(one.sub(yi).mul(one.sub(p).ln()));
                    acc = acc.sub(t);
                }
                let data = acc.div(T::from_f64(x.rows() as f64));
                data.add(T::from_f64(lambda * 0.5).mul(sq_norm(th)))
            }
            Kind::QuadraticProbe { q, c } => {
                let d = q.rows();
                let mut quad = T::zero();
                let mut lin = T::zero();
                for i in 0..d {
                    let mut qi = T::zero();
                    for j in 0..d {
                        qi = qi.add(T::from_f64(q[(i, j)]).mul(th[j]));
                    }
                    quad = quad.add(th[i].mul(qi));
                    lin = lin.add(T::from_f64(c[i]).mul(th[i]));
                }
                quad.mul(T::from_f64(0.5)).sub(lin)
            }
            // least-squares families share f = 1/2 sum r_j^2
            _ => {
                let n = self.n_residuals().expect("least-squares branch");
                let mut acc = T::zero();
                for j in 0..n {
                    let r = self.residual::<T>(th, j);
                    acc = acc.add(r.mul(r));
                }
                acc.mul(T::from_f64(0.5))
            }
        };
        if !f.is_finite() {
            return Err(MpError::Overflow { tier: T::TIER.label(), context: format!("objective of {}", self.name()) });
        }
        Ok(f)
    }

    pub fn gradient<T: Real>(&self, th: &[T], pi: PrecisionTier) -> Result<Vec<T>, MpError> {
        let d = self.dim();
        let g = match self {
            Kind::SqrtControlled { a, b, alpha_x, alpha_y } => {
                // d/dt sqrt(1 + c t^2) = c t / sqrt(1 + c t^2)
                let dx = th[0].sub(T::from_f64(*a));
                let dy = th[1].sub(T::from_f64(*b));
                let (ax, ay) = (T::from_f64(*alpha_x), T::from_f64(*alpha_y));
                let tx = T::one().add(ax.mul(dx.mul(dx))).sqrt();
                let ty = T::one().add(ay.mul(dy.mul(dy))).sqrt();
                vec![ax.mul(dx).div(tx), ay.mul(dy).div(ty)]
            }
            Kind::LogisticBCE { x, y, lambda } => {
                let mut g = vec![T::zero(); d];
                for i in 0..x.rows() {
                    let p = clamped_sigmoid(logit(x.row(i), th), pi);
                    let e = p.sub(T::from_f64(y[i]));
                    for k in 0..d {
                        g[k] = g[k].add(e.mul(T::from_f64(x[(i, k)])));
                    }
                }
                let n = T::from_f64(x.rows() as f64);
                let lam = T::from_f64(*lambda);
                for k in 0..d {
                    g[k] = g[k].div(n).add(lam.mul(th[k]));
                }
                g
            }
            Kind::QuadraticProbe { q, c } => {
                let mut g = vec![T::zero(); d];
                for k in 0..d {
                    let mut acc = T::zero();
                    for j in 0..d {
                        acc = acc.add(T::from_f64(q[(k, j)]).mul(th[j]));
                    }
                    g[k] = acc.sub(T::from_f64(c[k]));
                }
                g
            }
            // least-squares: g = sum r_j grad r_j, fused per row
            _ => {
                let n = self.n_residuals().expect("least-squares branch");
                let mut g = vec![T::zero(); d];
                let mut row = vec![T::zero(); d];
                for j in 0..n {
                    let r = self.residual::<T>(th, j);
                    self.jac_row::<T>(th, j, &mut row);
                    for k in 0..d {
                        g[k] = g[k].add(r.mul(row[k]));
                    }
                }
                g
            }
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(MpError::Overflow { tier: T::TIER.label(), context: format!("gradient of {}", self.name()) });
        }
        Ok(g)
    }

    pub fn hessian<T: Real>(&self, th: &[T], pi: PrecisionTier) -> Result<Mat<T>, MpError> {
        let d = self.dim();
        let h = match self {
            Kind::SqrtControlled { a, b, alpha_x, alpha_y } => {
                // d^2/dt^2 sqrt(1 + c t^2) = c / (1 + c t^2)^{3/2}
                let dx = th[0].sub(T::from_f64(*a));
                let dy = th[1].sub(T::from_f64(*b));
                let (ax, ay) = (T::from_f64(*alpha_x), T::from_f64(*alpha_y));
                let qx = T::one().add(ax.mul(dx.mul(dx)));
                let qy = T::one().add(ay.mul(dy.mul(dy)));
                let mut h = Mat::zeros(2, 2);
                h[(0, 0)] = ax.div(qx.mul(qx.sqrt()));
                h[(1, 1)] = ay.div(qy.mul(qy.sqrt()));
                h
            }
            Kind::LogisticBCE { x, y: _, lambda } => {
                let mut h: Mat<T> = Mat::zeros(d, d);
                for i in 0..x.rows() {
                    let p = clamped_sigmoid(logit(x.row(i), th), pi);
                    let w = p.mul(T::one().sub(p));
                    for k in 0..d {
                        let wk = w.mul(T::from_f64(x[(i, k)]));
                        for l in k..d {
                            let v = h[(k, l)].add(wk.mul(T::from_f64(x[(i, l)])));
                            h[(k, l)] = v;
                        }
                    }
                }
                let n = T::from_f64(x.rows() as f64);
                let lam = T::from_f64(*lambda);
                for k in 0..d {
                    for l in k..d {
                        let mut v = h[(k, l)].div(n);
                        if k == l {
                            v = v.add(lam);
                        }
                        h[(k, l)] = v;
                        h[(l, k)] = v;
                    }
                }
                h
            }
            Kind::QuadraticProbe { q, .. } => Mat::from_fn(d, d, |k, l| T::from_f64(q[(k, l)])),
            // least-squares: H = sum (grad r grad r^T + r_j hess r_j), fused
            _ => {
                let n = self.n_residuals().expect("least-squares branch");
                let mut h: Mat<T> = Mat::zeros(d, d);
                let mut row = vec![T::zero(); d];
                for j in 0..n {
                    let r = self.residual::<T>(th, j);
                    self.jac_row::<T>(th, j, &mut row);
                    let rh = self.rhess::<T>(th, j);
                    for k in 0..d {
                        for l in k..d {
                            let v = h[(k, l)].add(row[k].mul(row[l])).add(r.mul(rh[(k, l)]));
                            h[(k, l)] = v;
                        }
                    }
                }
                for k in 0..d {
                    for l in k + 1..d {
                        h[(l, k)] = h[(k, l)];
                    }
                }
                h
            }
        };
        if !h.is_finite() {
            return Err(MpError::Overflow { tier: T::TIER.label(), context: format!("hessian of {}", self.name()) });
        }
        Ok(h)
    }

    pub fn residuals_jacobian<T: Real>(&self, th: &[T]) -> Result<(Vec<T>, Mat<T>), MpError> {
        let n = self.n_residuals().ok_or_else(|| {
            MpError::Unsupported(format!("{} is not a least-squares family", self.name()))
        })?;
        let d = self.dim();
        let mut res = Vec::with_capacity(n);
        let mut jac: Mat<T> = Mat::zeros(n, d);
        let mut row = vec![T::zero(); d];
        for j in 0..n {
            res.push(self.residual::<T>(th, j));
            self.jac_row::<T>(th, j, &mut row);
            for k in 0..d {
                jac[(j, k)] = row[k];
            }
        }
        if res.iter().any(|v| !v.is_finite()) || !jac.is_finite() {
            return Err(MpError::Overflow { tier: T::TIER.label(), context: format!("residuals of {}", self.name()) });
        }
        Ok((res, jac))
    }

    pub fn residual_hessian<T: Real>(&self, th: &[T], j: usize) -> Result<Mat<T>, MpError> {
        let n = self.n_residuals().ok_or_else(|| {
            MpError::Unsupported(format!("{} is not a least-squares family", self.name()))
        })?;
        if j >= n {
            return Err(MpError::Config(format!("residual index {j} out of range (n = {n})")));
        }
        Ok(self.rhess::<T>(th, j))
    }

    /// r_j at the evaluation tier.
    fn residual<T: Real>(&self, th: &[T], j: usize) -> T {
        match self {
            Kind::PolyExp { x, y } => {
                let c = T::from_f64(scale_2n(x.len()));
                let xi = T::from_f64(x[j]);
                let f = th[1].mul(th[0].exp()).mul(xi).add(th[1].mul(th[1].exp()).mul(xi.mul(xi)));
                c.mul(f.sub(T::from_f64(y[j])))
            }
            Kind::SinePoly { feats, y } => {
                let c = T::from_f64(scale_2n(feats.rows()));
                let f = th[0]
                    .add(th[1].mul(T::from_f64(feats[(j, 0)])))
                    .add(th[2].mul(T::from_f64(feats[(j, 1)])).sin())
                    .add(th[3].mul(T::from_f64(feats[(j, 2)])));
                c.mul(f.sub(T::from_f64(y[j])))
            }
            Kind::LinNonlin { x, w, y_lin, y_nonlin } => {
                let m = x.cols();
                if j < y_lin.len() {
                    let s = th[0].mul(th[0]).add(th[1].mul(th[1]));
                    s.mul(T::from_f64(w[(j / m, j % m)])).sub(T::from_f64(y_lin[j]))
                } else {
                    let jj = j - y_lin.len();
                    let p = th[0].mul(th[1]);
                    p.mul(T::from_f64(x[(jj / m, jj % m)])).sin().sub(T::from_f64(y_nonlin[jj]))
                }
            }
            Kind::SquaredErrorSigmoid { x, y, lambda } => {
                if j < x.rows() {
                    let c = T::from_f64(scale_2n(x.rows()));
                    // predictions never touch a log, so no clamp here
                    let p = sigmoid(logit(x.row(j), th));
                    c.mul(p.sub(T::from_f64(y[j])))
                } else {
                    T::from_f64(lambda.sqrt()).mul(th[j - x.rows()])
                }
            }
            Kind::SqrtControlled { .. } | Kind::LogisticBCE { .. } | Kind::QuadraticProbe { .. } => unreachable!("not least squares"),
        }
    }

    /// Row j of the Jacobian, written into `out`.
    fn jac_row<T: Real>(&self, th: &[T], j: usize, out: &mut [T]) {
        match self {
            Kind::PolyExp { x, .. } => {
                let c = T::from_f64(scale_2n(x.len()));
                let xi = T::from_f64(x[j]);
                let e0 = th[0].exp();
                let e1 = th[1].exp();
                out[0] = c.mul(th[1].mul(e0).mul(xi));
                out[1] = c.mul(e0.mul(xi).add(T::one().add(th[1]).mul(e1).mul(xi.mul(xi))));
            }
            Kind::SinePoly { feats, .. } => {
                let c = T::from_f64(scale_2n(feats.rows()));
                let b = T::from_f64(feats[(j, 1)]);
                out[0] = c;
                out[1] = c.mul(T::from_f64(feats[(j, 0)]));
                out[2] = c.mul(th[2].mul(b).cos().mul(b));
                out[3] = c.mul(T::from_f64(feats[(j, 2)]));
            }
            Kind::LinNonlin { x, w, y_lin, .. } => {
                let m = x.cols();
                if j < y_lin.len() {
                    let wv = T::from_f64(w[(j / m, j % m)]);
                    let two = T::from_f64(2.0);
                    out[0] = two.mul(th[0]).mul(wv);
                    out[1] = two.mul(th[1]).mul(wv);
                } else {
                    let jj = j - y_lin.len();
                    let xv = T::from_f64(x[(jj / m, jj % m)]);
                    let cu = th[0].mul(th[1]).mul(xv).cos();
                    out[0] = cu.mul(xv).mul(th[1]);
                    out[1] = cu.mul(xv).mul(th[0]);
                }
            }
            Kind::SquaredErrorSigmoid { x, lambda, .. } => {
                for v in out.iter_mut() {
                    *v = T::zero();
                }
                if j < x.rows() {
                    let c = T::from_f64(scale_2n(x.rows()));
                    let p = sigmoid(logit(x.row(j), th));
                    let dp = p.mul(T::one().sub(p));
                    for k in 0..x.cols() {
                        out[k] = c.mul(dp).mul(T::from_f64(x[(j, k)]));
                    }
                } else {
                    out[j - x.rows()] = T::from_f64(lambda.sqrt());
                }
            }
            Kind::SqrtControlled { .. } | Kind::LogisticBCE { .. } | Kind::QuadraticProbe { .. } => unreachable!("not least squares"),
        }
    }

    /// hess r_j, the per-residual curvature (unscaled by r_j).
    fn rhess<T: Real>(&self, th: &[T], j: usize) -> Mat<T> {
        let d = self.dim();
        let mut h: Mat<T> = Mat::zeros(d, d);
        match self {
            Kind::PolyExp { x, .. } => {
                let c = T::from_f64(scale_2n(x.len()));
                let xi = T::from_f64(x[j]);
                let e0 = th[0].exp();
                let e1 = th[1].exp();
                h[(0, 0)] = c.mul(th[1].mul(e0).mul(xi));
                let cross = c.mul(e0.mul(xi));
                h[(0, 1)] = cross;
                h[(1, 0)] = cross;
                h[(1, 1)] = c.mul(T::from_f64(2.0).add(th[1]).mul(e1).mul(xi.mul(xi)));
            }
            Kind::SinePoly { feats, .. } => {
                let c = T::from_f64(scale_2n(feats.rows()));
                let b = T::from_f64(feats[(j, 1)]);
                h[(2, 2)] = c.mul(th[2].mul(b).sin().neg().mul(b.mul(b)));
            }
            Kind::LinNonlin { x, w, y_lin, .. } => {
                let m = x.cols();
                if j < y_lin.len() {
                    let v = T::from_f64(2.0).mul(T::from_f64(w[(j / m, j % m)]));
                    h[(0, 0)] = v;
                    h[(1, 1)] = v;
                } else {
                    let jj = j - y_lin.len();
                    let xv = T::from_f64(x[(jj / m, jj % m)]);
                    let u = th[0].mul(th[1]).mul(xv);
                    let su = u.sin();
                    let cu = u.cos();
                    let x2 = xv.mul(xv);
                    h[(0, 0)] = su.neg().mul(x2).mul(th[1].mul(th[1]));
                    h[(1, 1)] = su.neg().mul(x2).mul(th[0].mul(th[0]));
                    let cross = su.neg().mul(x2).mul(th[0].mul(th[1])).add(cu.mul(xv));
                    h[(0, 1)] = cross;
                    h[(1, 0)] = cross;
                }
            }
            Kind::SquaredErrorSigmoid { x, .. } => {
                if j < x.rows() {
                    let c = T::from_f64(scale_2n(x.rows()));
                    let p = sigmoid(logit(x.row(j), th));
                    let one = T::one();
                    // sigma'' = p (1-p) (1-2p)
                    let w = c.mul(p.mul(one.sub(p)).mul(one.sub(T::from_f64(2.0).mul(p))));
                    for k in 0..d {
                        let wk = w.mul(T::from_f64(x[(j, k)]));
                        for l in k..d {
                            let v = wk.mul(T::from_f64(x[(j, l)]));
                            h[(k, l)] = v;
                            h[(l, k)] = v;
                        }
                    }
                }
                // regularizer rows are linear in theta: zero curvature
            }
            Kind::SqrtControlled { .. } | Kind::LogisticBCE { .. } | Kind::QuadraticProbe { .. } => unreachable!("not least squares"),
        }
        h
    }
}

/// sqrt(2/N), making 1/2 R^T R equal the paper's 1/N mean-square convention.
fn scale_2n(n: usize) -> f64 {
    (2.0 / n as f64).sqrt()
}

fn logit<T: Real>(xrow: &[f64], th: &[T]) -> T {
    let mut acc = T::zero();
    for (k, &v) in xrow.iter().enumerate() {
        acc = acc.add(T::from_f64(v).mul(th[k]));
    }
    acc
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one().div(T::one().add(z.neg().exp()))
}

/// Sigmoid with predictions pinned inside [u, 1-u] for the tier whose logs
/// consume them. Raises the clamp flag so traces can record the event.
fn clamped_sigmoid<T: Real>(z: T, pi: PrecisionTier) -> T {
    let p = sigmoid(z);
    let lo = T::from_f64(pi.unit_roundoff());
    let hi = T::one().sub(lo);
    if p < lo {
        flags::raise(flags::CLAMPED_PREDICTION);
        lo
    } else if p > hi {
        flags::raise(flags::CLAMPED_PREDICTION);
        hi
    } else {
        p
    }
}

fn sq_norm<T: Real>(v: &[T]) -> T {
    let mut acc = T::zero();
    for x in v {
        acc = acc.add(x.mul(*x));
    }
    acc
}
