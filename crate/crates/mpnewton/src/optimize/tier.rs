//! Runtime-tier to static-type plumbing: the Newton loop carries DVec/DMat
//! values whose tier is a run-time policy field, while the solver kernels
//! are generic over the scalar. One match per entry point dispatches; these
//! accessors recover the typed payload inside the generic code.

use crate::linalg::{DMat, DVec, Mat};
use crate::precision::{Dd, Real};

/// Extraction half of tier dispatch. Callers round everything to the target
/// tier before dispatching, so a variant mismatch here is a bug in the
/// dispatcher, not bad input.
pub(crate) trait TierData: Real {
    fn vec(v: &DVec) -> &[Self];
    fn mat(m: &DMat) -> &Mat<Self>;
    fn lift(v: Vec<Self>) -> DVec;
    fn lift_mat(m: Mat<Self>) -> DMat;
}

impl TierData for f32 {
    fn vec(v: &DVec) -> &[f32] {
        match v {
            DVec::F32(x) => x,
            _ => unreachable!("vector not at P32"),
        }
    }
    fn mat(m: &DMat) -> &Mat<f32> {
        match m {
            DMat::F32(x) => x,
            _ => unreachable!("matrix not at P32"),
        }
    }
    fn lift(v: Vec<f32>) -> DVec {
        DVec::F32(v)
    }
    fn lift_mat(m: Mat<f32>) -> DMat {
        DMat::F32(m)
    }
}

impl TierData for f64 {
    fn vec(v: &DVec) -> &[f64] {
        match v {
            DVec::F64(x) => x,
            _ => unreachable!("vector not at P64"),
        }
    }
    fn mat(m: &DMat) -> &Mat<f64> {
        match m {
            DMat::F64(x) => x,
            _ => unreachable!("matrix not at P64"),
        }
    }
    fn lift(v: Vec<f64>) -> DVec {
        DVec::F64(v)
    }
    fn lift_mat(m: Mat<f64>) -> DMat {
        DMat::F64(m)
    }
}

impl TierData for Dd {
    fn vec(v: &DVec) -> &[Dd] {
        match v {
            DVec::Ext(x) => x,
            _ => unreachable!("vector not at PExt"),
        }
    }
    fn mat(m: &DMat) -> &Mat<Dd> {
        match m {
            DMat::Ext(x) => x,
            _ => unreachable!("matrix not at PExt"),
        }
    }
    fn lift(v: Vec<Dd>) -> DVec {
        DVec::Ext(v)
    }
    fn lift_mat(m: Mat<Dd>) -> DMat {
        DMat::Ext(m)
    }
}
