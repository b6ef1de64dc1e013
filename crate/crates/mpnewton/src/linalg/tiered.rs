//! Runtime-tier vectors and matrices. The optimizer moves data between
//! precision stages at run time, so these enums carry the tier in the
//! variant and dispatch to the generic kernels.

use super::Mat;
use crate::error::MpError;
use crate::precision::{round_f64, Dd, PrecisionTier, Real};

/// Vector whose tier is chosen at run time.
#[derive(Clone, Debug)]
pub enum DVec {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Ext(Vec<Dd>),
}

impl DVec {
    /// Round an f64 slice into the tier. Values outside the tier's range are
    /// an overflow error.
    pub fn from_f64_slice(v: &[f64], tier: PrecisionTier) -> Result<DVec, MpError> {
        check_range(v.iter().copied(), tier, "vector entry")?;
        Ok(match tier {
            PrecisionTier::P32 => DVec::F32(v.iter().map(|&x| x as f32).collect()),
            PrecisionTier::P64 => DVec::F64(v.to_vec()),
            PrecisionTier::Ext => DVec::Ext(v.iter().map(|&x| Dd::from_f64(x)).collect()),
        })
    }

    pub fn tier(&self) -> PrecisionTier {
        match self {
            DVec::F32(_) => PrecisionTier::P32,
            DVec::F64(_) => PrecisionTier::P64,
            DVec::Ext(_) => PrecisionTier::Ext,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DVec::F32(v) => v.len(),
            DVec::F64(v) => v.len(),
            DVec::Ext(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            DVec::F32(v) => v.iter().map(|&x| x as f64).collect(),
            DVec::F64(v) => v.clone(),
            DVec::Ext(v) => v.iter().map(|x| x.to_f64()).collect(),
        }
    }

    /// Re-round to another tier. Ext -> 64 -> 32 narrows by value; widening
    /// is exact. Narrowing out of f32 range is an overflow error.
    pub fn round_to(&self, tier: PrecisionTier) -> Result<DVec, MpError> {
        match (self, tier) {
            (DVec::Ext(v), PrecisionTier::Ext) => Ok(DVec::Ext(v.clone())),
            _ => DVec::from_f64_slice(&self.to_f64_vec(), tier),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            DVec::F32(v) => v.iter().all(|x| x.is_finite()),
            DVec::F64(v) => v.iter().all(|x| x.is_finite()),
            DVec::Ext(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    /// Euclidean norm, accumulated at the vector's own tier.
    pub fn norm2_f64(&self) -> f64 {
        match self {
            DVec::F32(v) => super::norm2(v).to_f64(),
            DVec::F64(v) => super::norm2(v),
            DVec::Ext(v) => super::norm2(v).to_f64(),
        }
    }
}

/// Matrix whose tier is chosen at run time.
#[derive(Clone, Debug)]
pub enum DMat {
    F32(Mat<f32>),
    F64(Mat<f64>),
    Ext(Mat<Dd>),
}

impl DMat {
    pub fn from_f64_mat(m: &Mat<f64>, tier: PrecisionTier) -> Result<DMat, MpError> {
        check_range(m.entries().iter().copied(), tier, "matrix entry")?;
        Ok(match tier {
            PrecisionTier::P32 => DMat::F32(m.cast()),
            PrecisionTier::P64 => DMat::F64(m.clone()),
            PrecisionTier::Ext => DMat::Ext(m.cast()),
        })
    }

    pub fn tier(&self) -> PrecisionTier {
        match self {
            DMat::F32(_) => PrecisionTier::P32,
            DMat::F64(_) => PrecisionTier::P64,
            DMat::Ext(_) => PrecisionTier::Ext,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            DMat::F32(m) => m.rows(),
            DMat::F64(m) => m.rows(),
            DMat::Ext(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            DMat::F32(m) => m.cols(),
            DMat::F64(m) => m.cols(),
            DMat::Ext(m) => m.cols(),
        }
    }

    pub fn to_f64_mat(&self) -> Mat<f64> {
        match self {
            DMat::F32(m) => m.to_f64_mat(),
            DMat::F64(m) => m.clone(),
            DMat::Ext(m) => m.to_f64_mat(),
        }
    }

    pub fn round_to(&self, tier: PrecisionTier) -> Result<DMat, MpError> {
        match (self, tier) {
            (DMat::Ext(m), PrecisionTier::Ext) => Ok(DMat::Ext(m.clone())),
            _ => DMat::from_f64_mat(&self.to_f64_mat(), tier),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            DMat::F32(m) => m.is_finite(),
            DMat::F64(m) => m.is_finite(),
            DMat::Ext(m) => m.is_finite(),
        }
    }

    /// CSV artifact form: a `rows,cols,tier` header, then one line per row.
    /// Entries are written as shortest round-trip f64; the extended tier
    /// serializes its leading component only, which is all the plotting and
    /// inspection artifacts need.
    pub fn to_csv(&self) -> String {
        let m = self.to_f64_mat();
        let mut out = String::from("rows,cols,tier\n");
        out.push_str(&format!("{},{},{}\n", m.rows(), m.cols(), self.tier()));
        for i in 0..m.rows() {
            let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<DMat, MpError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| MpError::ParseRow { line: 1, msg: "empty matrix file".into() })?;
        if header.trim() != "rows,cols,tier" {
            return Err(MpError::ParseRow { line: 1, msg: format!("expected rows,cols,tier header, got {header:?}") });
        }
        let (_, dims) = lines
            .next()
            .ok_or_else(|| MpError::ParseRow { line: 2, msg: "missing dimension line".into() })?;
        let parts: Vec<&str> = dims.trim().split(',').collect();
        if parts.len() != 3 {
            return Err(MpError::ParseRow { line: 2, msg: format!("expected rows,cols,tier values, got {dims:?}") });
        }
        let rows: usize = parts[0]
            .parse()
            .map_err(|e| MpError::ParseRow { line: 2, msg: format!("bad row count: {e}") })?;
        let cols: usize = parts[1]
            .parse()
            .map_err(|e| MpError::ParseRow { line: 2, msg: format!("bad column count: {e}") })?;
        let tier: PrecisionTier = parts[2]
            .parse()
            .map_err(|_| MpError::ParseRow { line: 2, msg: format!("bad tier label {:?}", parts[2]) })?;
        let mut m: Mat<f64> = Mat::zeros(rows, cols);
        let mut seen = 0usize;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if seen >= rows {
                return Err(MpError::ParseRow { line: idx + 1, msg: format!("more than {rows} data rows") });
            }
            let vals: Vec<&str> = line.trim().split(',').collect();
            if vals.len() != cols {
                return Err(MpError::ParseRow {
                    line: idx + 1,
                    msg: format!("expected {cols} entries, got {}", vals.len()),
                });
            }
            for (j, tok) in vals.iter().enumerate() {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| MpError::ParseRow { line: idx + 1, msg: format!("bad entry {tok:?}: {e}") })?;
                m[(seen, j)] = v;
            }
            seen += 1;
        }
        if seen != rows {
            return Err(MpError::ParseRow { line: 0, msg: format!("expected {rows} data rows, found {seen}") });
        }
        DMat::from_f64_mat(&m, tier)
    }
}

fn check_range(vals: impl Iterator<Item = f64>, tier: PrecisionTier, what: &str) -> Result<(), MpError> {
    for v in vals {
        if !v.is_finite() || !round_f64(v, tier).is_finite() {
            return Err(MpError::Overflow { tier: tier.label(), context: format!("{what} {v:e} out of tier range") });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_tiers() {
        let v = DVec::from_f64_slice(&[1.0, 0.1, -3.5e10], PrecisionTier::P64).unwrap();
        let narrow = v.round_to(PrecisionTier::P32).unwrap();
        assert_eq!(narrow.tier(), PrecisionTier::P32);
        assert_eq!(narrow.to_f64_vec()[0], 1.0);
        assert!((narrow.to_f64_vec()[1] - 0.1).abs() <= PrecisionTier::P32.unit_roundoff() * 0.1);
        // widening back is exact on the narrowed values
        let wide = narrow.round_to(PrecisionTier::Ext).unwrap();
        assert_eq!(wide.to_f64_vec(), narrow.to_f64_vec());
    }

    #[test]
    fn narrowing_overflow_is_an_error() {
        let v = DVec::from_f64_slice(&[1e39], PrecisionTier::P64).unwrap();
        assert!(matches!(v.round_to(PrecisionTier::P32), Err(MpError::Overflow { .. })));
    }

    #[test]
    fn csv_round_trip_preserves_values_and_tier() {
        let m = Mat::from_rows(&[&[1.5, -2.25e-30], &[0.1, 7.0]]);
        let d = DMat::from_f64_mat(&m, PrecisionTier::P64).unwrap();
        let text = d.to_csv();
        assert!(text.starts_with("rows,cols,tier\n2,2,64\n"));
        let back = DMat::from_csv(&text).unwrap();
        assert_eq!(back.tier(), PrecisionTier::P64);
        assert_eq!(back.to_f64_mat(), m);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(DMat::from_csv("").is_err());
        assert!(DMat::from_csv("rows,cols,tier\n2,2,64\n1.0,2.0\n").is_err());
        assert!(DMat::from_csv("rows,cols,tier\n2,2,99\n1,2\n3,4\n").is_err());
    }
}
