//! Floating-point tiers and the per-operation rounding model fl(x op y) =
//! (x op y)(1 + δ), |δ| <= u. P32/P64 are native IEEE arithmetic; the
//! extended tier is double-double. Every scalar operation also ticks a
//! thread-local flop counter so experiments can meter arithmetic work.

pub mod dd;

pub use dd::Dd;

use crate::error::MpError;
use serde::{Deserialize, Serialize};

/// Floating-point tier. Serializes as "32" / "64" / "ext".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecisionTier {
    #[serde(rename = "32")]
    P32,
    #[serde(rename = "64")]
    P64,
    #[serde(rename = "ext")]
    Ext,
}

impl PrecisionTier {
    /// Significand bits t. The double-double tier is documented at 104 bits
    /// (2 x 52 effective; the conventional safe bound for compensated pairs).
    pub fn significand_bits(self) -> u32 {
        match self {
            PrecisionTier::P32 => 24,
            PrecisionTier::P64 => 53,
            PrecisionTier::Ext => 104,
        }
    }

    /// Unit roundoff u = 2^(-t).
    pub fn unit_roundoff(self) -> f64 {
        2f64.powi(-(self.significand_bits() as i32))
    }

    pub fn label(self) -> &'static str {
        match self {
            PrecisionTier::P32 => "32",
            PrecisionTier::P64 => "64",
            PrecisionTier::Ext => "ext",
        }
    }

    /// Tier whose unit roundoff is the smaller of the two.
    pub fn finer(self, other: PrecisionTier) -> PrecisionTier {
        if self.unit_roundoff() <= other.unit_roundoff() { self } else { other }
    }

    /// True when this tier is at least as accurate as `other` (u <= u_other).
    pub fn at_least(self, other: PrecisionTier) -> bool {
        self.unit_roundoff() <= other.unit_roundoff()
    }

    /// Largest finite magnitude representable at the tier.
    pub fn max_finite(self) -> f64 {
        match self {
            PrecisionTier::P32 => f32::MAX as f64,
            PrecisionTier::P64 | PrecisionTier::Ext => f64::MAX,
        }
    }
}

impl std::fmt::Display for PrecisionTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for PrecisionTier {
    type Err = MpError;
    fn from_str(s: &str) -> Result<Self, MpError> {
        match s {
            "32" => Ok(PrecisionTier::P32),
            "64" => Ok(PrecisionTier::P64),
            "ext" => Ok(PrecisionTier::Ext),
            other => Err(MpError::Config(format!("unknown tier {other:?} (use 32, 64, ext)"))),
        }
    }
}

/// Thread-local floating-point operation counter. Arithmetic (+,-,*,/, sqrt)
/// and transcendentals count 1 each; sign operations (neg, abs) are exact and
/// count 0. Always on; reads are cheap.
pub mod flops {
    use std::cell::Cell;

    thread_local! {
        static COUNT: Cell<u64> = const { Cell::new(0) };
    }

    #[inline]
    pub fn tick() {
        COUNT.with(|c| c.set(c.get().wrapping_add(1)));
    }

    pub fn total() -> u64 {
        COUNT.with(|c| c.get())
    }

    /// Flops spent inside the closure.
    pub fn metered<R>(f: impl FnOnce() -> R) -> (R, u64) {
        let before = total();
        let out = f();
        (out, total() - before)
    }
}

/// Scalar arithmetic at a fixed tier. Implementations round every operation
/// to the tier (native IEEE for f32/f64, compensated kernels for Dd) and tick
/// the flop counter once per rounded operation.
pub trait Real: Copy + PartialEq + PartialOrd + std::fmt::Debug + Send + Sync + 'static {
    const TIER: PrecisionTier;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    /// Exact sign flip; not a rounded operation.
    fn neg(self) -> Self;
    /// Exact magnitude; not a rounded operation.
    fn abs(self) -> Self;

    fn is_finite(self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

macro_rules! impl_real_native {
    ($t:ty, $tier:expr) => {
        impl Real for $t {
            const TIER: PrecisionTier = $tier;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn add(self, o: Self) -> Self {
                flops::tick();
                self + o
            }
            #[inline]
            fn sub(self, o: Self) -> Self {
                flops::tick();
                self - o
            }
            #[inline]
            fn mul(self, o: Self) -> Self {
                flops::tick();
                self * o
            }
            #[inline]
            fn div(self, o: Self) -> Self {
                flops::tick();
                self / o
            }
            #[inline]
            fn sqrt(self) -> Self {
                flops::tick();
                <$t>::sqrt(self)
            }
            #[inline]
            fn exp(self) -> Self {
                flops::tick();
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                flops::tick();
                <$t>::ln(self)
            }
            #[inline]
            fn sin(self) -> Self {
                flops::tick();
                <$t>::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                flops::tick();
                <$t>::cos(self)
            }
            #[inline]
            fn neg(self) -> Self {
                -self
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_real_native!(f32, PrecisionTier::P32);
impl_real_native!(f64, PrecisionTier::P64);

impl Real for Dd {
    const TIER: PrecisionTier = PrecisionTier::Ext;

    #[inline]
    fn from_f64(v: f64) -> Self {
        Dd::from_f64(v)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        Dd::to_f64(self)
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        flops::tick();
        Dd::add(self, o)
    }
    #[inline]
    fn sub(self, o: Self) -> Self {
        flops::tick();
        Dd::sub(self, o)
    }
    #[inline]
    fn mul(self, o: Self) -> Self {
        flops::tick();
        Dd::mul(self, o)
    }
    #[inline]
    fn div(self, o: Self) -> Self {
        flops::tick();
        Dd::div(self, o)
    }
    #[inline]
    fn sqrt(self) -> Self {
        flops::tick();
        Dd::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        flops::tick();
        Dd::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        flops::tick();
        Dd::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        flops::tick();
        Dd::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        flops::tick();
        Dd::cos(self)
    }
    #[inline]
    fn neg(self) -> Self {
        Dd::neg(self)
    }
    #[inline]
    fn abs(self) -> Self {
        Dd::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        Dd::is_finite(self)
    }
}

/// A value known to be exactly representable at its tier. The payload lives
/// in a double-double container, which holds every P32/P64 value exactly.
#[derive(Clone, Copy, Debug)]
pub struct RoundedScalar {
    value: Dd,
    tier: PrecisionTier,
}

impl RoundedScalar {
    /// Wrap a value the caller already evaluated at the tier.
    pub(crate) fn from_parts(value: Dd, tier: PrecisionTier) -> RoundedScalar {
        RoundedScalar { value, tier }
    }

    pub fn value_f64(&self) -> f64 {
        self.value.to_f64()
    }

    pub fn value_dd(&self) -> Dd {
        self.value
    }

    pub fn tier(&self) -> PrecisionTier {
        self.tier
    }
}

/// Round a double-double value to the tier, by value. Rounding Ext -> P32
/// goes through f64 (double rounding; the intermediate is 2^29 times finer
/// than the target, so the affected set is measure-tiny and accepted).
pub fn round_dd(x: Dd, tier: PrecisionTier) -> Dd {
    match tier {
        PrecisionTier::P32 => Dd::from_f64((x.to_f64() as f32) as f64),
        PrecisionTier::P64 => Dd::from_f64(x.to_f64()),
        PrecisionTier::Ext => x,
    }
}

/// Round an f64 value to the tier, returned in an f64 container (identity at
/// P64 and Ext).
pub fn round_f64(x: f64, tier: PrecisionTier) -> f64 {
    match tier {
        PrecisionTier::P32 => (x as f32) as f64,
        PrecisionTier::P64 | PrecisionTier::Ext => x,
    }
}

/// Round-to-nearest-even at the tier. Finite input whose magnitude exceeds
/// the tier's range is an overflow error, not a silent infinity.
pub fn round_to(x: f64, tier: PrecisionTier) -> Result<RoundedScalar, MpError> {
    if !x.is_finite() {
        return Err(MpError::Overflow { tier: tier.label(), context: "round_to of non-finite input".into() });
    }
    let value = round_dd(Dd::from_f64(x), tier);
    if !value.is_finite() {
        return Err(MpError::Overflow { tier: tier.label(), context: format!("round_to({x:e})") });
    }
    Ok(RoundedScalar { value, tier })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// One rounded operation at the tier: inputs are rounded on entry (idempotent
/// when already representable), the IEEE operation runs at the tier, and the
/// result is checked for range. For P32/P64 this is the native operation.
pub fn fl_op(a: f64, b: f64, op: FlOp, tier: PrecisionTier) -> Result<RoundedScalar, MpError> {
    let a = round_to(a, tier)?.value;
    let b = round_to(b, tier)?.value;
    if matches!(op, FlOp::Div) && b.to_f64() == 0.0 {
        return Err(MpError::Numeric(format!("division by zero at tier {}", tier.label())));
    }
    let value = match tier {
        PrecisionTier::P32 => {
            let (x, y) = (a.to_f64() as f32, b.to_f64() as f32);
            let r = match op {
                FlOp::Add => x + y,
                FlOp::Sub => x - y,
                FlOp::Mul => x * y,
                FlOp::Div => x / y,
            };
            Dd::from_f64(r as f64)
        }
        PrecisionTier::P64 => {
            let (x, y) = (a.to_f64(), b.to_f64());
            let r = match op {
                FlOp::Add => x + y,
                FlOp::Sub => x - y,
                FlOp::Mul => x * y,
                FlOp::Div => x / y,
            };
            Dd::from_f64(r)
        }
        PrecisionTier::Ext => match op {
            FlOp::Add => a.add(b),
            FlOp::Sub => a.sub(b),
            FlOp::Mul => a.mul(b),
            FlOp::Div => a.div(b),
        },
    };
    if !value.is_finite() {
        return Err(MpError::Overflow { tier: tier.label(), context: format!("fl_op({op:?})") });
    }
    flops::tick();
    Ok(RoundedScalar { value, tier })
}
