//! Double-double arithmetic: an unevaluated sum of two f64 carrying ~106
//! significand bits. Backs the extended tier. Kernels follow the classic
//! error-free-transform constructions (two_sum, two_prod via FMA).

/// Double-double value `hi + lo` with `|lo| <= ulp(hi)/2` when normalized.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    // requires |a| >= |b| or a == 0
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    (s, e)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = f64::mul_add(a, b, -p);
    (p, e)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    /// ln 2 to double-double accuracy.
    pub const LN2: Dd = Dd { hi: 0.693_147_180_559_945_3, lo: 2.319_046_813_846_299_6e-17 };
    /// π/2 to double-double accuracy.
    pub const FRAC_PI_2: Dd = Dd { hi: 1.570_796_326_794_896_6, lo: 6.123_233_995_736_766e-17 };
    /// 2π to double-double accuracy.
    pub const TAU: Dd = Dd { hi: 6.283_185_307_179_586, lo: 2.449_293_598_294_706_4e-16 };

    #[inline]
    pub fn from_f64(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    /// Nearest f64. For a normalized pair this is just `hi`; the sum form
    /// also handles denormalized pairs.
    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) { self.neg() } else { self }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = {
            let e = e + t;
            quick_two_sum(s, e)
        };
        let e = e + f;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    /// Long division: three quotient digits then renormalize.
    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        if !q1.is_finite() {
            return Dd::from_f64(q1);
        }
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd { hi: s, lo: e }.add(Dd::from_f64(q3))
    }

    #[inline]
    pub fn add_f64(self, v: f64) -> Dd {
        self.add(Dd::from_f64(v))
    }

    pub fn mul_f64(self, v: f64) -> Dd {
        let (p, e) = two_prod(self.hi, v);
        let e = e + self.lo * v;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    /// Exact scaling by a power of two (both components scale independently).
    #[inline]
    fn scale_pow2(self, p: f64) -> Dd {
        Dd { hi: self.hi * p, lo: self.lo * p }
    }

    /// One Newton refinement of the f64 square root lands well below
    /// double-double roundoff (error u64^2/2).
    pub fn sqrt(self) -> Dd {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ZERO;
        }
        if self.hi < 0.0 {
            return Dd::from_f64(f64::NAN);
        }
        let r = Dd::from_f64(self.hi.sqrt());
        r.add(self.div(r)).scale_pow2(0.5)
    }

    /// exp by range reduction x = k ln2 + r, Taylor on r/64, then 6 squarings.
    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -709.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / Dd::LN2.hi).round();
        let r = self.sub(Dd::LN2.mul_f64(k));
        let rs = r.scale_pow2(1.0 / 64.0);
        // sum_{n=0..14} rs^n / n!; |rs| <= ln2/128 keeps the tail below 1e-33
        let mut sum = Dd::ONE.add(rs);
        let mut pow = rs;
        for n in 2..=14u32 {
            pow = pow.mul(rs);
            sum = sum.add(pow.mul(inv_factorial(n)));
        }
        let mut y = sum;
        for _ in 0..6 {
            y = y.mul(y);
        }
        // scale by 2^k; k is at most ~1024 so split the ldexp in two
        let half = (k / 2.0).trunc();
        y.scale_pow2(pow2(half)).scale_pow2(pow2(k - half))
    }

    /// ln via Newton on exp: y <- y + x e^{-y} - 1, two refinements of the
    /// f64 seed.
    pub fn ln(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::from_f64(f64::NAN);
        }
        let mut y = Dd::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y.add(self.mul(y.neg().exp())).add_f64(-1.0);
        }
        y
    }

    pub fn sin(self) -> Dd {
        let (r, q) = self.reduce_half_pi();
        match q {
            0 => sin_taylor(r),
            1 => cos_taylor(r),
            2 => sin_taylor(r).neg(),
            _ => cos_taylor(r).neg(),
        }
    }

    pub fn cos(self) -> Dd {
        let (r, q) = self.reduce_half_pi();
        match q {
            0 => cos_taylor(r),
            1 => sin_taylor(r).neg(),
            2 => cos_taylor(r).neg(),
            _ => sin_taylor(r),
        }
    }

    /// Argument reduction modulo π/2. The two-part π/2 constant keeps the
    /// reduction error near n·u(dd); callers must stay below |x| ~ 1e8 (the
    /// model functions never exceed a few hundred).
    fn reduce_half_pi(self) -> (Dd, i32) {
        let n = (self.to_f64() / Dd::FRAC_PI_2.hi).round();
        let r = self.sub(Dd::FRAC_PI_2.mul_f64(n));
        let q = ((n as i64) & 3) as i32;
        (r, q)
    }

    /// Lexicographic comparison is value order for normalized pairs.
    #[inline]
    fn less(self, o: Dd) -> bool {
        self.hi < o.hi || (self.hi == o.hi && self.lo < o.lo)
    }
}

impl PartialEq for Dd {
    fn eq(&self, other: &Self) -> bool {
        self.hi == other.hi && self.lo == other.lo
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        if self.hi.is_nan() || other.hi.is_nan() {
            return None;
        }
        Some(if self == other {
            std::cmp::Ordering::Equal
        } else if self.less(*other) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        })
    }
}

fn pow2(k: f64) -> f64 {
    2.0f64.powi(k as i32)
}

fn sin_taylor(x: Dd) -> Dd {
    // sum (-1)^k x^{2k+1}/(2k+1)! up to x^31; |x| <= pi/4
    let x2 = x.mul(x);
    let mut term = x;
    let mut sum = x;
    for k in 1..=15u32 {
        term = term.mul(x2);
        let c = inv_factorial(2 * k + 1);
        let t = term.mul(c);
        sum = if k % 2 == 1 { sum.sub(t) } else { sum.add(t) };
    }
    sum
}

fn cos_taylor(x: Dd) -> Dd {
    let x2 = x.mul(x);
    let mut term = Dd::ONE;
    let mut sum = Dd::ONE;
    for k in 1..=15u32 {
        term = term.mul(x2);
        let c = inv_factorial(2 * k);
        let t = term.mul(c);
        sum = if k % 2 == 1 { sum.sub(t) } else { sum.add(t) };
    }
    sum
}

/// 1/n! at double-double accuracy, built once from exact integer products.
fn inv_factorial(n: u32) -> Dd {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Vec<Dd>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut v = vec![Dd::ONE; 32];
        let mut fact = Dd::ONE;
        for i in 1..32u32 {
            fact = fact.mul_f64(i as f64);
            v[i as usize] = Dd::ONE.div(fact);
        }
        v
    });
    table[n as usize]
}
