//! Arbitrary-precision binary floating point over `num_bigint`.
//!
//! A value is `(-1)^neg * mant * 2^exp` with an unbounded mantissa and an
//! `i64` exponent. The wide exponent range is the point: quantities like
//! `dist(q_n * alpha, Z)` for Liouville rotation numbers sit near `2^(-10^9)`,
//! far below anything `f64` (or a fixed-point layout) can hold.
//!
//! Values constructed from integers or `f64` are exact carriers of whatever
//! width they need; arithmetic goes through a [`FloatCtx`] that rounds results
//! to its working precision (round to nearest, ties to even). Comparisons are
//! always exact. Callers that need guaranteed enclosures track error bounds
//! separately (see `diophantine::NormValue`); a rounded op here is within one
//! ulp of the true value.

use std::cmp::Ordering;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};

/// Binary float: `(-1)^neg * mant * 2^exp`; zero iff `mant` is zero.
#[derive(Clone, PartialEq, Eq)]
pub struct BigFloat {
    neg: bool,
    mant: BigUint,
    exp: i64,
}

/// Rounding context. `prec` is the mantissa width results are rounded to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloatCtx {
    pub prec: u32,
}

/// First 512 fractional bits of pi in hex, mantissa `0x3243F6...` * 2^-512.
const PI_HEX: &str = "3243F6A8885A308D313198A2E03707344A4093822299F31D0082EFA98EC4E6C89452821E638D01377BE5466CF34E90C6CC0AC29B7C97C50DD3F84D5B5B5470917";

fn pi_mant() -> &'static BigUint {
    static PI: OnceLock<BigUint> = OnceLock::new();
    PI.get_or_init(|| BigUint::parse_bytes(PI_HEX.as_bytes(), 16).expect("pi literal"))
}

impl BigFloat {
    pub fn zero() -> Self {
        BigFloat { neg: false, mant: BigUint::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        BigFloat { neg: false, mant: BigUint::one(), exp: 0 }
    }

    /// Exact `2^k`.
    pub fn pow2(k: i64) -> Self {
        BigFloat { neg: false, mant: BigUint::one(), exp: k }
    }

    pub fn from_u64(v: u64) -> Self {
        BigFloat { neg: false, mant: BigUint::from(v), exp: 0 }.trimmed()
    }

    pub fn from_i64(v: i64) -> Self {
        BigFloat { neg: v < 0, mant: BigUint::from(v.unsigned_abs()), exp: 0 }.trimmed()
    }

    pub fn from_biguint(v: &BigUint) -> Self {
        BigFloat { neg: false, mant: v.clone(), exp: 0 }.trimmed()
    }

    pub fn from_bigint(v: &BigInt) -> Self {
        BigFloat { neg: v.sign() == Sign::Minus, mant: v.magnitude().clone(), exp: 0 }.trimmed()
    }

    /// Exact conversion; every finite `f64` is `m * 2^e` with `m < 2^53`.
    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "BigFloat::from_f64 needs a finite value");
        if v == 0.0 {
            return Self::zero();
        }
        let bits = v.to_bits();
        let neg = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        BigFloat { neg, mant: BigUint::from(m), exp: e }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        if self.mant.is_zero() {
            return Self::zero();
        }
        let tz = self.mant.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mant >>= tz;
            self.exp += tz as i64;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.neg && !self.mant.is_zero()
    }

    pub fn neg(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        BigFloat { neg: !self.neg, mant: self.mant.clone(), exp: self.exp }
    }

    pub fn abs(&self) -> Self {
        BigFloat { neg: false, mant: self.mant.clone(), exp: self.exp }
    }

    /// Exact scaling by `2^k`.
    pub fn ldexp(&self, k: i64) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        BigFloat { neg: self.neg, mant: self.mant.clone(), exp: self.exp.checked_add(k).expect("exponent overflow") }
    }

    /// Position of the leading bit: value magnitude is in `[2^(b-1), 2^b)`.
    /// Zero has no magnitude exponent.
    pub fn mag_exp(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.exp + self.mant.bits() as i64)
        }
    }

    /// `log2 |x|` as a lossy `f64` (for diagnostics and serialization).
    pub fn log2_f64(&self) -> f64 {
        match self.mag_exp() {
            None => f64::NEG_INFINITY,
            Some(top) => {
                let bits = self.mant.bits();
                let take = bits.min(53);
                let head: BigUint = &self.mant >> (bits - take);
                let head = head.to_u64_digits().first().copied().unwrap_or(0) as f64;
                (top - take as i64) as f64 + head.log2()
            }
        }
    }

    /// Nearest `f64`, with overflow to `+-inf` and underflow to (signed) zero.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mant.bits();
        let take = bits.min(54);
        let mut head: BigUint = &self.mant >> (bits - take);
        // Round on the first dropped bit; sticky bits can only push ties up,
        // which is within a ulp of f64's own tie rule and fine for a lossy cast.
        if bits > take {
            let dropped_top = ((&self.mant >> (bits - take - 1)) & BigUint::one()) == BigUint::one();
            if dropped_top {
                head += 1u32;
            }
        }
        let m = head.to_u64_digits().first().copied().unwrap_or(0);
        let e = self.exp + (bits as i64 - take as i64);
        let mut v = m as f64;
        // Apply 2^e in clamped chunks so intermediate scaling never overflows.
        let mut e = e;
        while e != 0 {
            let step = e.clamp(-1000, 1000);
            v *= f64::from(2.0f64).powi(step as i32);
            e -= step;
            if v == 0.0 || v.is_infinite() {
                break;
            }
        }
        if self.neg {
            -v
        } else {
            v
        }
    }

    /// Exact comparison.
    pub fn cmp_exact(&self, other: &BigFloat) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return if other.neg { Ordering::Greater } else { Ordering::Less },
            (false, true) => return if self.neg { Ordering::Less } else { Ordering::Greater },
            _ => {}
        }
        if self.neg != other.neg {
            return if self.neg { Ordering::Less } else { Ordering::Greater };
        }
        let mag = self.cmp_magnitude(other);
        if self.neg {
            mag.reverse()
        } else {
            mag
        }
    }

    fn cmp_magnitude(&self, other: &BigFloat) -> Ordering {
        let ta = self.exp + self.mant.bits() as i64;
        let tb = other.exp + other.mant.bits() as i64;
        match ta.cmp(&tb) {
            Ordering::Equal => {}
            ord => return ord,
        }
        // Same leading-bit position: align the shorter mantissa up.
        let ba = self.mant.bits();
        let bb = other.mant.bits();
        if ba == bb {
            self.mant.cmp(&other.mant)
        } else if ba > bb {
            self.mant.cmp(&(&other.mant << (ba - bb)))
        } else {
            (&self.mant << (bb - ba)).cmp(&other.mant)
        }
    }

    /// Nearest integer (ties away from zero; exact inputs at `.5` are rare and
    /// callers treat them as a precision-exhausted boundary anyway).
    pub fn round_int(&self) -> Option<BigInt> {
        const MAX_INT_BITS: i64 = 1 << 26;
        if self.is_zero() {
            return Some(BigInt::zero());
        }
        let top = self.mag_exp().unwrap();
        if top > MAX_INT_BITS {
            return None;
        }
        if self.exp >= 0 {
            let m = BigInt::from_biguint(if self.neg { Sign::Minus } else { Sign::Plus }, self.mant.clone());
            return Some(m << self.exp as u64);
        }
        let shift = (-self.exp) as u64;
        let bits = self.mant.bits();
        if shift >= bits + 1 {
            // |x| <= 1/2: rounds to zero unless exactly 1/2.
            if shift == bits && self.mant.is_one() {
                // exactly 1/2: away from zero
                return Some(if self.neg { BigInt::from(-1) } else { BigInt::one() });
            }
            return Some(BigInt::zero());
        }
        let int_part: BigUint = &self.mant >> shift;
        let half_bit = ((&self.mant >> (shift - 1)) & BigUint::one()) == BigUint::one();
        let mut n = int_part;
        if half_bit {
            n += 1u32;
        }
        let n = BigInt::from_biguint(if self.neg { Sign::Minus } else { Sign::Plus }, n);
        Some(n)
    }

    /// Signed distance to the nearest integer, in `[-1/2, 1/2]`. Exact.
    pub fn frac_signed(&self) -> Option<BigFloat> {
        let n = self.round_int()?;
        Some(sub_exact(self, &BigFloat::from_bigint(&n)))
    }

    /// Exact sum; the mantissa grows as needed. Aligning the operands costs
    /// memory proportional to their exponent gap, which is the caller's
    /// responsibility to keep bounded.
    pub fn add_exact(&self, other: &BigFloat) -> BigFloat {
        add_exact(self, other)
    }

    pub fn sub_exact(&self, other: &BigFloat) -> BigFloat {
        sub_exact(self, other)
    }

    /// Takes ownership of a `BigUint` without copying the limbs.
    pub fn from_biguint_owned(v: BigUint) -> Self {
        BigFloat { neg: false, mant: v, exp: 0 }.trimmed()
    }

    pub fn min(self, other: BigFloat) -> BigFloat {
        if self.cmp_exact(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: BigFloat) -> BigFloat {
        if self.cmp_exact(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }
}

impl std::fmt::Debug for BigFloat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return write!(f, "0.0");
        }
        let v = self.to_f64();
        if v != 0.0 && v.is_finite() {
            write!(f, "{v:e}")
        } else {
            write!(f, "{}2^{:.3}", if self.neg { "-" } else { "" }, self.log2_f64())
        }
    }
}

/// Exact signed addition of raw values (mantissas can grow; no rounding).
/// Only safe when the exponent gap is bounded; context ops guard that.
fn add_exact(a: &BigFloat, b: &BigFloat) -> BigFloat {
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    let exp = a.exp.min(b.exp);
    let ma = &a.mant << (a.exp - exp) as u64;
    let mb = &b.mant << (b.exp - exp) as u64;
    if a.neg == b.neg {
        return BigFloat { neg: a.neg, mant: ma + mb, exp }.trimmed();
    }
    match ma.cmp(&mb) {
        Ordering::Equal => BigFloat::zero(),
        Ordering::Greater => BigFloat { neg: a.neg, mant: ma - mb, exp }.trimmed(),
        Ordering::Less => BigFloat { neg: b.neg, mant: mb - ma, exp }.trimmed(),
    }
}

fn sub_exact(a: &BigFloat, b: &BigFloat) -> BigFloat {
    add_exact(a, &b.neg())
}

impl FloatCtx {
    pub fn new(prec: u32) -> Self {
        assert!(prec >= 8, "precision below 8 bits is never intended");
        FloatCtx { prec }
    }

    /// Round to `prec` mantissa bits, nearest, ties to even. `sticky` marks
    /// already-discarded low bits.
    fn round(&self, mut x: BigFloat, mut sticky: bool) -> BigFloat {
        if x.is_zero() {
            return x;
        }
        let bits = x.mant.bits();
        let p = self.prec as u64;
        if bits <= p {
            // Sticky alone never moves a value at or below half-ulp scale.
            return x.trimmed();
        }
        let drop = bits - p;
        let guard = ((&x.mant >> (drop - 1)) & BigUint::one()) == BigUint::one();
        if !sticky && drop > 1 {
            let low_mask = (BigUint::one() << (drop - 1)) - BigUint::one();
            sticky = (&x.mant & low_mask) != BigUint::zero();
        }
        let mut head: BigUint = &x.mant >> drop;
        let round_up = guard && (sticky || (&head & BigUint::one()) == BigUint::one());
        if round_up {
            head += 1u32;
        }
        x.mant = head;
        x.exp += drop as i64;
        x.trimmed()
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        if a.is_zero() {
            return self.round(b.clone(), false);
        }
        if b.is_zero() {
            return self.round(a.clone(), false);
        }
        let ta = a.mag_exp().unwrap();
        let tb = b.mag_exp().unwrap();
        let gap_limit = self.prec as i64 + 2;
        if ta - tb > gap_limit {
            return self.round(a.clone(), true);
        }
        if tb - ta > gap_limit {
            return self.round(b.clone(), true);
        }
        // Mantissa widths may exceed prec (exact carriers): cap the alignment
        // cost by pre-rounding enormous operands to working width first.
        let a = self.prep(a);
        let b = self.prep(b);
        self.round(add_exact(&a, &b), false)
    }

    /// Pre-rounds an exact carrier to 2*prec bits so alignment shifts stay
    /// bounded. Wide-enough to keep a subsequent rounding step faithful.
    fn prep(&self, x: &BigFloat) -> BigFloat {
        let wide = FloatCtx { prec: self.prec * 2 + 8 };
        wide.round(x.clone(), false)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        self.add(a, &b.neg())
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        if a.is_zero() || b.is_zero() {
            return BigFloat::zero();
        }
        let a = self.prep(a);
        let b = self.prep(b);
        let mant = &a.mant * &b.mant;
        let exp = a.exp.checked_add(b.exp).expect("exponent overflow");
        self.round(BigFloat { neg: a.neg != b.neg, mant, exp }, false)
    }

    pub fn mul_i64(&self, a: &BigFloat, k: i64) -> BigFloat {
        self.mul(a, &BigFloat::from_i64(k))
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        assert!(!b.is_zero(), "division by zero BigFloat");
        if a.is_zero() {
            return BigFloat::zero();
        }
        let a = self.prep(a);
        let b = self.prep(b);
        let ba = a.mant.bits() as i64;
        let bb = b.mant.bits() as i64;
        // Shift the numerator so the raw quotient carries prec+3 bits.
        let shift = (self.prec as i64 + 3 + bb - ba).max(0) as u64;
        let num = &a.mant << shift;
        let (q, r) = num_integer::Integer::div_rem(&num, &b.mant);
        let exp = a.exp - b.exp - shift as i64;
        self.round(BigFloat { neg: a.neg != b.neg, mant: q, exp }, !r.is_zero())
    }

    pub fn div_u32(&self, a: &BigFloat, k: u32) -> BigFloat {
        self.div(a, &BigFloat::from_u64(k as u64))
    }

    /// Rounded value of the integer ratio `p/q`.
    pub fn from_ratio(&self, p: &BigInt, q: &BigInt) -> BigFloat {
        self.div(&BigFloat::from_bigint(p), &BigFloat::from_bigint(q))
    }

    /// Rounds a (possibly huge) integer into working precision.
    pub fn from_bigint_rounded(&self, v: &BigInt) -> BigFloat {
        self.round(BigFloat::from_bigint(v), false)
    }

    pub fn pi(&self) -> BigFloat {
        let raw = BigFloat { neg: false, mant: pi_mant().clone(), exp: -512 };
        assert!(self.prec <= 500, "pi constant carries 512 bits");
        self.round(raw, true)
    }

    /// `sin(2 pi x)`, exact argument reduction then Taylor on an octant.
    pub fn sin_2pi(&self, x: &BigFloat) -> BigFloat {
        let (s, c, swap, neg_s, _neg_c) = self.octant(x);
        let v = if swap { c } else { s };
        if neg_s {
            v.neg()
        } else {
            v
        }
    }

    /// `cos(2 pi x)`.
    pub fn cos_2pi(&self, x: &BigFloat) -> BigFloat {
        let (s, c, swap, _neg_s, neg_c) = self.octant(x);
        let v = if swap { s } else { c };
        if neg_c {
            v.neg()
        } else {
            v
        }
    }

    /// Reduces to `t in [0, 1/8]` of a turn and returns
    /// `(sin(2 pi t), cos(2 pi t), swap, negate_sin, negate_cos)`.
    fn octant(&self, x: &BigFloat) -> (BigFloat, BigFloat, bool, bool, bool) {
        let r = x.frac_signed().expect("trig argument too large for exact reduction");
        let neg_s = r.is_negative();
        let mut t = r.abs(); // in [0, 1/2]
        // Fold [1/4, 1/2] -> [0, 1/4] (sin unchanged, cos negated).
        let quarter = BigFloat::pow2(-2);
        let half = BigFloat::pow2(-1);
        let mut neg_c = false;
        if t.cmp_exact(&quarter) == Ordering::Greater {
            t = sub_exact(&half, &t);
            neg_c = true;
        }
        // Fold [1/8, 1/4] -> [0, 1/8] (swap sin and cos).
        let eighth = BigFloat::pow2(-3);
        let mut swap = false;
        if t.cmp_exact(&eighth) == Ordering::Greater {
            t = sub_exact(&quarter, &t);
            swap = true;
        }
        // For r in [-1/2,1/2]: sin(2 pi r) = sign(r) sin(2 pi |r|) and cos is
        // even. The first fold negates only cos, the second swaps the pair,
        // and both folded branches land in [0,1/8] where sin and cos are
        // nonnegative, so the flags never interact.
        let (s, c) = self.sincos_kernel(&t);
        (s, c, swap, neg_s, neg_c)
    }

    /// Taylor kernel on `t in [0, 1/8]` turns: angle `2 pi t <= pi/4`.
    fn sincos_kernel(&self, t: &BigFloat) -> (BigFloat, BigFloat) {
        let work = FloatCtx { prec: self.prec + 16 };
        if t.is_zero() {
            return (BigFloat::zero(), BigFloat::one());
        }
        let theta = work.mul(&work.pi(), &t.ldexp(1));
        let theta2 = work.mul(&theta, &theta);
        let target = theta.mag_exp().unwrap_or(0) - (work.prec as i64) - 8;
        // sin = sum (-1)^k theta^(2k+1)/(2k+1)!, cos analogous.
        let mut sin = theta.clone();
        let mut term_s = theta.clone();
        let mut cos = BigFloat::one();
        let mut term_c = BigFloat::one();
        let mut k = 1u32;
        loop {
            term_c = work.div_u32(&work.mul(&term_c, &theta2), (2 * k - 1) * (2 * k));
            let signed_c = if k % 2 == 1 { term_c.neg() } else { term_c.clone() };
            cos = work.add(&cos, &signed_c);
            term_s = work.div_u32(&work.mul(&term_s, &theta2), (2 * k) * (2 * k + 1));
            let signed_s = if k % 2 == 1 { term_s.neg() } else { term_s.clone() };
            sin = work.add(&sin, &signed_s);
            let done = term_s
                .mag_exp()
                .map(|e| e < target)
                .unwrap_or(true);
            if done {
                break;
            }
            k += 1;
            assert!(k < 10_000, "sin/cos series failed to converge");
        }
        (self.round(sin, true), self.round(cos, true))
    }
}

/// Distance from `x` to the nearest integer, for plain doubles.
pub fn circle_norm_f64(x: f64) -> f64 {
    (x - x.round()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn ctx() -> FloatCtx {
        FloatCtx::new(256)
    }

    #[test]
    fn f64_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let v: f64 = rng.random::<f64>() * 2f64.powi(rng.random_range(-300..300));
            let v = if rng.random::<bool>() { -v } else { v };
            assert_eq!(BigFloat::from_f64(v).to_f64(), v, "round trip for {v:e}");
        }
        for v in [0.0, 1.0, -1.0, f64::MIN_POSITIVE, 5e-324, 1.5f64.powi(100)] {
            assert_eq!(BigFloat::from_f64(v).to_f64(), v);
        }
    }

    #[test]
    fn arithmetic_matches_f64_when_representable() {
        let c = ctx();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let a: f64 = rng.random::<f64>() * 100.0 - 50.0;
            let b: f64 = rng.random::<f64>() * 100.0 - 50.0;
            let fa = BigFloat::from_f64(a);
            let fb = BigFloat::from_f64(b);
            let prod = c.mul(&fa, &fb).to_f64();
            assert!((prod - a * b).abs() <= (a * b).abs() * 1e-15 + 1e-300);
            let sum = c.add(&fa, &fb).to_f64();
            assert!((sum - (a + b)).abs() <= (a + b).abs() * 1e-15 + 1e-12);
            if b != 0.0 {
                let q = c.div(&fa, &fb).to_f64();
                assert!((q - a / b).abs() <= (a / b).abs() * 1e-15 + 1e-300);
            }
        }
    }

    #[test]
    fn add_exact_cancellation_is_exact() {
        let c = ctx();
        // (2^200 + 1) - 2^200 = 1 exactly at 256 bits of precision.
        let big = BigFloat::pow2(200);
        let x = c.add(&big, &BigFloat::one());
        let d = c.sub(&x, &big);
        assert_eq!(d.cmp_exact(&BigFloat::one()), Ordering::Equal);
    }

    #[test]
    fn tiny_addend_rounds_away() {
        let c = ctx();
        let x = c.add(&BigFloat::one(), &BigFloat::pow2(-400));
        assert_eq!(x.cmp_exact(&BigFloat::one()), Ordering::Equal);
    }

    #[test]
    fn division_of_one_third_multiplies_back() {
        let c = ctx();
        let third = c.from_ratio(&BigInt::from(1), &BigInt::from(3));
        let back = c.mul_i64(&third, 3);
        let err = c.sub(&back, &BigFloat::one()).abs();
        assert!(err.cmp_exact(&BigFloat::pow2(-254)) == Ordering::Less, "err {err:?}");
    }

    #[test]
    fn comparison_handles_exact_carriers() {
        let big = BigUint::one() << 100_000u32;
        let a = BigFloat::from_biguint(&big);            // 2^100000
        let b = BigFloat::pow2(100_000);
        assert_eq!(a.cmp_exact(&b), Ordering::Equal);
        let c = BigFloat::from_biguint(&(big + BigUint::one()));
        assert_eq!(c.cmp_exact(&b), Ordering::Greater);
    }

    #[test]
    fn round_int_and_frac_signed() {
        assert_eq!(BigFloat::from_f64(2.5).round_int().unwrap(), BigInt::from(3));
        assert_eq!(BigFloat::from_f64(-2.5).round_int().unwrap(), BigInt::from(-3));
        assert_eq!(BigFloat::from_f64(2.25).round_int().unwrap(), BigInt::from(2));
        let r = BigFloat::from_f64(7.375).frac_signed().unwrap();
        assert_eq!(r.to_f64(), 0.375);
        let r = BigFloat::from_f64(7.625).frac_signed().unwrap();
        assert_eq!(r.to_f64(), -0.375);
        let r = BigFloat::from_f64(-0.125).frac_signed().unwrap();
        assert_eq!(r.to_f64(), -0.125);
    }

    #[test]
    fn pi_matches_f64_and_machin() {
        let c = FloatCtx::new(320);
        let pi = c.pi();
        assert!((pi.to_f64() - std::f64::consts::PI).abs() < 1e-15);
        // Machin: pi = 16 atan(1/5) - 4 atan(1/239), independent oracle.
        let atan_inv = |n: i64| -> BigFloat {
            let w = FloatCtx::new(360);
            let inv = w.from_ratio(&BigInt::from(1), &BigInt::from(n));
            let inv2 = w.mul(&inv, &inv);
            let mut term = inv.clone();
            let mut sum = inv.clone();
            let mut k = 1u32;
            loop {
                term = w.mul(&term, &inv2);
                let signed = w.div_u32(&term, 2 * k + 1);
                sum = if k % 2 == 1 { w.sub(&sum, &signed) } else { w.add(&sum, &signed) };
                if term.mag_exp().map(|e| e < -360).unwrap_or(true) {
                    break;
                }
                k += 1;
            }
            sum
        };
        let w = FloatCtx::new(360);
        let machin = w.sub(&atan_inv(5).ldexp(4), &atan_inv(239).ldexp(2));
        let err = w.sub(&machin, &pi).abs();
        assert!(err.cmp_exact(&BigFloat::pow2(-310)) == Ordering::Less, "pi vs machin err {err:?}");
    }

    #[test]
    fn trig_matches_libm() {
        let c = FloatCtx::new(128);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let x: f64 = rng.random::<f64>() * 8.0 - 4.0;
            let fx = BigFloat::from_f64(x);
            let s = c.sin_2pi(&fx).to_f64();
            let co = c.cos_2pi(&fx).to_f64();
            let exact_s = libm::sin(2.0 * std::f64::consts::PI * x);
            let exact_c = libm::cos(2.0 * std::f64::consts::PI * x);
            assert!((s - exact_s).abs() < 3e-14, "sin_2pi({x}) = {s} vs {exact_s}");
            assert!((co - exact_c).abs() < 3e-14, "cos_2pi({x}) = {co} vs {exact_c}");
        }
    }

    #[test]
    fn trig_special_points() {
        let c = FloatCtx::new(200);
        let one = BigFloat::one();
        // sin(2 pi / 4) = 1, cos = 0
        let q = BigFloat::pow2(-2);
        assert_eq!(c.sin_2pi(&q).cmp_exact(&one), Ordering::Equal);
        assert!(c.cos_2pi(&q).abs().cmp_exact(&BigFloat::pow2(-190)) == Ordering::Less);
        // sin(2 pi / 12) = 1/2 exactly
        let twelfth = c.from_ratio(&BigInt::from(1), &BigInt::from(12));
        let s = c.sin_2pi(&twelfth);
        let err = c.sub(&s, &BigFloat::pow2(-1)).abs();
        assert!(err.cmp_exact(&BigFloat::pow2(-190)) == Ordering::Less, "sin(pi/6) err {err:?}");
        // Pythagorean identity at a generic point, 190-bit agreement.
        let x = c.from_ratio(&BigInt::from(17), &BigInt::from(97));
        let s = c.sin_2pi(&x);
        let co = c.cos_2pi(&x);
        let lhs = c.add(&c.mul(&s, &s), &c.mul(&co, &co));
        let err = c.sub(&lhs, &one).abs();
        assert!(err.cmp_exact(&BigFloat::pow2(-190)) == Ordering::Less);
    }

    #[test]
    fn trig_tiny_arguments_keep_relative_accuracy() {
        let c = FloatCtx::new(200);
        // sin(2 pi x) ~ 2 pi x for x = 2^-1000: far below f64 range.
        let x = BigFloat::pow2(-1000);
        let s = c.sin_2pi(&x);
        let expected = c.mul(&c.pi(), &x.ldexp(1));
        let rel = c.div(&c.sub(&s, &expected).abs(), &expected);
        assert!(rel.cmp_exact(&BigFloat::pow2(-150)) == Ordering::Less);
    }

    #[test]
    fn circle_norm_f64_basics() {
        assert_eq!(circle_norm_f64(2.25), 0.25);
        assert_eq!(circle_norm_f64(-0.4), 0.4);
        assert_eq!(circle_norm_f64(3.75), 0.25);
    }
}
