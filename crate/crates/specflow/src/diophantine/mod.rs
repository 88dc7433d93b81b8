//! Continued fractions and the Diophantine data attached to a rotation
//! number: convergent denominators (the return times of the rotation), circle
//! norms of their orbits, Ostrowski digit expansions, and the set of
//! near-resonant indices that survives coboundary reduction.

mod engine;
mod rotation;

pub use engine::{ConvergentEngine, ConvergentLevel, EngineOptions, StoredInt, TailInfo, MODW_BITS};
pub use rotation::{GoodReturn, RotationNumber};

use std::cmp::Ordering;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::bigfloat::{BigFloat, FloatCtx};

/// Marks an exact [`NormValue`].
pub const EXACT: i64 = i64::MIN;

/// A value with a tracked absolute error bound: the true quantity lies in
/// `[value - 2^err_exp, value + 2^err_exp]` (`err_exp == EXACT` means the
/// value is exact). Bounds are conservative by a couple of bits per
/// operation, never tight in the other direction.
#[derive(Clone, Debug)]
pub struct NormValue {
    pub value: BigFloat,
    pub err_exp: i64,
}

/// Bound on the rounding error of a context-rounded result.
fn round_err(v: &BigFloat, ctx: &FloatCtx) -> i64 {
    match v.mag_exp() {
        None => EXACT,
        Some(t) => t - ctx.prec as i64,
    }
}

/// Sum bound for a handful of error terms: max exponent plus headroom for
/// the count.
fn combine_errs(errs: &[i64]) -> i64 {
    let finite: Vec<i64> = errs.iter().copied().filter(|&e| e != EXACT).collect();
    if finite.is_empty() {
        return EXACT;
    }
    let top = finite.iter().copied().max().unwrap();
    let slack = 64 - (finite.len() as u64).leading_zeros() as i64;
    top.saturating_add(slack)
}

impl NormValue {
    pub fn exact(value: BigFloat) -> Self {
        NormValue { value, err_exp: EXACT }
    }

    pub fn new(value: BigFloat, err_exp: i64) -> Self {
        NormValue { value, err_exp }
    }

    pub fn is_exact(&self) -> bool {
        self.err_exp == EXACT
    }

    pub fn neg(&self) -> Self {
        NormValue { value: self.value.neg(), err_exp: self.err_exp }
    }

    pub fn abs(&self) -> Self {
        NormValue { value: self.value.abs(), err_exp: self.err_exp }
    }

    /// Exact lower endpoint of the enclosure.
    pub fn lo(&self) -> BigFloat {
        if self.is_exact() {
            self.value.clone()
        } else {
            self.value.sub_exact(&BigFloat::pow2(self.err_exp))
        }
    }

    pub fn hi(&self) -> BigFloat {
        if self.is_exact() {
            self.value.clone()
        } else {
            self.value.add_exact(&BigFloat::pow2(self.err_exp))
        }
    }

    pub fn add(ctx: &FloatCtx, a: &Self, b: &Self) -> Self {
        let value = ctx.add(&a.value, &b.value);
        let err = combine_errs(&[a.err_exp, b.err_exp, round_err(&value, ctx)]);
        NormValue { value, err_exp: err }
    }

    pub fn sub(ctx: &FloatCtx, a: &Self, b: &Self) -> Self {
        Self::add(ctx, a, &b.neg())
    }

    pub fn mul(ctx: &FloatCtx, a: &Self, b: &Self) -> Self {
        let value = ctx.mul(&a.value, &b.value);
        let ta = a.value.mag_exp();
        let tb = b.value.mag_exp();
        let mut errs = vec![round_err(&value, ctx)];
        if let (Some(t), e) = (ta, b.err_exp) {
            if e != EXACT {
                errs.push(t.saturating_add(e));
            }
        }
        if let (Some(t), e) = (tb, a.err_exp) {
            if e != EXACT {
                errs.push(t.saturating_add(e));
            }
        }
        if a.err_exp != EXACT && b.err_exp != EXACT {
            errs.push(a.err_exp.saturating_add(b.err_exp));
        }
        NormValue { value, err_exp: combine_errs(&errs) }
    }

    /// `a / b`; requires the divisor's enclosure to exclude zero.
    pub fn div(ctx: &FloatCtx, a: &Self, b: &Self) -> Self {
        let tb = b.value.mag_exp().expect("division by zero enclosure");
        if b.err_exp != EXACT {
            assert!(b.err_exp < tb - 1, "divisor enclosure reaches zero");
        }
        let value = ctx.div(&a.value, &b.value);
        // d(a/b) <= da/|b| + |a| db / b^2, with |b| >= 2^(tb-1).
        let mut errs = vec![round_err(&value, ctx)];
        if a.err_exp != EXACT {
            errs.push(a.err_exp.saturating_sub(tb - 1));
        }
        if b.err_exp != EXACT {
            if let Some(ta) = a.value.mag_exp() {
                errs.push(ta.saturating_add(b.err_exp).saturating_sub(2 * (tb - 1)));
            }
        }
        NormValue { value, err_exp: combine_errs(&errs) }
    }

    pub fn scale_biguint(&self, ctx: &FloatCtx, k: &BigUint) -> Self {
        Self::mul(ctx, self, &NormValue::exact(BigFloat::from_biguint(k)))
    }

    pub fn scale_i64(&self, ctx: &FloatCtx, k: i64) -> Self {
        Self::mul(ctx, self, &NormValue::exact(BigFloat::from_i64(k)))
    }

    /// Reduces the value modulo 1 into `[-1/2, 1/2]`. The error bound carries
    /// over; if it straddles a rounding boundary the result is still correct
    /// modulo 1, only the representative may sit on the other side.
    pub fn reduce_mod1(&self) -> Self {
        let value = self.value.frac_signed().expect("argument too large for exact reduction");
        NormValue { value, err_exp: self.err_exp }
    }

    /// Distance to the nearest integer. 1-Lipschitz, so the error bound
    /// transfers unchanged regardless of which branch the value falls on.
    pub fn circle_norm(&self, ctx: &FloatCtx) -> Self {
        let r = self.reduce_mod1().abs();
        let complement = ctx.sub(&BigFloat::one(), &r.value);
        let value = if r.value.cmp_exact(&complement) == Ordering::Greater { complement } else { r.value };
        NormValue { value, err_exp: combine_errs(&[r.err_exp, round_err(&BigFloat::one(), ctx)]) }
    }

    /// Interval comparison; `None` when the enclosures overlap and the order
    /// cannot be certified at this precision.
    pub fn cmp_sep(&self, other: &Self) -> Option<Ordering> {
        if self.is_exact() && other.is_exact() {
            return Some(self.value.cmp_exact(&other.value));
        }
        if self.hi().cmp_exact(&other.lo()) == Ordering::Less {
            return Some(Ordering::Less);
        }
        if self.lo().cmp_exact(&other.hi()) == Ordering::Greater {
            return Some(Ordering::Greater);
        }
        None
    }

    pub fn to_f64(&self) -> f64 {
        self.value.to_f64()
    }
}

/// How partial quotients continue past an explicit seed.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GrowthRule {
    /// `a_{n+1} = 2^{q_n}`: super-exponential, Liouville-type.
    Pow2Qn,
    /// `a_{n+1} = scale * n^index_power * q_n^q_power + add`.
    Power {
        scale: u64,
        q_power: u32,
        index_power: u32,
        #[serde(default)]
        add: u64,
    },
    /// `a_n = value` for every n (bounded type; value 1 gives the golden mean).
    Constant { value: u64 },
    /// Quotients cycle through the list (quadratic irrationals).
    Periodic { values: Vec<u64> },
}

/// Partial quotients of a number in (0, 1): `[0; a_1, a_2, ...]`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartialQuotients {
    /// An explicit finite prefix; everything past it is unknown, and derived
    /// quantities carry the matching interval uncertainty.
    Finite { data: Vec<u64> },
    /// Like `Finite`, but the quotients may exceed `u64`. Serialized as
    /// decimal strings.
    FiniteWide {
        #[serde(with = "decimal_seq")]
        data: Vec<BigUint>,
    },
    /// A seed prefix continued by a growth rule, giving a definite
    /// irrational.
    Rule {
        #[serde(default)]
        seed: Vec<u64>,
        rule: GrowthRule,
    },
}

mod decimal_seq {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(d)?;
        raw.iter()
            .map(|s| s.parse::<BigUint>().map_err(serde::de::Error::custom))
            .collect()
    }
}

impl PartialQuotients {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |msg: &str| Err(crate::Error::InvalidInput(msg.into()));
        match self {
            PartialQuotients::Finite { data } => {
                if data.is_empty() {
                    return bad("finite expansion needs at least one partial quotient");
                }
                if data.contains(&0) {
                    return bad("partial quotients must be positive");
                }
            }
            PartialQuotients::FiniteWide { data } => {
                if data.is_empty() {
                    return bad("finite expansion needs at least one partial quotient");
                }
                if data.iter().any(|a| num_traits::Zero::is_zero(a)) {
                    return bad("partial quotients must be positive");
                }
            }
            PartialQuotients::Rule { seed, rule } => {
                if seed.contains(&0) {
                    return bad("seed quotients must be positive");
                }
                match rule {
                    GrowthRule::Constant { value: 0 } => {
                        return bad("constant quotient must be positive");
                    }
                    GrowthRule::Periodic { values } => {
                        if values.is_empty() || values.contains(&0) {
                            return bad("periodic quotients must be a nonempty list of positive values");
                        }
                    }
                    GrowthRule::Power { scale, index_power, add, .. } => {
                        if *scale == 0 && *add == 0 {
                            return bad("power rule needs a positive scale or additive part");
                        }
                        if *index_power > 0 && seed.is_empty() && *add == 0 {
                            return bad("index-weighted rule yields zero at n = 0; provide a seed or an additive part");
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
