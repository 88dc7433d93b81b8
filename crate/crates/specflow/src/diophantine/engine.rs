//! Convergent materialization and enclosure arithmetic.
//!
//! Everything here is driven by one identity: with convergents `p_n/q_n` and
//! `theta_n = |q_n alpha - p_n|`,
//!
//! ```text
//! theta_n = 1 / (q_{n+1} + q_n * beta_{n+1}),   beta_{n+1} = [0; a_{n+2}, a_{n+3}, ...]
//! ```
//!
//! so a two-sided bracket on the tail value `beta` turns directly into a
//! two-sided bracket on `theta_n` without ever forming `q_n * alpha - p_n`
//! (which cancels catastrophically). Integers above a retention threshold are
//! kept only as summaries (bit length, low bits, rounded float): enough for
//! every downstream consumer, and the difference between a 105 MB integer and
//! a 300-byte record.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{combine_errs, round_err, GrowthRule, NormValue, PartialQuotients};
use crate::bigfloat::{BigFloat, FloatCtx};
use crate::{Error, Result};

/// Low-bit residues kept for summarized integers; wide enough for exact
/// sampling (256 random bits) plus phase arithmetic headroom.
pub const MODW_BITS: u64 = 640;

/// Precision of the rounded float kept for summarized integers.
const SUMMARY_PREC: u32 = 1024;

/// How many explicit tail quotients feed a beta bracket before the remainder
/// falls back to the full (0, 1) interval.
const TAIL_DEPTH: usize = 64;

/// An integer either held in full or reduced to what downstream consumers
/// need: its bit length, its residue mod `2^MODW_BITS`, and a rounded float.
#[derive(Clone, Debug)]
pub enum StoredInt {
    Full(BigUint),
    Summary { bits: u64, modw: BigUint, float: BigFloat },
}

impl StoredInt {
    pub(crate) fn new(v: BigUint, retain_bits: u64) -> Self {
        if v.bits() <= retain_bits {
            StoredInt::Full(v)
        } else {
            let bits = v.bits();
            let mask = (BigUint::one() << MODW_BITS) - BigUint::one();
            let modw = &v & &mask;
            let sctx = FloatCtx::new(SUMMARY_PREC);
            let float = sctx.mul(&BigFloat::from_biguint_owned(v), &BigFloat::one());
            StoredInt::Summary { bits, modw, float }
        }
    }

    pub fn bits(&self) -> u64 {
        match self {
            StoredInt::Full(v) => v.bits(),
            StoredInt::Summary { bits, .. } => *bits,
        }
    }

    pub fn full(&self) -> Option<&BigUint> {
        match self {
            StoredInt::Full(v) => Some(v),
            StoredInt::Summary { .. } => None,
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.full().and_then(|v| v.to_u64())
    }

    /// Residue mod `2^MODW_BITS`.
    pub fn modw(&self) -> BigUint {
        match self {
            StoredInt::Full(v) => {
                let mask = (BigUint::one() << MODW_BITS) - BigUint::one();
                v & &mask
            }
            StoredInt::Summary { modw, .. } => modw.clone(),
        }
    }

    /// Value with error bound (exact for full integers).
    pub fn as_norm(&self) -> NormValue {
        match self {
            StoredInt::Full(v) => NormValue::exact(BigFloat::from_biguint(v)),
            StoredInt::Summary { bits, float, .. } => {
                NormValue::new(float.clone(), *bits as i64 - SUMMARY_PREC as i64)
            }
        }
    }

    pub fn log2(&self) -> f64 {
        match self {
            StoredInt::Full(v) => biguint_log2(v),
            StoredInt::Summary { float, .. } => float.log2_f64(),
        }
    }

    pub fn to_decimal_capped(&self, max_digits: usize) -> String {
        match self {
            StoredInt::Full(v) if v.bits() as usize <= max_digits * 4 => v.to_string(),
            _ => format!("~2^{:.2}", self.log2()),
        }
    }
}

pub(crate) fn biguint_log2(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let take = bits.min(53);
    let head: BigUint = v >> (bits - take);
    let head = head.to_u64().unwrap_or(1) as f64;
    (bits - take) as f64 + head.log2()
}

/// One convergent level: quotient `a_n`, numerator `p_n`, denominator `q_n`.
/// `b = ceil(q_{n+1} / (4 q_n))` is the inflation weight used by Birkhoff
/// plans; it is captured while both full denominators are in memory and is
/// `None` at the deepest level.
#[derive(Clone, Debug)]
pub struct ConvergentLevel {
    pub a: StoredInt,
    pub p: StoredInt,
    pub q: StoredInt,
    pub b: Option<StoredInt>,
}

/// What is known past the deepest materialized level.
#[derive(Clone, Debug)]
pub enum TailInfo {
    /// The next quotient is known (possibly only as a summary).
    NextQuotient(StoredInt),
    /// The next quotient exceeds the materialization budget; `bits_log2` is
    /// the log2 of a lower bound on its bit count.
    Unmaterialized { bits_log2: f64 },
    /// The expansion data ended here; nothing is known about a continuation.
    EndOfData,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default, deny_unknown_fields)]
pub struct EngineOptions {
    /// Hard cap on the bit length of any materialized integer.
    pub budget_bits: u64,
    /// Maximum number of partial quotients to consume.
    pub max_levels: usize,
    /// Integers above this bit length are stored as summaries.
    pub retain_bits: u64,
    /// Working precision for derived values.
    pub precision_bits: u32,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            budget_bits: 1 << 30,
            max_levels: 64,
            retain_bits: 1 << 24,
            precision_bits: 384,
        }
    }
}

enum QuotientStep {
    Value(BigUint),
    TooBig { bits_log2: f64 },
    End,
}

fn next_quotient(desc: &PartialQuotients, k: usize, q_prev: &BigUint, budget: u64) -> QuotientStep {
    match desc {
        PartialQuotients::Finite { data } => {
            if k <= data.len() {
                QuotientStep::Value(BigUint::from(data[k - 1]))
            } else {
                QuotientStep::End
            }
        }
        PartialQuotients::FiniteWide { data } => {
            if k <= data.len() {
                QuotientStep::Value(data[k - 1].clone())
            } else {
                QuotientStep::End
            }
        }
        PartialQuotients::Rule { seed, rule } => {
            if k <= seed.len() {
                return QuotientStep::Value(BigUint::from(seed[k - 1]));
            }
            rule_quotient(rule, k - 1, q_prev, budget)
        }
    }
}

/// `a_{k}` from the rule, fed by the previous level `n = k-1` and `q_n`.
fn rule_quotient(rule: &GrowthRule, n: usize, qn: &BigUint, budget: u64) -> QuotientStep {
    match rule {
        GrowthRule::Pow2Qn => match qn.to_u64() {
            Some(sh) if sh < budget => QuotientStep::Value(BigUint::one() << sh),
            Some(sh) => QuotientStep::TooBig { bits_log2: (sh as f64 + 1.0).log2() },
            None => QuotientStep::TooBig { bits_log2: biguint_log2(qn) },
        },
        GrowthRule::Power { scale, q_power, index_power, add } => {
            let est = (*scale as f64).max(1.0).log2()
                + *index_power as f64 * (n.max(1) as f64).log2()
                + *q_power as f64 * biguint_log2(qn).max(0.0)
                + 2.0;
            if est > budget as f64 {
                return QuotientStep::TooBig { bits_log2: est.log2() };
            }
            let mut a = BigUint::from(*scale)
                * BigUint::from(n as u64).pow(*index_power)
                * qn.pow(*q_power);
            a += BigUint::from(*add);
            QuotientStep::Value(a)
        }
        GrowthRule::Constant { value } => QuotientStep::Value(BigUint::from(*value)),
        GrowthRule::Periodic { values } => QuotientStep::Value(BigUint::from(values[n % values.len()])),
    }
}

pub struct ConvergentEngine {
    opts: EngineOptions,
    levels: Vec<ConvergentLevel>,
    tail: TailInfo,
    thetas: Vec<NormValue>,
    alpha: NormValue,
}

impl ConvergentEngine {
    pub fn new(desc: &PartialQuotients, opts: EngineOptions) -> Result<Self> {
        desc.validate()?;
        let retain = opts.retain_bits;
        let mut levels = vec![ConvergentLevel {
            a: StoredInt::new(BigUint::zero(), retain),
            p: StoredInt::new(BigUint::zero(), retain),
            q: StoredInt::new(BigUint::one(), retain),
            b: None,
        }];
        // (p_{-1}, q_{-1}) and (p_0, q_0) seed the recurrence.
        let mut p_prev2 = BigUint::one();
        let mut q_prev2 = BigUint::zero();
        let mut p_prev = BigUint::zero();
        let mut q_prev = BigUint::one();
        let tail;
        let mut k = 1usize;
        loop {
            if k > opts.max_levels {
                // Peek one quotient past the cap: it tightens the bracket of
                // the deepest computable theta.
                tail = match next_quotient(desc, k, &q_prev, opts.budget_bits) {
                    QuotientStep::Value(a) => TailInfo::NextQuotient(StoredInt::new(a, retain)),
                    QuotientStep::TooBig { bits_log2 } => TailInfo::Unmaterialized { bits_log2 },
                    QuotientStep::End => TailInfo::EndOfData,
                };
                break;
            }
            match next_quotient(desc, k, &q_prev, opts.budget_bits) {
                QuotientStep::End => {
                    tail = TailInfo::EndOfData;
                    break;
                }
                QuotientStep::TooBig { bits_log2 } => {
                    tail = TailInfo::Unmaterialized { bits_log2 };
                    break;
                }
                QuotientStep::Value(a) => {
                    if a.is_zero() {
                        return Err(Error::InvalidInput(format!(
                            "partial quotient a_{k} evaluates to zero"
                        )));
                    }
                    if a.bits() + q_prev.bits() + 1 > opts.budget_bits {
                        tail = TailInfo::NextQuotient(StoredInt::new(a, retain));
                        break;
                    }
                    let p = &a * &p_prev + &p_prev2;
                    let q = &a * &q_prev + &q_prev2;
                    let den = &q_prev << 2;
                    let b = (&q + &den - BigUint::one()) / &den;
                    levels.last_mut().unwrap().b = Some(StoredInt::new(b, retain));
                    levels.push(ConvergentLevel {
                        a: StoredInt::new(a, retain),
                        p: StoredInt::new(p.clone(), retain),
                        q: StoredInt::new(q.clone(), retain),
                        b: None,
                    });
                    p_prev2 = std::mem::replace(&mut p_prev, p);
                    q_prev2 = std::mem::replace(&mut q_prev, q);
                    k += 1;
                }
            }
        }
        if levels.len() < 2 {
            return Err(Error::QuotientsExhausted {
                level: 1,
                reason: "no partial quotient fits the materialization budget".into(),
            });
        }
        let ctx = FloatCtx::new(opts.precision_bits + 32);
        let alpha = alpha_enclosure(&ctx, &p_prev, &q_prev, &p_prev2, &q_prev2);
        drop(p_prev);
        drop(q_prev);
        drop(p_prev2);
        drop(q_prev2);
        let thetas = (0..levels.len() - 1)
            .map(|n| theta_enclosure(&levels, &tail, n, &ctx))
            .collect();
        Ok(ConvergentEngine { opts, levels, tail, thetas, alpha })
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    /// Materialized convergent levels (index 0 is the trivial `0/1`).
    pub fn levels(&self) -> &[ConvergentLevel] {
        &self.levels
    }

    pub fn tail(&self) -> &TailInfo {
        &self.tail
    }

    /// Enclosure of the rotation number itself.
    pub fn alpha(&self) -> &NormValue {
        &self.alpha
    }

    /// `theta_n` for `n` up to [`Self::theta_levels`].
    pub fn theta(&self, n: usize) -> Result<&NormValue> {
        self.thetas.get(n).ok_or_else(|| Error::QuotientsExhausted {
            level: n,
            reason: format!(
                "theta_{n} needs convergent level {} which is beyond the materialization horizon",
                n + 1
            ),
        })
    }

    pub fn theta_levels(&self) -> usize {
        self.thetas.len()
    }

    /// Inflation weight `ceil(q_{n+1} / (4 q_n))`, available exactly where
    /// `theta_n` is.
    pub fn inflation_weight(&self, n: usize) -> Result<&StoredInt> {
        self.levels.get(n).and_then(|l| l.b.as_ref()).ok_or_else(|| Error::QuotientsExhausted {
            level: n,
            reason: format!("inflation weight at level {n} needs level {} materialized", n + 1),
        })
    }

    /// Signed residue of `w * q_n * alpha` modulo 1 via the identity
    /// `w q_n alpha = w p_n + (-1)^n w theta_n`: no digit expansion, so `w`
    /// may be astronomically large (even summarized) as long as `w theta_n`
    /// stays moderate.
    pub fn srez_scaled(&self, n: usize, w: &StoredInt) -> Result<NormValue> {
        let ctx = self.work_ctx();
        let theta = self.theta(n)?;
        let term = match w.full() {
            Some(v) => theta.scale_biguint(&ctx, v),
            None => NormValue::mul(&ctx, theta, &w.as_norm()),
        };
        let signed = if n % 2 == 0 { term } else { term.neg() };
        Ok(signed.reduce_mod1())
    }

    pub(crate) fn work_ctx(&self) -> FloatCtx {
        FloatCtx::new(self.opts.precision_bits + 32)
    }

    /// Is `m < q_n`? Errors when the comparison cannot be decided against a
    /// summarized denominator.
    fn lt_q(&self, m: &BigUint, n: usize) -> Result<bool> {
        match &self.levels[n].q {
            StoredInt::Full(q) => Ok(m < q),
            StoredInt::Summary { bits, .. } => {
                if m.bits() < *bits {
                    Ok(true)
                } else {
                    Err(Error::QuotientsExhausted {
                        level: n,
                        reason: "index too large to compare against a summarized convergent".into(),
                    })
                }
            }
        }
    }

    /// Greedy digits of `m` over the denominators: `m = sum b_j q_j` with
    /// `0 <= b_j <= a_{j+1}`, returned as nonzero `(level, digit)` pairs in
    /// descending level order. Requires `m < q_N`.
    pub fn ostrowski(&self, m: &BigUint) -> Result<Vec<(usize, BigUint)>> {
        if m.is_zero() {
            return Ok(vec![]);
        }
        let deepest = self.levels.len() - 1;
        if !self.lt_q(m, deepest)? {
            return Err(Error::QuotientsExhausted {
                level: deepest,
                reason: "index at or beyond the deepest materialized denominator".into(),
            });
        }
        let mut rem = m.clone();
        let mut out = Vec::new();
        for j in (0..deepest).rev() {
            if rem.is_zero() {
                break;
            }
            match &self.levels[j].q {
                StoredInt::Full(qj) => {
                    if &rem >= qj {
                        let (b, r) = num_integer::Integer::div_rem(&rem, qj);
                        out.push((j, b));
                        rem = r;
                    }
                }
                StoredInt::Summary { bits, .. } => {
                    if rem.bits() >= *bits {
                        return Err(Error::QuotientsExhausted {
                            level: j,
                            reason: "digit extraction hit a summarized denominator".into(),
                        });
                    }
                }
            }
        }
        debug_assert!(rem.is_zero(), "q_0 = 1 must absorb the remainder");
        Ok(out)
    }

    /// Signed residue of `m * alpha` modulo 1, in `[-1/2, 1/2]`, assembled
    /// from the digit expansion: `m alpha = sum b_j (p_j + (-1)^j theta_j)`,
    /// and the signed theta sum telescopes below 2 in absolute value.
    pub fn srez(&self, m: &BigInt) -> Result<NormValue> {
        let mag = m.magnitude();
        if mag.is_zero() {
            return Ok(NormValue::exact(BigFloat::zero()));
        }
        let digits = self.ostrowski(mag)?;
        let ctx = self.work_ctx();
        let mut acc = NormValue::exact(BigFloat::zero());
        for (j, b) in &digits {
            let theta = self.theta(*j)?;
            let term = theta.scale_biguint(&ctx, b);
            acc = if j % 2 == 0 {
                NormValue::add(&ctx, &acc, &term)
            } else {
                NormValue::sub(&ctx, &acc, &term)
            };
        }
        let mut r = acc.reduce_mod1();
        if m.sign() == Sign::Minus {
            r = r.neg();
        }
        Ok(r)
    }

    /// Membership in `{m >= 0 : 2 m^2 dist(m alpha, Z) <= 1}`, the index set
    /// that survives coboundary reduction.
    pub fn in_resonant_set(&self, m: &BigUint) -> Result<bool> {
        if m.is_zero() || m.is_one() {
            // m = 1 always qualifies: dist(alpha, Z) < 1/2 strictly.
            return Ok(true);
        }
        let ctx = self.work_ctx();
        let r = self.srez(&BigInt::from_biguint(Sign::Plus, m.clone()))?;
        let norm = r.circle_norm(&ctx);
        let two_m2 = BigUint::from(2u32) * m * m;
        let lhs = norm.scale_biguint(&ctx, &two_m2);
        match lhs.cmp_sep(&NormValue::exact(BigFloat::one())) {
            Some(Ordering::Less) | Some(Ordering::Equal) => Ok(true),
            Some(Ordering::Greater) => Ok(false),
            None => Err(Error::PrecisionExhausted {
                context: format!("resonance test for m = {m} is borderline"),
                prec: self.opts.precision_bits,
            }),
        }
    }

    /// All members of the resonant set up to `max`, by structural
    /// enumeration: every member above 1 is a multiple `l q_n` of a
    /// denominator, and along one level the defining quantity
    /// `2 l^3 q_n^2 theta_n` is increasing, so each level is scanned until
    /// its first failure.
    pub fn resonant_set(&self, max: &BigUint) -> Result<Vec<BigUint>> {
        let deepest = self.levels.len() - 1;
        if !self.lt_q(max, deepest)? {
            return Err(Error::QuotientsExhausted {
                level: deepest,
                reason: "resonant-set horizon reaches the deepest materialized denominator".into(),
            });
        }
        let ctx = self.work_ctx();
        let one = NormValue::exact(BigFloat::one());
        let mut out = std::collections::BTreeSet::new();
        out.insert(BigUint::zero());
        if !max.is_zero() {
            out.insert(BigUint::one());
        }
        for n in 0..self.thetas.len() {
            let qn = match self.levels[n].q.full() {
                Some(q) => q.clone(),
                None => break,
            };
            if &qn > max {
                break;
            }
            let theta = &self.thetas[n];
            let qn2 = &qn * &qn;
            for l in 1u64.. {
                let lb = BigUint::from(l);
                let m = &lb * &qn;
                if &m > max {
                    break;
                }
                let coeff = BigUint::from(2u32) * &lb * &lb * &lb * &qn2;
                let lhs = theta.scale_biguint(&ctx, &coeff);
                match lhs.cmp_sep(&one) {
                    Some(Ordering::Less) | Some(Ordering::Equal) => {
                        out.insert(m);
                    }
                    Some(Ordering::Greater) => break,
                    None => {
                        return Err(Error::PrecisionExhausted {
                            context: format!("resonance scan at level {n}, multiple {l}"),
                            prec: self.opts.precision_bits,
                        })
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}

fn nudge_up(x: BigFloat, prec: u32) -> BigFloat {
    match x.mag_exp() {
        None => x,
        Some(t) => x.add_exact(&BigFloat::pow2(t - prec as i64 + 2)),
    }
}

fn nudge_down(x: BigFloat, prec: u32) -> BigFloat {
    match x.mag_exp() {
        None => x,
        Some(t) => x.sub_exact(&BigFloat::pow2(t - prec as i64 + 2)),
    }
}

fn clamp_nonneg(x: BigFloat) -> BigFloat {
    if x.is_negative() {
        BigFloat::zero()
    } else {
        x
    }
}

/// Upper bound `2^e` on a tail value `beta < 2^{-(B-1)}` when only
/// `log2(B) = bits_log2` of the next quotient is known.
fn tiny_tail_exp(bits_log2: f64) -> i64 {
    if bits_log2 >= 61.0 {
        -(1i64 << 61)
    } else {
        let b = bits_log2.exp2().floor() as i64;
        1 - b.max(2)
    }
}

/// Two-sided bracket of `beta = [0; a_{j0}, a_{j0+1}, ...]`.
fn beta_interval(
    levels: &[ConvergentLevel],
    tail: &TailInfo,
    j0: usize,
    ctx: &FloatCtx,
) -> (BigFloat, BigFloat) {
    let deepest = levels.len() - 1;
    let mut quots: Vec<(BigFloat, BigFloat)> = Vec::new();
    let mut j = j0;
    while j <= deepest && quots.len() < TAIL_DEPTH {
        let nv = levels[j].a.as_norm();
        quots.push((nv.lo(), nv.hi()));
        j += 1;
    }
    let truncated_by_depth = j <= deepest;
    let (mut lo, mut hi) = if truncated_by_depth {
        (BigFloat::zero(), BigFloat::one())
    } else {
        match tail {
            TailInfo::NextQuotient(a) => {
                if quots.len() < TAIL_DEPTH {
                    let nv = a.as_norm();
                    quots.push((nv.lo(), nv.hi()));
                }
                (BigFloat::zero(), BigFloat::one())
            }
            TailInfo::Unmaterialized { bits_log2 } => {
                (BigFloat::zero(), BigFloat::pow2(tiny_tail_exp(*bits_log2)))
            }
            TailInfo::EndOfData => (BigFloat::zero(), BigFloat::one()),
        }
    };
    let p = ctx.prec;
    for (alo, ahi) in quots.iter().rev() {
        let dhi = nudge_up(ctx.add(ahi, &hi), p);
        let dlo = nudge_down(ctx.add(alo, &lo), p);
        lo = clamp_nonneg(nudge_down(ctx.div(&BigFloat::one(), &dhi), p));
        hi = nudge_up(ctx.div(&BigFloat::one(), &dlo), p);
    }
    (lo, hi)
}

fn theta_enclosure(
    levels: &[ConvergentLevel],
    tail: &TailInfo,
    n: usize,
    ctx: &FloatCtx,
) -> NormValue {
    let p = ctx.prec;
    let (blo, bhi) = beta_interval(levels, tail, n + 2, ctx);
    let qn = levels[n].q.as_norm();
    let qn1 = levels[n + 1].q.as_norm();
    let mlo = clamp_nonneg(nudge_down(ctx.mul(&qn.lo(), &blo), p));
    let mhi = nudge_up(ctx.mul(&qn.hi(), &bhi), p);
    let dlo = nudge_down(ctx.add(&qn1.lo(), &mlo), p);
    let dhi = nudge_up(ctx.add(&qn1.hi(), &mhi), p);
    let tlo = nudge_down(ctx.div(&BigFloat::one(), &dhi), p);
    let thi = nudge_up(ctx.div(&BigFloat::one(), &dlo), p);
    enclosure_from_bracket(ctx, tlo, thi)
}

fn alpha_enclosure(
    ctx: &FloatCtx,
    p_n: &BigUint,
    q_n: &BigUint,
    p_n1: &BigUint,
    q_n1: &BigUint,
) -> NormValue {
    // alpha lies strictly between p_N/q_N and (p_N + p_{N-1})/(q_N + q_{N-1}).
    let p = ctx.prec;
    let e1 = ctx.div(&BigFloat::from_biguint(p_n), &BigFloat::from_biguint(q_n));
    let e2 = ctx.div(
        &BigFloat::from_biguint(&(p_n + p_n1)),
        &BigFloat::from_biguint(&(q_n + q_n1)),
    );
    let (lo, hi) = if e1.cmp_exact(&e2) == Ordering::Less { (e1, e2) } else { (e2, e1) };
    enclosure_from_bracket(ctx, nudge_down(lo, p), nudge_up(hi, p))
}

fn enclosure_from_bracket(ctx: &FloatCtx, lo: BigFloat, hi: BigFloat) -> NormValue {
    let mid = ctx.add(&lo, &hi).ldexp(-1);
    // Radius: half the bracket width, padded by the rounding of mid itself.
    let w = ctx.sub(&hi, &lo);
    let err = match w.mag_exp() {
        None => round_err(&mid, ctx),
        Some(e) => combine_errs(&[e - 1, round_err(&mid, ctx)]),
    };
    NormValue::new(mid, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine(desc: PartialQuotients) -> ConvergentEngine {
        ConvergentEngine::new(&desc, EngineOptions::default()).unwrap()
    }

    fn qs(e: &ConvergentEngine) -> Vec<u64> {
        e.levels().iter().filter_map(|l| l.q.to_u64()).collect()
    }

    #[test]
    fn golden_convergents() {
        let e = engine(PartialQuotients::Finite { data: vec![1; 6] });
        assert_eq!(qs(&e), vec![1, 1, 2, 3, 5, 8, 13]);
        let ps: Vec<u64> = e.levels().iter().filter_map(|l| l.p.to_u64()).collect();
        assert_eq!(ps, vec![0, 1, 1, 2, 3, 5, 8]);
    }

    #[test]
    fn silver_convergents() {
        let e = engine(PartialQuotients::Finite { data: vec![2; 4] });
        assert_eq!(qs(&e), vec![1, 2, 5, 12, 29]);
    }

    #[test]
    fn theta_brackets_contain_truth_golden() {
        // alpha = (sqrt(5)-1)/2; theta_n = alpha^{n+1} exactly.
        let e = engine(PartialQuotients::Rule { seed: vec![], rule: GrowthRule::Constant { value: 1 } });
        let ctx = FloatCtx::new(700);
        let s = 650u32;
        let five = BigUint::from(5u32) << (2 * s);
        let root = num_integer::Roots::sqrt(&five);
        let alpha = ctx.sub(
            &ctx.div(&BigFloat::from_biguint(&root), &BigFloat::pow2(s as i64)),
            &BigFloat::one(),
        );
        let alpha = alpha.ldexp(-1);
        let mut truth = alpha.clone();
        for n in 0..e.theta_levels() {
            let t = e.theta(n).unwrap();
            assert!(
                t.lo().cmp_exact(&truth) == Ordering::Less
                    && t.hi().cmp_exact(&truth) == Ordering::Greater,
                "theta_{n} enclosure misses truth: {:?} vs {:?}",
                t,
                truth
            );
            truth = ctx.mul(&truth, &alpha);
        }
        // Interior levels must be tight: the bracket narrows like the square
        // of the tail convergents, about 1.39 bits per available quotient.
        for n in 0..20 {
            let t = e.theta(n).unwrap();
            let rel = t.err_exp - t.value.mag_exp().unwrap();
            let budget = -(2 * (62 - n as i64) * 694 / 1000) + 6;
            assert!(rel < budget.min(-50), "theta_{n} too loose: rel err 2^{rel}");
        }
    }

    #[test]
    fn theta_satisfies_recurrence_and_lemma_bounds() {
        for desc in [
            PartialQuotients::Rule { seed: vec![3, 1], rule: GrowthRule::Periodic { values: vec![1, 2, 5] } },
            PartialQuotients::Rule { seed: vec![], rule: GrowthRule::Constant { value: 2 } },
            PartialQuotients::Finite { data: vec![4, 1, 1, 7, 2, 1, 1, 1, 3, 9, 1, 2] },
        ] {
            let e = engine(desc);
            let ctx = FloatCtx::new(420);
            for n in 1..e.theta_levels().saturating_sub(1) {
                // theta_{n+1} = theta_{n-1} - a_{n+1} theta_n
                let a = e.levels()[n + 1].a.as_norm();
                let rhs = NormValue::sub(
                    &ctx,
                    e.theta(n - 1).unwrap(),
                    &NormValue::mul(&ctx, &a, e.theta(n).unwrap()),
                );
                let lhs = e.theta(n + 1).unwrap();
                assert_ne!(lhs.cmp_sep(&rhs), Some(Ordering::Less), "recurrence at {n}");
                assert_ne!(lhs.cmp_sep(&rhs), Some(Ordering::Greater), "recurrence at {n}");
                // 1/(q_n + q_{n+1}) < theta_n < 1/q_{n+1}
                let qn = e.levels()[n].q.as_norm();
                let qn1 = e.levels()[n + 1].q.as_norm();
                let upper = NormValue::div(&ctx, &NormValue::exact(BigFloat::one()), &qn1);
                let lower = NormValue::div(
                    &ctx,
                    &NormValue::exact(BigFloat::one()),
                    &NormValue::add(&ctx, &qn, &qn1),
                );
                // The bounds must never be contradicted; strict separation is
                // only guaranteed where several tail quotients feed the
                // bracket (near the horizon the enclosure IS the lemma
                // interval, so the comparison is legitimately undecided).
                assert_ne!(e.theta(n).unwrap().cmp_sep(&upper), Some(Ordering::Greater));
                assert_ne!(e.theta(n).unwrap().cmp_sep(&lower), Some(Ordering::Less));
                if n + 5 <= e.theta_levels() {
                    assert_eq!(e.theta(n).unwrap().cmp_sep(&upper), Some(Ordering::Less), "upper at {n}");
                    assert_eq!(e.theta(n).unwrap().cmp_sep(&lower), Some(Ordering::Greater), "lower at {n}");
                }
            }
        }
    }

    #[test]
    fn unmaterialized_tail_keeps_theta_sound() {
        // Budget cuts the doubling rule off early; theta at the deepest
        // computable level must still enclose 1/q_{n+1} with a tiny beta term.
        let desc = PartialQuotients::Rule { seed: vec![1], rule: GrowthRule::Pow2Qn };
        let opts = EngineOptions { budget_bits: 1 << 20, ..Default::default() };
        let e = ConvergentEngine::new(&desc, opts).unwrap();
        // Quotients 1, 2, 8, 2^25; the next one (2^838860803) blows the budget.
        assert_eq!(qs(&e), vec![1, 1, 3, 25, 838_860_803]);
        match e.tail() {
            TailInfo::Unmaterialized { bits_log2 } => {
                assert!((bits_log2 - 838_860_804f64.log2()).abs() < 1e-6, "bits_log2 {bits_log2}")
            }
            t => panic!("expected unmaterialized tail, got {t:?}"),
        }
        assert_eq!(e.theta_levels(), 4);
        let t3 = e.theta(3).unwrap();
        assert!((t3.to_f64() * 838_860_803.0 - 1.0).abs() < 1e-7, "theta_3 = {}", t3.to_f64());
        assert!(t3.err_exp < -300, "tail bound should be tiny, err 2^{}", t3.err_exp);
        let t2 = e.theta(2).unwrap();
        assert!((t2.to_f64() * 25.0 - 1.0).abs() < 1e-5, "theta_2 = {}", t2.to_f64());
        assert!(e.theta(4).is_err());
    }

    #[test]
    fn ostrowski_digits_reconstruct_and_stay_canonical() {
        let e = engine(PartialQuotients::Rule { seed: vec![2, 1, 4], rule: GrowthRule::Periodic { values: vec![3, 1] } });
        for m in 1u64..600 {
            let mb = BigUint::from(m);
            let digits = e.ostrowski(&mb).unwrap();
            let mut sum = BigUint::zero();
            for (j, b) in &digits {
                let qj = e.levels()[*j].q.full().unwrap();
                assert!(b <= e.levels()[*j + 1].a.full().unwrap(), "digit bound at level {j}");
                sum += b * qj;
            }
            assert_eq!(sum, mb);
        }
    }

    #[test]
    fn srez_matches_direct_multiplication() {
        let e = engine(PartialQuotients::Rule { seed: vec![], rule: GrowthRule::Constant { value: 2 } });
        // alpha = sqrt(2) - 1.
        let ctx = FloatCtx::new(700);
        let s = 650u32;
        let two = BigUint::from(2u32) << (2 * s);
        let root = num_integer::Roots::sqrt(&two);
        let alpha = ctx.sub(
            &ctx.div(&BigFloat::from_biguint(&root), &BigFloat::pow2(s as i64)),
            &BigFloat::one(),
        );
        for m in [1i64, 2, 5, 29, 169, 12345, -7, -408] {
            let r = e.srez(&BigInt::from(m)).unwrap();
            let direct = ctx.mul(&alpha, &BigFloat::from_i64(m)).frac_signed().unwrap();
            let diff = ctx.sub(&r.value, &direct).abs();
            assert!(
                diff.cmp_exact(&BigFloat::pow2(r.err_exp.max(-640) + 2)) == Ordering::Less,
                "srez({m}) = {:?} vs direct {:?}",
                r,
                direct
            );
        }
    }

    #[test]
    fn resonant_set_matches_exact_rational_scan() {
        // Oracle: test 2 m^2 dist(m p_D/q_D, Z) <= 1 in exact integers, with
        // the deepest convergent standing in for alpha; the margin between
        // the two is far below the separation of any m this small.
        for desc in [
            PartialQuotients::Rule { seed: vec![], rule: GrowthRule::Constant { value: 1 } },
            PartialQuotients::Rule { seed: vec![], rule: GrowthRule::Constant { value: 2 } },
            PartialQuotients::Rule { seed: vec![1, 3], rule: GrowthRule::Periodic { values: vec![2, 1, 1, 6] } },
            PartialQuotients::Rule { seed: vec![12], rule: GrowthRule::Periodic { values: vec![1, 1, 20] } },
        ] {
            let e = engine(desc.clone());
            let deepest = e.levels().len() - 1;
            let pd = e.levels()[deepest].p.full().unwrap().clone();
            let qd = e.levels()[deepest].q.full().unwrap().clone();
            let max = 30_000u64;
            let got = e.resonant_set(&BigUint::from(max)).unwrap();
            let mut expect = Vec::new();
            for m in 0..=max {
                let mb = BigUint::from(m);
                let r = (&mb * &pd) % &qd;
                let comp = &qd - &r;
                let dist = if r < comp { r } else { comp };
                let margin = BigUint::from(2u32) * &mb * &mb * &dist;
                // Oracle validity: the decision tests 2 m^2 dist against q_D,
                // while the true rotation number sits within 1/(q_D q_{D+1})
                // of p_D/q_D. The verdict transfers as long as the integer
                // separation |2 m^2 dist - q_D| exceeds 2 m^3 / q_{D+1}, and
                // q_{D+1} > q_D makes sep * q_D > 2 m^3 sufficient.
                let sep = if margin > qd { &margin - &qd } else { &qd - &margin };
                assert!(
                    &sep * &qd > BigUint::from(2u32) * &mb * &mb * &mb,
                    "oracle margin too thin at m = {m}; deepen the expansion"
                );
                if margin <= qd {
                    expect.push(mb);
                }
            }
            assert_eq!(got, expect, "resonant set mismatch for {desc:?}");
        }
    }

    #[test]
    fn in_resonant_set_agrees_with_enumeration() {
        let e = engine(PartialQuotients::Rule { seed: vec![], rule: GrowthRule::Constant { value: 2 } });
        let set = e.resonant_set(&BigUint::from(5000u32)).unwrap();
        for m in 0u64..=5000 {
            let mb = BigUint::from(m);
            assert_eq!(e.in_resonant_set(&mb).unwrap(), set.contains(&mb), "m = {m}");
        }
    }

    #[test]
    fn inflation_weights_round_up_quarter_ratios() {
        let e = engine(PartialQuotients::Rule { seed: vec![1], rule: GrowthRule::Pow2Qn });
        // q: 1, 1, 3, 25, 838860803, ...
        let b = |n: usize| e.inflation_weight(n).unwrap();
        assert_eq!(b(1).to_u64(), Some(1)); // ceil(3/4)
        assert_eq!(b(2).to_u64(), Some(3)); // ceil(25/12)
        assert_eq!(b(3).to_u64(), Some(8388609)); // ceil(838860803/100)
        // b_4 = 2^(q_4 - 2) + 1: a huge summary whose low word is exactly 1.
        let b4 = b(4);
        assert_eq!(b4.modw(), BigUint::one());
        assert!((b4.log2() - 838860801.0).abs() < 1.0, "log2 {}", b4.log2());
        assert!(e.inflation_weight(5).is_err());
        // ||b_4 q_4 alpha|| = b_4 theta_4 lands near 1/(4 q_4), no wrap.
        let r = e.srez_scaled(4, b4).unwrap();
        let expect = 0.25 / 838860803.0;
        let got = r.to_f64();
        assert!(got > 0.0 && (got - expect).abs() < expect * 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn wide_quotients_parse_and_round_trip() {
        let big: BigUint = "123456789012345678901234567890123".parse().unwrap();
        let desc = PartialQuotients::FiniteWide { data: vec![BigUint::from(2u32), big.clone()] };
        let s = serde_json::to_string(&desc).unwrap();
        assert!(s.contains("123456789012345678901234567890123"), "{s}");
        let back: PartialQuotients = serde_json::from_str(&s).unwrap();
        assert_eq!(back, desc);
        let e = engine(desc);
        // q_2 = a_2 q_1 + q_0 = big * 2 + 1.
        let want = &big * 2u32 + BigUint::one();
        assert_eq!(e.levels()[2].q.full(), Some(&want));
    }

    #[test]
    fn finite_expansion_alpha_interval_is_honest() {
        let e = engine(PartialQuotients::Finite { data: vec![1, 2, 1, 3] });
        // q: 1,1,3,4,15; alpha between 11/15 and (11+3)/(15+4).
        assert_eq!(qs(&e), vec![1, 1, 3, 4, 15]);
        let a = e.alpha();
        let lo = 11.0 / 15.0;
        let hi = 14.0 / 19.0;
        let (lo, hi) = if lo < hi { (lo, hi) } else { (hi, lo) };
        assert!(a.lo().to_f64() <= lo + 1e-12 && a.hi().to_f64() >= hi - 1e-12);
        assert!(matches!(e.tail(), TailInfo::EndOfData));
    }
}
