//! Rotation kernels K(m, f) = (e(m f alpha) - 1) / (e(f alpha) - 1), the
//! per-mode multipliers that turn Fourier coefficients of a roof into
//! Fourier coefficients of its Birkhoff sum S_m.
//!
//! Sum lengths and frequencies both reach far past machine integers here,
//! so a kernel's two residues are never formed from the literal product.
//! A length is carried as a combination sum_t w_t q_{a_t} of convergent
//! denominators, and the residue of w q_a * (l q_b) * alpha is folded
//! through q_n alpha = p_n + (-1)^n theta_n on the *deeper* of the two
//! levels. The integer multiplier that survives is the shallower
//! denominator, so the scaled residue stays bounded by roughly
//! q_shallow / (4 q_deep-neighbour) and the working precision crosses the
//! astronomical factor untouched.

use std::f64::consts::PI;

use num_bigint::{BigInt, BigUint};
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::diophantine::{NormValue, RotationNumber, StoredInt};
use crate::{Error, Result};

const LOG2_PI: f64 = 1.6514961294723187;

/// A frequency addressed either by value or as a multiple of a convergent
/// denominator (whose value may exceed any machine integer).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Freq {
    Plain { value: u64 },
    Member { level: usize, multiplier: u64 },
}

impl Freq {
    pub fn plain(value: u64) -> Self {
        Freq::Plain { value }
    }

    pub fn member(level: usize, multiplier: u64) -> Self {
        Freq::Member { level, multiplier }
    }

    /// log2 of the frequency value.
    pub fn log2(&self, alpha: &RotationNumber) -> f64 {
        match self {
            Freq::Plain { value } => (*value as f64).log2(),
            Freq::Member { level, multiplier } => {
                let q = alpha.q(*level).map(|q| q.log2()).unwrap_or(f64::NAN);
                q + (*multiplier as f64).log2()
            }
        }
    }

    pub fn value_u64(&self, alpha: &RotationNumber) -> Option<u64> {
        match self {
            Freq::Plain { value } => Some(*value),
            Freq::Member { level, multiplier } => {
                alpha.q_u64(*level).and_then(|q| q.checked_mul(*multiplier))
            }
        }
    }

    /// The frequency mod 2^g (g <= 63), for exact evaluation of
    /// cos(2 pi f i / 2^g) on dyadic grids at any magnitude.
    pub fn fold_pow2(&self, alpha: &RotationNumber, g: u32) -> Result<u64> {
        debug_assert!(g <= 63);
        let n = 1u128 << g;
        match self {
            Freq::Plain { value } => Ok((*value as u128 % n) as u64),
            Freq::Member { level, multiplier } => {
                let q = alpha.q(*level).ok_or_else(|| Error::QuotientsExhausted {
                    level: *level,
                    reason: "frequency level not materialized".into(),
                })?;
                let qm = (q.modw() % BigUint::from(n)).to_u64().expect("residue below 2^63");
                Ok(((qm as u128 * *multiplier as u128) % n) as u64)
            }
        }
    }

    pub fn label(&self, alpha: &RotationNumber) -> String {
        match self {
            Freq::Plain { value } => value.to_string(),
            Freq::Member { level, multiplier } => match self.value_u64(alpha) {
                Some(v) => v.to_string(),
                None => format!("{multiplier}*q{level}"),
            },
        }
    }
}

/// Signed residue mod 1 of f * alpha.
pub(crate) fn freq_residue(alpha: &RotationNumber, f: &Freq) -> Result<NormValue> {
    match f {
        Freq::Plain { value } => {
            let k = i64::try_from(*value)
                .map_err(|_| Error::InvalidInput("plain frequency beyond i64".into()))?;
            if k == 0 {
                return Err(Error::InvalidInput("zero frequency has no kernel".into()));
            }
            alpha.srez_i64(k)
        }
        Freq::Member { level, multiplier } => {
            if *multiplier == 0 {
                return Err(Error::InvalidInput("zero frequency has no kernel".into()));
            }
            let l = StoredInt::new(BigUint::from(*multiplier), u64::MAX);
            alpha.srez_scaled(*level, &l)
        }
    }
}

/// Signed residue mod 1 of (sum_t w_t q_{a_t}) * f * alpha, folded per term
/// on the deeper level as described in the module header.
pub(crate) fn combination_freq_residue(
    alpha: &RotationNumber,
    terms: &[(usize, StoredInt)],
    f: &Freq,
) -> Result<NormValue> {
    if terms.is_empty() {
        return Err(Error::InvalidInput("empty denominator combination".into()));
    }
    let ctx = alpha.ctx();
    let mut acc: Option<NormValue> = None;
    for (a, w) in terms {
        let part = match f {
            Freq::Plain { value } => {
                let k = i64::try_from(*value)
                    .map_err(|_| Error::InvalidInput("plain frequency beyond i64".into()))?;
                alpha.srez_scaled(*a, w)?.scale_i64(&ctx, k).reduce_mod1()
            }
            Freq::Member { level: b, multiplier } => {
                let l = i64::try_from(*multiplier)
                    .map_err(|_| Error::InvalidInput("frequency multiplier beyond i64".into()))?;
                let (shallow, deep) = if a >= b { (*b, *a) } else { (*a, *b) };
                let qs = alpha
                    .q(shallow)
                    .ok_or_else(|| Error::QuotientsExhausted {
                        level: shallow,
                        reason: "denominator not materialized".into(),
                    })?
                    .as_norm();
                let theta = alpha.theta(deep)?;
                let signed = if deep % 2 == 0 { theta.clone() } else { theta.neg() };
                let v = NormValue::mul(&ctx, &signed, &qs);
                let v = NormValue::mul(&ctx, &v, &w.as_norm());
                v.scale_i64(&ctx, l).reduce_mod1()
            }
        };
        acc = Some(match acc {
            Some(s) => NormValue::add(&ctx, &s, &part),
            None => part,
        });
    }
    Ok(acc.expect("nonempty terms").reduce_mod1())
}

/// One evaluated kernel. `re`/`im` saturate instead of overflowing when the
/// magnitude escapes f64 range; `mag_log2` stays truthful throughout.
#[derive(Clone, Debug, Serialize)]
pub struct Kernel {
    /// Signed residue of m f alpha (f64 view; 0.0 only records underflow).
    pub num_res: f64,
    /// Signed residue of f alpha.
    pub den_res: f64,
    pub num_log2: f64,
    pub den_log2: f64,
    /// log2 |K|.
    pub mag_log2: f64,
    /// Argument of K, normalized to (-pi, pi].
    pub arg: f64,
    pub re: f64,
    pub im: f64,
}

impl Kernel {
    pub fn mag(&self) -> f64 {
        exp2_sat(self.mag_log2)
    }
}

/// Kernel for a combination length against a frequency.
pub fn kernel_of(
    alpha: &RotationNumber,
    terms: &[(usize, StoredInt)],
    f: &Freq,
) -> Result<Kernel> {
    let num = combination_freq_residue(alpha, terms, f)?;
    let den = freq_residue(alpha, f)?;
    build_kernel(alpha, &num, &den).map_err(|e| match e {
        Error::PrecisionExhausted { context, prec } => Error::PrecisionExhausted {
            context: format!("{context} (frequency {})", f.label(alpha)),
            prec,
        },
        other => other,
    })
}

/// Oracle path: both integers small enough that the product residue can be
/// taken directly from the Ostrowski digits of m*k. Deliberately avoids the
/// folded route so the two can be checked against each other.
pub fn kernel_direct(alpha: &RotationNumber, m: u64, k: u64) -> Result<Kernel> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidInput("zero length or frequency has no kernel".into()));
    }
    let num = alpha.srez(&BigInt::from(m as u128 * k as u128))?;
    let den = alpha.srez_i64(i64::try_from(k).map_err(|_| {
        Error::InvalidInput("plain frequency beyond i64".into())
    })?)?;
    build_kernel(alpha, &num, &den)
}

fn build_kernel(alpha: &RotationNumber, num: &NormValue, den: &NormValue) -> Result<Kernel> {
    if num.value.is_zero() || den.value.is_zero() {
        return Err(Error::PrecisionExhausted {
            context: "kernel residue vanishes at working precision".into(),
            prec: alpha.ctx().prec,
        });
    }
    let num_log2 = num.value.log2_f64();
    let den_log2 = den.value.log2_f64();
    let flip = num.value.is_negative() != den.value.is_negative();
    let mag_log2 = log2_sin_pi(num_log2) - log2_sin_pi(den_log2);
    let num_res = num.to_f64();
    let den_res = den.to_f64();
    let mut arg = PI * (num_res - den_res) + if flip { PI } else { 0.0 };
    arg = wrap_angle(arg);
    let scale = exp2_sat(mag_log2);
    Ok(Kernel {
        num_res,
        den_res,
        num_log2,
        den_log2,
        mag_log2,
        arg,
        re: scale * arg.cos(),
        im: scale * arg.sin(),
    })
}

/// log2 of sin(pi x) for x = 2^l, x in (0, 1/2]. Below 2^-30 the linear
/// term carries the value to within 2^-60 relative.
pub(crate) fn log2_sin_pi(l: f64) -> f64 {
    if l < -30.0 {
        LOG2_PI + l
    } else {
        (PI * l.exp2()).sin().log2()
    }
}

/// exp2 saturated to f64 range so report fields stay JSON-clean.
pub(crate) fn exp2_sat(l: f64) -> f64 {
    if l >= 1023.0 {
        f64::MAX
    } else if l <= -1070.0 {
        0.0
    } else {
        l.exp2()
    }
}

/// Normalize an angle to (-pi, pi].
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut t = a.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    use crate::diophantine::RotationNumber;

    fn golden() -> &'static RotationNumber {
        static A: OnceLock<RotationNumber> = OnceLock::new();
        A.get_or_init(RotationNumber::golden)
    }

    fn pow2l() -> &'static RotationNumber {
        static A: OnceLock<RotationNumber> = OnceLock::new();
        A.get_or_init(|| RotationNumber::liouville_pow2().expect("fixture"))
    }

    fn w(v: u64) -> StoredInt {
        StoredInt::new(BigUint::from(v), u64::MAX)
    }

    #[test]
    fn folded_residue_matches_direct_srez() {
        let a = golden();
        // golden q: 1,1,2,3,5,8,13,21,...
        for (terms, fq, m_times_f) in [
            (vec![(3usize, w(2))], Freq::plain(5), 2 * 3 * 5),
            (vec![(5, w(1))], Freq::plain(7), 8 * 7),
            (vec![(3, w(2)), (5, w(1))], Freq::plain(5), (2 * 3 + 8) * 5),
            (vec![(4, w(3))], Freq::member(3, 2), 3 * 5 * 2 * 3),
            (vec![(2, w(1)), (6, w(2))], Freq::member(4, 1), (2 + 2 * 13) * 5),
        ] {
            let folded = combination_freq_residue(a, &terms, &fq).unwrap();
            let direct = a.srez(&BigInt::from(m_times_f)).unwrap();
            assert!(
                (folded.to_f64() - direct.to_f64()).abs() < 1e-12,
                "terms {terms:?} freq {fq:?}: folded {} direct {}",
                folded.to_f64(),
                direct.to_f64()
            );
        }
    }

    #[test]
    fn kernel_of_agrees_with_direct_oracle() {
        let a = golden();
        for (level, weight, k) in
            [(3usize, 1u64, 2u64), (4, 2, 3), (5, 1, 7), (6, 3, 11), (7, 2, 64)]
        {
            let m = a.q_u64(level).unwrap() * weight;
            let via = kernel_of(a, &[(level, w(weight))], &Freq::plain(k)).unwrap();
            let oracle = kernel_direct(a, m, k).unwrap();
            assert!(
                (via.re - oracle.re).abs() + (via.im - oracle.im).abs() < 1e-9,
                "m={m} k={k}: ({}, {}) vs ({}, {})",
                via.re,
                via.im,
                oracle.re,
                oracle.im
            );
        }
    }

    #[test]
    fn member_frequency_matches_plain_value() {
        let a = golden();
        // f = 2 q_4 = 10 addressed both ways
        let terms = vec![(6usize, w(1))];
        let via_member = kernel_of(a, &terms, &Freq::member(4, 2)).unwrap();
        let via_plain = kernel_of(a, &terms, &Freq::plain(10)).unwrap();
        assert!((via_member.re - via_plain.re).abs() < 1e-10);
        assert!((via_member.im - via_plain.im).abs() < 1e-10);
    }

    #[test]
    fn two_term_cocycle_identity() {
        // K(m1 + m2, f) = K(m1, f) + e(f m1 alpha) K(m2, f): the additive
        // law of Birkhoff sums expressed on one Fourier mode. Checks the
        // combination numerator against single-term kernels.
        let a = golden();
        for (l1, w1, l2, w2, k) in
            [(3usize, 2u64, 5usize, 1u64, 4u64), (2, 1, 6, 2, 7), (4, 3, 7, 1, 3)]
        {
            let sum = kernel_of(a, &[(l1, w(w1)), (l2, w(w2))], &Freq::plain(k)).unwrap();
            let k1 = kernel_of(a, &[(l1, w(w1))], &Freq::plain(k)).unwrap();
            let k2 = kernel_of(a, &[(l2, w(w2))], &Freq::plain(k)).unwrap();
            // phase advance by f * m1 * alpha
            let s = combination_freq_residue(a, &[(l1, w(w1))], &Freq::plain(k))
                .unwrap()
                .to_f64();
            let (sn, cs) = (2.0 * PI * s).sin_cos();
            let re = k1.re + cs * k2.re - sn * k2.im;
            let im = k1.im + sn * k2.re + cs * k2.im;
            assert!(
                (sum.re - re).abs() + (sum.im - im).abs() < 1e-9,
                "cocycle gap at ({l1},{w1})+({l2},{w2}) vs {k}"
            );
        }
    }

    #[test]
    fn sandwich_is_strict() {
        // sin(pi a)/sin(pi b) sits strictly inside (a/2b, 2a/b) because
        // 2x <= sin(pi x) <= pi x on (0, 1/2] with constants 2/pi and pi/2.
        let a = golden();
        for m in [1u64, 2, 5, 13, 21, 55, 89, 144] {
            for k in 1u64..=32 {
                let ker = kernel_direct(a, m, k).unwrap();
                let ratio = ker.num_log2 - ker.den_log2;
                assert!(
                    ker.mag_log2 > ratio - 1.0 && ker.mag_log2 < ratio + 1.0,
                    "sandwich violated at m={m} k={k}"
                );
            }
        }
    }

    #[test]
    fn deep_scale_residues_stay_sane() {
        let a = pow2l();
        // m_4 = b_4 q_4 with b_4 = ceil(q_5 / (4 q_4)): the scaled residue
        // b_4 q_4 theta_4 lands near 1/4, and against theta_4 the kernel
        // magnitude recovers the full q_5-scale amplification.
        let b4 = a.inflation_weight(4).unwrap().clone();
        let ker = kernel_of(a, &[(4usize, b4)], &Freq::member(4, 1)).unwrap();
        assert!(
            ker.num_log2 > -2.1 && ker.num_log2 < -1.9,
            "quarter-residue expected, got 2^{}",
            ker.num_log2
        );
        assert!(
            ker.mag_log2 > 838_860_829.0 && ker.mag_log2 < 838_860_832.0,
            "kernel magnitude 2^{}",
            ker.mag_log2
        );

        // Shallow length against the deep frequency: K(m_3, q_4) stays at
        // the m_3 scale because both residues ride the same theta_4.
        let b3 = a.inflation_weight(3).unwrap().clone();
        let ker = kernel_of(a, &[(3usize, b3)], &Freq::member(4, 1)).unwrap();
        assert!(
            ker.mag_log2 > 26.0 && ker.mag_log2 < 29.0,
            "cross-level kernel magnitude 2^{}",
            ker.mag_log2
        );
    }

    #[test]
    fn distance_to_exponential_bounds() {
        // |e(x) - 1| = 2 sin(pi ||x||) lies in [4 ||x||, 2 pi ||x||].
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..2000 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let nx = crate::bigfloat::circle_norm_f64(x);
            let dist = 2.0 * (PI * nx).sin();
            assert!(4.0 * nx <= dist + 1e-12 && dist <= 2.0 * PI * nx + 1e-12);
        }
    }
}
