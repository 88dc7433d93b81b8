//! Public face of a rotation number: convergents, return-time norms, orbit
//! positions, and the resonant index set, all with tracked enclosures.

use num_bigint::{BigInt, BigUint};

use super::engine::{ConvergentEngine, ConvergentLevel, EngineOptions, StoredInt, TailInfo};
use super::{GrowthRule, NormValue, PartialQuotients};
use crate::bigfloat::FloatCtx;
use crate::Result;

/// A denominator q_n together with the circle norm of q_n * alpha; these are
/// the return times at which the rotation orbit comes closest to its start.
#[derive(Clone, Debug)]
pub struct GoodReturn {
    pub level: usize,
    pub q: StoredInt,
    pub theta: NormValue,
}

pub struct RotationNumber {
    engine: ConvergentEngine,
    desc: PartialQuotients,
}

impl RotationNumber {
    pub fn new(desc: PartialQuotients, opts: EngineOptions) -> Result<Self> {
        let engine = ConvergentEngine::new(&desc, opts)?;
        Ok(RotationNumber { engine, desc })
    }

    pub fn with_defaults(desc: PartialQuotients) -> Result<Self> {
        Self::new(desc, EngineOptions::default())
    }

    /// The golden mean `(sqrt(5)-1)/2 = [0; 1, 1, 1, ...]`.
    pub fn golden() -> Self {
        Self::with_defaults(PartialQuotients::Rule {
            seed: vec![],
            rule: GrowthRule::Constant { value: 1 },
        })
        .expect("constant rule cannot fail")
    }

    /// Liouville-type number with doubling-tower quotients `a_{n+1} = 2^{q_n}`.
    /// Materializes one ~100 MB convergent pair transiently; construction
    /// takes a few seconds and the result retains only summaries.
    pub fn liouville_pow2() -> Result<Self> {
        Self::with_defaults(PartialQuotients::Rule { seed: vec![1], rule: GrowthRule::Pow2Qn })
    }

    /// Rotation number pinned so the return denominators q_4 through q_9 are
    /// prime while growing cubically, `a_{k} = (k-1)^2 q_{k-1}^2 + j` with a
    /// small search offset j. Prime denominators keep every multiple-sum over
    /// the support empty, and the cubic growth keeps `q_n^3 theta_n` summable
    /// while `q_n^2 theta_n` still vanishes. The quotients were found by
    /// `search_prime_cubic_quotients` (see the tests) and are re-verified
    /// cheaply on construction elsewhere; the closing quotient `a_10` is
    /// computed, not searched, since its denominator only needs to close the
    /// norm at level 9.
    pub fn prime_cubic() -> Result<Self> {
        const SEARCHED: [&str; 9] = [
            "1",
            "2",
            "4",
            "7700",
            "160329769848",
            "6439653994731491200908397931086278",
            "384547587927307278235672504028022684743463133433160640239222352266774445752327\
             668682670337623445609634",
            "774005156543551281469298826349757296393938291805381845111983409048783590123923\
             644327463291787889528286298965935629203187912731987324600352809703766811758953\
             756169466186079767433154800820057846096403541184441488115656429803342809450307\
             91736467636275586891234537330534379014186328622225373368280937175030688",
            "605641262427684001341149215579707532099246556861982248984064077161243522078276\
             652631718727307973520771766220668726087323555029225007181420189595385417269570\
             729679956306200256242550649182740077403760219171594055020350434919081704693934\
             302242227090664711461482306155117289219632755605536279427117742104179510834925\
             679726815014618724234610307163119274511611591209364275846233597323496938089894\
             987365242102275274780957457191766231353226839010697141453452198113125863921144\
             236633626642176001581913818726183280685456452961894410326392647030263106941724\
             510195775053968759279927211122755367398314728984929723800857652836067088273377\
             400440610576275527354735438404572440952263207582853142775111596704862520850217\
             350481850773218630518875990677060071983930063445440864102615599946211458156317\
             087510399891905513019532421813195647614538059111654480017115687107502063562104\
             536585030442505187495025939929525787883366233756386352630",
        ];
        let mut data: Vec<BigUint> = SEARCHED
            .iter()
            .map(|s| s.parse().expect("pinned decimal"))
            .collect();
        // Run the recurrence to q_9, then close with a_10 = 81 q_9^2 so the
        // level-9 norm is materialized without a tenth primality search.
        let (mut lo, mut hi) = (BigUint::ZERO, BigUint::from(1u32));
        for a in &data {
            let next = a * &hi + &lo;
            lo = std::mem::replace(&mut hi, next);
        }
        data.push(BigUint::from(81u32) * &hi * &hi);
        Self::with_defaults(PartialQuotients::FiniteWide { data })
    }

    pub fn describe(&self) -> &PartialQuotients {
        &self.desc
    }

    pub fn options(&self) -> &EngineOptions {
        self.engine.options()
    }

    pub fn ctx(&self) -> FloatCtx {
        FloatCtx::new(self.engine.options().precision_bits)
    }

    /// Enclosure of alpha itself.
    pub fn alpha(&self) -> &NormValue {
        self.engine.alpha()
    }

    pub fn alpha_f64(&self) -> f64 {
        self.engine.alpha().to_f64()
    }

    /// Number of materialized convergent levels (level 0 is `0/1`).
    pub fn levels(&self) -> usize {
        self.engine.levels().len()
    }

    pub fn level(&self, n: usize) -> Option<&ConvergentLevel> {
        self.engine.levels().get(n)
    }

    pub fn q(&self, n: usize) -> Option<&StoredInt> {
        self.level(n).map(|l| &l.q)
    }

    pub fn q_u64(&self, n: usize) -> Option<u64> {
        self.q(n).and_then(|q| q.to_u64())
    }

    pub fn quotient(&self, k: usize) -> Option<&StoredInt> {
        if k == 0 {
            return None;
        }
        self.level(k).map(|l| &l.a)
    }

    pub fn tail(&self) -> &TailInfo {
        self.engine.tail()
    }

    /// Circle norm `theta_n = dist(q_n alpha, Z)` (for n >= 1; at n = 0 this
    /// is `alpha` itself, which exceeds 1/2 when a_1 = 1).
    pub fn theta(&self, n: usize) -> Result<&NormValue> {
        self.engine.theta(n)
    }

    pub fn theta_levels(&self) -> usize {
        self.engine.theta_levels()
    }

    /// Inflation weight `ceil(q_{n+1} / (4 q_n))` at level `n`.
    pub fn inflation_weight(&self, n: usize) -> Result<&StoredInt> {
        self.engine.inflation_weight(n)
    }

    /// Signed residue of `w * q_n * alpha` mod 1, usable for weights far
    /// beyond the digit-expansion horizon.
    pub fn srez_scaled(&self, n: usize, w: &StoredInt) -> Result<NormValue> {
        self.engine.srez_scaled(n, w)
    }

    /// All return levels with computable norms.
    pub fn good_returns(&self) -> Vec<GoodReturn> {
        (0..self.theta_levels())
            .map(|n| GoodReturn {
                level: n,
                q: self.engine.levels()[n].q.clone(),
                theta: self.engine.theta(n).expect("level bounded above").clone(),
            })
            .collect()
    }

    /// Ostrowski digits of `m` over the denominators (nonzero entries,
    /// descending level).
    pub fn ostrowski(&self, m: &BigUint) -> Result<Vec<(usize, BigUint)>> {
        self.engine.ostrowski(m)
    }

    /// Signed residue of `m * alpha` mod 1, in `[-1/2, 1/2]`.
    pub fn srez(&self, m: &BigInt) -> Result<NormValue> {
        self.engine.srez(m)
    }

    pub fn srez_i64(&self, m: i64) -> Result<NormValue> {
        self.engine.srez(&BigInt::from(m))
    }

    /// `dist(m alpha, Z)`.
    pub fn circle_norm(&self, m: &BigInt) -> Result<NormValue> {
        Ok(self.engine.srez(m)?.circle_norm(&self.engine.work_ctx()))
    }

    /// Orbit position `frac(k alpha)` in `[0, 1)`.
    pub fn position(&self, k: i64) -> Result<NormValue> {
        let r = self.srez_i64(k)?;
        if r.value.is_negative() {
            let ctx = self.engine.work_ctx();
            Ok(NormValue::new(ctx.add(&r.value, &crate::bigfloat::BigFloat::one()), r.err_exp))
        } else {
            Ok(r)
        }
    }

    pub fn position_f64(&self, k: i64) -> Result<f64> {
        Ok(self.position(k)?.to_f64())
    }

    /// Membership in the resonant set `{m : 2 m^2 dist(m alpha, Z) <= 1}`.
    pub fn in_resonant_set(&self, m: &BigUint) -> Result<bool> {
        self.engine.in_resonant_set(m)
    }

    /// All resonant indices up to `max`.
    pub fn resonant_set(&self, max: &BigUint) -> Result<Vec<BigUint>> {
        self.engine.resonant_set(max)
    }

    pub fn resonant_set_u64(&self, max: u64) -> Result<Vec<BigUint>> {
        self.engine.resonant_set(&BigUint::from(max))
    }

    /// Residue of `q_n` modulo `2^MODW_BITS` (available for every level,
    /// including summarized ones).
    pub fn q_modw(&self, n: usize) -> Option<BigUint> {
        self.q(n).map(|q| q.modw())
    }

    /// True when nothing beyond the materialized expansion is known, so the
    /// number is only determined up to the convergent interval.
    pub fn is_finite_data(&self) -> bool {
        matches!(self.desc, PartialQuotients::Finite { .. })
    }
}

impl std::fmt::Debug for RotationNumber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "RotationNumber(alpha~{:.6}, {} levels, {} theta levels)",
            self.alpha_f64(),
            self.levels(),
            self.theta_levels()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    #[test]
    fn golden_resonant_set_is_minimal() {
        // Fibonacci denominators grow too fast for any m >= 2 to qualify.
        let rot = RotationNumber::golden();
        let set = rot.resonant_set_u64(100_000).unwrap();
        let expect: Vec<BigUint> = [0u32, 1].iter().map(|&v| BigUint::from(v)).collect();
        assert_eq!(set, expect);
    }

    #[test]
    fn positions_wrap_into_unit_interval() {
        let rot = RotationNumber::golden();
        let a = rot.alpha_f64();
        for k in [1i64, 2, 3, 8, 13, 1000, -5] {
            let x = rot.position_f64(k).unwrap();
            let expect = (k as f64 * a).rem_euclid(1.0);
            assert!((x - expect).abs() < 1e-9, "position({k}) = {x} vs {expect}");
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn srez_sign_convention() {
        let rot = RotationNumber::golden();
        // alpha ~ 0.618: frac is 0.618 -> signed residue -0.382.
        let r = rot.srez_i64(1).unwrap();
        assert!((r.to_f64() + 0.3819660113).abs() < 1e-9);
        let r2 = rot.srez_i64(-1).unwrap();
        assert!((r2.to_f64() - 0.3819660113).abs() < 1e-9);
    }

    #[test]
    fn good_returns_expose_levels() {
        let rot = RotationNumber::golden();
        let rets = rot.good_returns();
        assert_eq!(rets.len(), rot.theta_levels());
        assert_eq!(rets[6].q.to_u64(), Some(13));
        assert!(rets[6].theta.to_f64() > 0.0);
    }

    #[test]
    fn prime_cubic_fixture_properties() {
        let rot = RotationNumber::prime_cubic().unwrap();
        assert_eq!(rot.theta_levels(), 10, "norms through level 9");
        assert_eq!(rot.q_u64(4), Some(100_103));
        let expect_bits: [(usize, u64); 6] =
            [(4, 17), (5, 54), (6, 167), (7, 504), (8, 1517), (9, 4556)];
        for (n, bits) in expect_bits {
            let q = rot.q(n).unwrap();
            assert_eq!(q.bits(), bits, "q_{n} bit length");
            assert!(
                crate::primes::is_probable_prime(q.full().unwrap(), 16, 7 + n as u64),
                "q_{n} must be prime"
            );
            // Resonant membership with margin: log2(2 q_n^2 theta_n) << 0.
            let lg = 1.0 + 2.0 * q.log2() + rot.theta(n).unwrap().value.log2_f64();
            assert!(lg < -4.0, "level {n} membership margin {lg}");
            // Each denominator outgrows the square of the previous one.
            assert!(rot.q(n + 1).unwrap().bits() >= 2 * q.bits() - 1, "growth at {n}");
        }
        // Cubic profile: log2 q_{n+1} close to 3 log2 q_n + 2 log2 n.
        for n in 4..=9usize {
            let lhs = rot.q(n + 1).unwrap().log2();
            let rhs = 3.0 * rot.q(n).unwrap().log2() + 2.0 * (n as f64).log2();
            assert!((lhs - rhs).abs() < 1.0, "cubic growth at {n}: {lhs} vs {rhs}");
        }
    }

    fn mod_inv_u64(a: u64, p: u64) -> u64 {
        // Extended Euclid; p prime and a not divisible by p.
        let (mut r0, mut r1) = (p as i128, (a % p) as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        t0.rem_euclid(p as i128) as u64
    }

    /// Sieve-then-test search over the progression q_k = base + j * q_{k-1}
    /// for quotients a_k near (k-1)^2 q_{k-1}^2 that land q_k on a prime.
    /// Takes a minute or two; the winning quotients are pinned in
    /// `prime_cubic` and re-verified by the fast tests there.
    #[test]
    #[ignore = "one-time search that produced the prime_cubic quotients"]
    fn search_prime_cubic_quotients() {
        use crate::primes::{is_probable_prime, sieve};
        use num_traits::ToPrimitive;

        let small = sieve(100_000);
        let mut quotients: Vec<BigUint> =
            vec![BigUint::from(1u32), BigUint::from(2u32), BigUint::from(4u32)];
        let mut q_prev = BigUint::from(3u32); // q_2
        let mut q_cur = BigUint::from(13u32); // q_3
        for k in 4usize..=9 {
            let t = BigUint::from(((k - 1) * (k - 1)) as u64) * &q_cur * &q_cur;
            let base = &t * &q_cur + &q_prev;
            let step = q_cur.clone();
            const SPAN: usize = 1 << 16;
            let mut alive = vec![true; SPAN];
            for &p in &small {
                let pb = BigUint::from(p);
                let r = (&base % &pb).to_u64().unwrap();
                let s = (&step % &pb).to_u64().unwrap();
                if s == 0 {
                    if r == 0 {
                        alive.iter_mut().for_each(|x| *x = false);
                    }
                    continue;
                }
                let mut j = (((p - r % p) % p) * mod_inv_u64(s, p) % p) as usize;
                while j < SPAN {
                    // base + j step is divisible by p; candidates this small
                    // are only prime if they equal p, which the sizes here
                    // never allow.
                    alive[j] = false;
                    j += p as usize;
                }
            }
            let mut found = None;
            for (j, &ok) in alive.iter().enumerate() {
                if !ok {
                    continue;
                }
                let cand = &base + BigUint::from(j as u64) * &step;
                if is_probable_prime(&cand, 2, 0xabc0 + k as u64)
                    && is_probable_prime(&cand, 32, 0xdef0 + k as u64)
                {
                    found = Some((j, cand));
                    break;
                }
            }
            let (j, q_next) = found.expect("search span exhausted");
            let a_k = &t + BigUint::from(j as u64);
            println!("a_{k} = {a_k}");
            println!("  offset j = {j}, q_{k} bits = {}", q_next.bits());
            quotients.push(a_k);
            q_prev = std::mem::replace(&mut q_cur, q_next);
        }
        let a_10 = BigUint::from(81u32) * &q_cur * &q_cur;
        println!("a_10 = 81 * q_9^2 ({} bits, computed, not searched)", a_10.bits());
        for (i, a) in quotients.iter().enumerate() {
            println!("pinned a_{} bits = {}", i + 1, a.bits());
        }
    }
}
