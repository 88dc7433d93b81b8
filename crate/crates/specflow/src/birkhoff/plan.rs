//! Rigidity-time plans: sequences m_n = sum_k b_k q_{s(k)} of inflated
//! convergent denominators with `||m_n alpha||` shrinking, along which the
//! criterion integrals are evaluated. Single-frequency plans inflate one
//! level per time (b = ceil(q_{n+1} / 4 q_n), pushing the scaled residue
//! near 1/4); multi-frequency plans join consecutive levels into windows
//! until each window carries a prescribed amount of oscillation variance.
//!
//! Also here: the mode bookkeeping shared by the criterion, and the
//! lambda-representative that trims a mode set until its coefficient
//! budget `sum 2 m |c_m| < 1/(16 |lambda|)` fits a candidate eigenvalue.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::cohomology::{resonant_members, ReducedMode};
use crate::diophantine::{NormValue, RotationNumber, StoredInt, MODW_BITS};
use crate::roof::FourierRoof;
use crate::{Error, Result};

use super::kernel::{self, combination_freq_residue, kernel_of, Freq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    SingleFrequency,
    MultiFrequency,
    Diagnostic,
}

/// One rigidity time. `terms` carries the exact combination; the residue
/// of m_n alpha and the residue of m_n mod 2^640 are both exact, so the
/// entry supports eigenvalue phases and grid folds at any magnitude.
#[derive(Clone, Debug, Serialize)]
pub struct PlanEntry {
    pub n: usize,
    /// Window levels, ascending.
    pub levels: Vec<usize>,
    #[serde(skip)]
    pub terms: Vec<(usize, StoredInt)>,
    pub m_dec: String,
    pub m_log2: f64,
    pub m_u64: Option<u64>,
    #[serde(skip)]
    pub m_modw: BigUint,
    /// Signed distance of m_n alpha to the nearest integer (f64 view).
    pub norm: f64,
    pub norm_log2: f64,
    /// Oscillation amplitude 2|c K| of each window mode at lambda = 1.
    pub amps: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BirkhoffPlan {
    pub kind: PlanKind,
    /// The eigenvalue candidate the plan was built to test. The times m_n
    /// do not depend on it; the criterion may sweep other values over the
    /// same plan.
    pub lambda: f64,
    pub entries: Vec<PlanEntry>,
    pub notes: Vec<String>,
}

fn build_entry(
    alpha: &RotationNumber,
    n: usize,
    terms: Vec<(usize, StoredInt)>,
    amps: Vec<f64>,
) -> Result<PlanEntry> {
    let ctx = alpha.ctx();
    let res = combination_freq_residue(alpha, &terms, &Freq::plain(1))?;
    let mask = (BigUint::from(1u8) << MODW_BITS) - BigUint::from(1u8);
    let mut modw = BigUint::default();
    let mut m_norm: Option<NormValue> = None;
    let mut m_full: Option<BigUint> = Some(BigUint::default());
    for (lvl, w) in &terms {
        let q = alpha.q(*lvl).ok_or_else(|| Error::QuotientsExhausted {
            level: *lvl,
            reason: "denominator not materialized".into(),
        })?;
        modw = (modw + w.modw() * q.modw()) & &mask;
        let part = NormValue::mul(&ctx, &w.as_norm(), &q.as_norm());
        m_norm = Some(match m_norm {
            Some(s) => NormValue::add(&ctx, &s, &part),
            None => part,
        });
        m_full = match (m_full, w.full(), q.full()) {
            (Some(acc), Some(wf), Some(qf)) => Some(acc + wf * qf),
            _ => None,
        };
    }
    let m_log2 = m_norm.expect("nonempty terms").value.log2_f64();
    let m_dec = match &m_full {
        Some(v) if v.bits() <= 160 => v.to_string(),
        _ => format!("~2^{m_log2:.2}"),
    };
    Ok(PlanEntry {
        n,
        levels: terms.iter().map(|(l, _)| *l).collect(),
        m_u64: m_full.as_ref().and_then(|v| v.to_u64()),
        m_dec,
        m_log2,
        m_modw: modw,
        norm: res.to_f64(),
        norm_log2: res.value.log2_f64(),
        terms,
        amps,
    })
}

fn enforce_shrinking_norms(entries: &[PlanEntry]) -> Result<()> {
    for w in entries.windows(2) {
        if !(w[1].norm_log2 < w[0].norm_log2) {
            return Err(Error::InvalidInput(format!(
                "return norms do not shrink along the plan: level set {:?} then {:?}",
                w[0].levels, w[1].levels
            )));
        }
    }
    Ok(())
}

/// Inflation weight, kernel and amplitude for one candidate level.
fn level_oscillation(
    alpha: &RotationNumber,
    level: usize,
    c_log2: f64,
) -> Result<(StoredInt, f64)> {
    let b = alpha.inflation_weight(level)?.clone();
    let ker = kernel_of(alpha, &[(level, b.clone())], &Freq::member(level, 1))?;
    Ok((b, 2.0 * kernel::exp2_sat(c_log2 + ker.mag_log2)))
}

/// Levels usable as plan frequencies: modes in level form with multiplier
/// one and a live coefficient.
fn level_coefficients(modes: &[LambdaMode]) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for md in modes {
        if md.multiplier == 1 && md.c_log2 > f64::NEG_INFINITY {
            if let Some(lvl) = md.level {
                out.insert(lvl, md.c_log2);
            }
        }
    }
    out
}

/// Plan m_n = b_n q_{s(n)} over the deepest `count` usable levels. The
/// inflation b_n = ceil(q_{s+1} / 4 q_s) parks `||m_n alpha||` near 1/4 of
/// the next convergent scale, so the level-s oscillation of S_{m_n} stays
/// macroscopic while every shallower mode is dragged along rigidly.
pub fn make_single_frequency_plan(
    alpha: &RotationNumber,
    modes: &[LambdaMode],
    lambda: f64,
    count: usize,
) -> Result<BirkhoffPlan> {
    if count == 0 {
        return Err(Error::InvalidInput("plan needs at least one entry".into()));
    }
    let levels = level_coefficients(modes);
    if levels.len() < count {
        return Err(Error::InvalidInput(format!(
            "single-frequency plan needs {count} resonant levels; the mode set provides {}",
            levels.len()
        )));
    }
    let all: Vec<(usize, f64)> = levels.into_iter().collect();
    let chosen = &all[all.len() - count..];
    let mut entries = Vec::with_capacity(count);
    for (i, (lvl, c_log2)) in chosen.iter().enumerate() {
        let (b, amp) = level_oscillation(alpha, *lvl, *c_log2)?;
        entries.push(build_entry(alpha, i + 1, vec![(*lvl, b)], vec![amp])?);
    }
    enforce_shrinking_norms(&entries)?;
    Ok(BirkhoffPlan { kind: PlanKind::SingleFrequency, lambda, entries, notes: vec![] })
}

/// Plan m_n = q_n along raw denominators: no inflation, no mode data. The
/// probe used on the discrete side, where every criterion integral should
/// collapse.
pub fn make_diagnostic_plan(
    alpha: &RotationNumber,
    lambda: f64,
    levels: &[usize],
) -> Result<BirkhoffPlan> {
    let one = StoredInt::new(BigUint::from(1u8), u64::MAX);
    let mut entries: Vec<PlanEntry> = Vec::with_capacity(levels.len());
    for (i, lvl) in levels.iter().enumerate() {
        let e = build_entry(alpha, i + 1, vec![(*lvl, one.clone())], vec![])?;
        if let Some(prev) = entries.last() {
            if prev.m_dec == e.m_dec {
                continue; // unit denominator repeats when a_1 = 1
            }
        }
        entries.push(e);
    }
    for (i, e) in entries.iter_mut().enumerate() {
        e.n = i + 1;
    }
    enforce_shrinking_norms(&entries)?;
    Ok(BirkhoffPlan { kind: PlanKind::Diagnostic, lambda, entries, notes: vec![] })
}

/// Windowed plan m_n = sum_{k in W_n} b_k q_{s(k)}: consecutive usable
/// levels are grouped until each window's oscillation variance
/// sum d_k^2 reaches `variance_target` within the relative `band`. Refused
/// when the total variance cannot reach the target even once: that is the
/// convergent-transfer regime, where the single-frequency construction (or
/// none) applies.
pub fn make_multi_frequency_plan(
    alpha: &RotationNumber,
    modes: &[LambdaMode],
    lambda: f64,
    variance_target: f64,
    band: f64,
) -> Result<BirkhoffPlan> {
    if !(variance_target > 0.0 && (0.0..1.0).contains(&band)) {
        return Err(Error::InvalidInput("variance target and band must be positive".into()));
    }
    let levels = level_coefficients(modes);
    let mut weighted: Vec<(usize, StoredInt, f64)> = Vec::new();
    let mut total = 0.0;
    for (lvl, c_log2) in levels {
        let (b, d) = level_oscillation(alpha, lvl, c_log2)?;
        total += d * d;
        weighted.push((lvl, b, d));
    }
    let lo = variance_target * (1.0 - band);
    let hi = variance_target * (1.0 + band);
    if total < lo {
        return Err(Error::CertificateUnsatisfiable(format!(
            "level variances sum to {total:.4}, below the window target {variance_target}"
        )));
    }
    // Divergence precondition. Windows must keep reaching the target
    // arbitrarily deep, so the deep levels have to keep carrying variance.
    // When the deepest third of the usable levels holds almost none, the
    // level series is summable and every window past the first few is
    // unreachable: the convergent-transfer regime, refused outright rather
    // than truncated.
    if weighted.len() >= 3 {
        let deep = weighted.len().div_ceil(3);
        let deep_sum: f64 =
            weighted[weighted.len() - deep..].iter().map(|(_, _, d)| d * d).sum();
        if deep_sum < 0.05 * total {
            return Err(Error::CertificateUnsatisfiable(format!(
                "level variance series is summable: the deepest {deep} of {} usable \
                 levels carry {deep_sum:.3e} of {total:.4}; windows cannot keep \
                 reaching the target",
                weighted.len()
            )));
        }
    }
    let mut notes = Vec::new();
    let mut entries = Vec::new();
    let mut terms: Vec<(usize, StoredInt)> = Vec::new();
    let mut amps: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for (lvl, b, d) in weighted {
        terms.push((lvl, b));
        amps.push(d);
        acc += d * d;
        if acc >= lo {
            if acc > hi {
                notes.push(format!(
                    "window {} variance {acc:.4} overshoots the band ({lo:.4}, {hi:.4})",
                    entries.len() + 1
                ));
            }
            entries.push(build_entry(
                alpha,
                entries.len() + 1,
                std::mem::take(&mut terms),
                std::mem::take(&mut amps),
            )?);
            acc = 0.0;
        }
    }
    if !terms.is_empty() {
        notes.push(format!(
            "{} trailing levels dropped: variance {acc:.4} never reached the band",
            terms.len()
        ));
    }
    if entries.is_empty() {
        return Err(Error::CertificateUnsatisfiable(
            "no window reached the variance target".into(),
        ));
    }
    enforce_shrinking_norms(&entries)?;
    Ok(BirkhoffPlan { kind: PlanKind::MultiFrequency, lambda, entries, notes })
}

/// One roof mode in the form the criterion consumes.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaMode {
    pub freq: Freq,
    pub m_log2: f64,
    /// log2 |c_m|.
    pub c_log2: f64,
    pub c_phase: f64,
    /// Divisibility annotation: the deepest materialized denominator
    /// dividing the frequency with a small cofactor. Residues of shallow
    /// levels may wrap, so this records arithmetic, not the size of
    /// `||m alpha||`.
    pub level: Option<usize>,
    pub multiplier: u64,
}

fn dense_resonance(alpha: &RotationNumber, k: u64, mult_cap: u64) -> (Option<usize>, u64) {
    for n in (0..alpha.theta_levels()).rev() {
        let Some(q) = alpha.q_u64(n) else { continue };
        if q == 0 || k % q != 0 {
            continue;
        }
        let l = k / q;
        if l <= mult_cap && (q > 1 || k == 1) {
            return (Some(n), l);
        }
    }
    (None, 0)
}

/// Every mode of the roof up to `horizon`, plus the resonant members past
/// it, kept in level form so their residues stay exact at any depth.
/// Members past `mult_cap` multiples are omitted; for the admissible roof
/// families their coefficients are far below any other scale in play.
pub fn modes_from_roof(
    alpha: &RotationNumber,
    roof: &FourierRoof,
    horizon: u64,
    mult_cap: u64,
) -> Result<Vec<LambdaMode>> {
    let mut out = Vec::new();
    for k in roof.support_u64(horizon) {
        let cl = roof.lmag(k);
        if cl == f64::NEG_INFINITY {
            continue;
        }
        let (level, multiplier) = dense_resonance(alpha, k, mult_cap);
        out.push(LambdaMode {
            freq: Freq::plain(k),
            m_log2: (k as f64).log2(),
            c_log2: cl,
            c_phase: roof.phase(k),
            level,
            multiplier,
        });
    }
    let scan = resonant_members(alpha, horizon, mult_cap, None)?;
    for mem in scan.members {
        let cl = roof.lmag_member(mem.level, mem.multiplier, &mem.m);
        if cl == f64::NEG_INFINITY {
            continue;
        }
        // Coefficients at these scales are real in every admissible family.
        // Level form is mandatory here even when the value fits u64: the
        // plain residue path scales a shallow theta by the value, and for
        // multiples of deep denominators that difference cancels below
        // working precision. The member path folds through the level
        // identity exactly.
        out.push(LambdaMode {
            freq: Freq::member(mem.level, mem.multiplier),
            m_log2: mem.m_log2,
            c_log2: cl,
            c_phase: 0.0,
            level: Some(mem.level),
            multiplier: mem.multiplier,
        });
    }
    out.sort_by(|a, b| a.m_log2.total_cmp(&b.m_log2));
    Ok(out)
}

/// Modes of a reduced roof (the output of the coboundary reductions),
/// keeping their level annotations.
pub fn modes_from_reduction(roof: &FourierRoof, kept: &[ReducedMode]) -> Vec<LambdaMode> {
    let mut out: Vec<LambdaMode> = kept
        .iter()
        .map(|r| LambdaMode {
            // Same rule as modes_from_roof: level form keeps deep residues
            // exact where the plain path would cancel to zero.
            freq: Freq::member(r.level, r.multiplier),
            m_log2: r.m_log2,
            c_log2: r.c_log2,
            c_phase: r.m_u64.map(|v| roof.phase(v)).unwrap_or(0.0),
            level: Some(r.level),
            multiplier: r.multiplier,
        })
        .collect();
    out.sort_by(|a, b| a.m_log2.total_cmp(&b.m_log2));
    out
}

/// Crude numeric bound on `sum_{m > horizon} m |c_m|`: the explicit part
/// up to 4x the horizon plus an envelope on the analytic remainder (valid
/// for supports thinning at least geometrically, which covers every
/// admissible family).
pub fn coefficient_weight_tail(roof: &FourierRoof, horizon: u64) -> f64 {
    let far = horizon.saturating_mul(4);
    let mut sum = 0.0;
    for k in roof.support_u64(far) {
        if k > horizon {
            sum += (k as f64) * kernel::exp2_sat(roof.lmag(k));
        }
    }
    sum + 4.0 * far as f64 * roof.tail_l1(far)
}

/// A mode set trimmed to fit the coefficient budget of one eigenvalue
/// candidate. The dropped part is a trigonometric polynomial, hence a
/// coboundary: removing it conjugates the flow and changes no spectral
/// data, so only the kept weight must obey the budget.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaRepresentative {
    pub lambda: f64,
    pub kept: Vec<LambdaMode>,
    pub dropped: Vec<LambdaMode>,
    /// sum over kept of m |c_m|, plus the analytic tail.
    pub cert_sum: f64,
    /// 1 / (16 |lambda|).
    pub cert_bound: f64,
    pub tail_weight: f64,
    /// pi |lambda| cert_sum: first-order envelope for off-level sums. A
    /// kept mode at frequency k contributes at most 2 |c_k| (pi/2) k |lambda|
    /// to any S_m truncation gap while ||m alpha|| <= ||k alpha||.
    pub sup_gap_bound: f64,
}

pub fn lambda_representative(
    modes: &[LambdaMode],
    lambda: f64,
    tail_weight: f64,
) -> Result<LambdaRepresentative> {
    if !(lambda.is_finite() && lambda != 0.0) {
        return Err(Error::InvalidInput("eigenvalue candidate must be finite and nonzero".into()));
    }
    if !(tail_weight >= 0.0) {
        return Err(Error::InvalidInput("negative coefficient tail".into()));
    }
    let bound = 1.0 / (16.0 * lambda.abs());
    let weight = |md: &LambdaMode| kernel::exp2_sat(md.m_log2 + md.c_log2);
    let mut order: Vec<usize> = (0..modes.len()).collect();
    order.sort_by(|&i, &j| modes[i].m_log2.total_cmp(&modes[j].m_log2));
    let mut cut = order.len();
    for take in (0..=order.len()).rev() {
        let sum: f64 = tail_weight + order[order.len() - take..].iter().map(|&i| weight(&modes[i])).sum::<f64>();
        if sum < bound {
            cut = order.len() - take;
            break;
        }
        if take == 0 {
            return Err(Error::CertificateUnsatisfiable(format!(
                "coefficient tail {tail_weight:.3e} alone exceeds the budget {bound:.3e} at lambda {lambda}"
            )));
        }
    }
    let kept: Vec<LambdaMode> = order[cut..].iter().map(|&i| modes[i].clone()).collect();
    let dropped: Vec<LambdaMode> = order[..cut].iter().map(|&i| modes[i].clone()).collect();
    let cert_sum = tail_weight + kept.iter().map(weight).sum::<f64>();
    Ok(LambdaRepresentative {
        lambda,
        cert_sum,
        cert_bound: bound,
        tail_weight,
        sup_gap_bound: std::f64::consts::PI * lambda.abs() * cert_sum,
        kept,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, OnceLock};

    use crate::roof::{make_dyadic_roof, make_resonant_roof, make_table_roof};

    fn golden() -> &'static RotationNumber {
        static A: OnceLock<RotationNumber> = OnceLock::new();
        A.get_or_init(RotationNumber::golden)
    }

    fn pow2l() -> &'static RotationNumber {
        static A: OnceLock<RotationNumber> = OnceLock::new();
        A.get_or_init(|| RotationNumber::liouville_pow2().expect("fixture"))
    }

    fn prime_cubic() -> &'static Arc<RotationNumber> {
        static A: OnceLock<Arc<RotationNumber>> = OnceLock::new();
        A.get_or_init(|| Arc::new(RotationNumber::prime_cubic().expect("fixture")))
    }

    #[test]
    fn pow2_liouville_single_plan_inflates_each_level() {
        let a = pow2l();
        let roof = make_dyadic_roof();
        let modes = modes_from_roof(a, &roof, 4096, 128).unwrap();
        let plan = make_single_frequency_plan(a, &modes, 10.25, 4).unwrap();
        assert_eq!(plan.entries.len(), 4);
        assert_eq!(plan.entries[0].m_dec, "1");
        assert_eq!(plan.entries[1].m_dec, "9");
        assert_eq!(plan.entries[2].m_dec, "209715225");
        assert!(plan.entries[3].m_dec.starts_with("~2^"), "{}", plan.entries[3].m_dec);
        assert!(plan.entries[3].m_u64.is_none());
        let norms: Vec<f64> = plan.entries.iter().map(|e| e.norm.abs()).collect();
        assert!((norms[0] - 0.3201).abs() < 5e-4, "norm {}", norms[0]);
        assert!((norms[1] - 0.1200).abs() < 5e-4, "norm {}", norms[1]);
        assert!((norms[2] - 0.0100).abs() < 5e-4, "norm {}", norms[2]);
        assert!(
            plan.entries[3].norm_log2 > -32.2 && plan.entries[3].norm_log2 < -31.0,
            "deep norm 2^{}",
            plan.entries[3].norm_log2
        );
        // the deep window mode oscillates at the scale recovered from the
        // coefficient 2^-q_4 against theta_4 ~ 2^-(q_4 + log2 q_4)
        let deep_amp = plan.entries[3].amps[0];
        assert!(
            deep_amp.log2() > 27.0 && deep_amp.log2() < 30.5,
            "deep amplitude 2^{}",
            deep_amp.log2()
        );
    }

    #[test]
    fn single_plan_refused_without_enough_levels() {
        let a = golden();
        let roof = make_table_roof(vec![(0, 1.0, 0.0), (1, 0.3, 0.0), (-1, 0.3, 0.0)]).unwrap();
        let modes = modes_from_roof(a, &roof, 64, 16).unwrap();
        let err = make_single_frequency_plan(a, &modes, 1.0, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }

    #[test]
    fn diagnostic_plan_walks_denominators() {
        let a = golden();
        let plan = make_diagnostic_plan(a, 1.0, &(0..=8).collect::<Vec<_>>()).unwrap();
        let ms: Vec<&str> = plan.entries.iter().map(|e| e.m_dec.as_str()).collect();
        assert_eq!(ms, ["1", "2", "3", "5", "8", "13", "21", "34"]);
        for w in plan.entries.windows(2) {
            assert!(w[1].norm.abs() < w[0].norm.abs());
        }
    }

    #[test]
    fn prime_cubic_multi_plan_windows_pairs() {
        let a = prime_cubic();
        let roof = make_resonant_roof(a, 1.5, 0.15, 4).unwrap();
        let modes = modes_from_roof(a, &roof, 200_000, 128).unwrap();
        let plan = make_multi_frequency_plan(a, &modes, 8.0, 0.5, 0.2).unwrap();
        let windows: Vec<&[usize]> = plan.entries.iter().map(|e| e.levels.as_slice()).collect();
        assert_eq!(windows, [&[4usize, 5][..], &[6, 7], &[8, 9]]);
        for e in &plan.entries {
            let var: f64 = e.amps.iter().map(|d| d * d).sum();
            assert!((0.4..=0.6).contains(&var), "window {:?} variance {var}", e.levels);
        }
        for w in plan.entries.windows(2) {
            assert!(w[1].norm_log2 < w[0].norm_log2);
        }
    }

    #[test]
    fn multi_plan_refused_in_the_convergent_regime() {
        let a = golden();
        let roof = make_dyadic_roof();
        let modes = modes_from_roof(a, &roof, 256, 64).unwrap();
        let err = make_multi_frequency_plan(a, &modes, 1.0, 0.5, 0.2).unwrap_err();
        assert!(matches!(err, Error::CertificateUnsatisfiable(_)), "{err}");
    }

    #[test]
    fn representative_drops_the_smallest_frequencies() {
        let a = golden();
        let roof = make_dyadic_roof();
        let modes = modes_from_roof(a, &roof, 64, 64).unwrap();
        let rep = lambda_representative(&modes, 1.0, 0.0).unwrap();
        assert!(rep.cert_sum < rep.cert_bound);
        assert!(!rep.dropped.is_empty() && !rep.kept.is_empty());
        let max_dropped = rep.dropped.iter().map(|m| m.m_log2).fold(f64::MIN, f64::max);
        let min_kept = rep.kept.iter().map(|m| m.m_log2).fold(f64::MAX, f64::min);
        assert!(max_dropped < min_kept);
        assert!(rep.sup_gap_bound < 0.5);
        // the budget shrinks as lambda grows
        let tight = lambda_representative(&modes, 64.0, 0.0).unwrap();
        assert!(tight.kept.len() <= rep.kept.len());
        // a tail alone can sink the certificate
        let err = lambda_representative(&modes, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::CertificateUnsatisfiable(_)), "{err}");
    }

    #[test]
    fn mode_annotations_follow_divisibility() {
        let a = golden();
        let roof = make_dyadic_roof();
        let modes = modes_from_roof(a, &roof, 64, 64).unwrap();
        let by_freq = |k: u64| {
            modes
                .iter()
                .find(|m| m.freq == Freq::plain(k))
                .unwrap_or_else(|| panic!("mode {k} missing"))
        };
        assert_eq!(by_freq(1).level, Some(1));
        assert_eq!(by_freq(1).multiplier, 1);
        // deepest divisor wins: 6 = 2 q_3 with q_3 = 3
        let m6 = by_freq(6);
        assert_eq!(m6.level, Some(3));
        assert_eq!(m6.multiplier, 2);
        let m55 = by_freq(55);
        assert_eq!((m55.level, m55.multiplier), (Some(9), 1));
    }
}
