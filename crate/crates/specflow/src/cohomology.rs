//! Coboundary reductions and the transfer-series classification.
//!
//! The formal conjugacy transfer has coefficients
//! `psi_m = c_m / (e^{2 pi i m alpha} - 1)`, and whether `sum |psi_m|^2`
//! converges separates a time change with discrete spectrum (an L2
//! conjugacy exists) from a weak-mixing one. At a finite horizon the
//! evidence splits into a dense prefix, where the partial sums must go
//! Cauchy, and the members of the resonant index set
//! `{m : 2 m^2 dist(m alpha, Z) <= 1}`, which is where all late mass can
//! live. Every sum over frequencies counts the `+-m` pair, so a factor of
//! two rides on each positive-frequency term.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diophantine::{RotationNumber, StoredInt};
use crate::exec;
use crate::roof::{stored_same, FourierRoof, H1Report, HypothesisReport, Verdict};
use crate::{Error, Result};

/// Knobs for the transfer scan and the verdict thresholds. The divergence
/// bar and the convergence tolerance are two decades apart on purpose: the
/// band between them is reported as undecided instead of being claimed
/// either way.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    /// Every frequency up to here enters the dense prefix.
    pub dense_horizon: u64,
    /// Horizon handed to the three coefficient-envelope checks.
    pub h_horizon: u64,
    /// Multiplier cap per resonant level; members beyond it are flagged as
    /// truncated, never silently dropped.
    pub mult_cap: u64,
    /// log2 of the squared-transfer size that counts as divergence evidence.
    pub bar_log2: f64,
    /// log2 of the level mass that still passes as convergent.
    pub converge_tol_log2: f64,
    /// Dense partial sums must move less than this across the last octave.
    pub dense_tail_tol: f64,
    /// A non-decaying level series must end at least this high (log2 of the
    /// squared transfer) to support a single-frequency verdict.
    pub single_floor_log2: f64,
    /// Minimum summed mass of the deepest trend levels for a
    /// multi-frequency verdict.
    pub multi_mass_floor: f64,
    /// Trend length required before a decreasing-ratio tail means anything.
    pub min_trend_levels: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            dense_horizon: 4096,
            h_horizon: 4096,
            mult_cap: 128,
            bar_log2: (1e-2f64).log2(),
            converge_tol_log2: (1e-4f64).log2(),
            dense_tail_tol: 1e-8,
            single_floor_log2: (1e-3f64).log2(),
            multi_mass_floor: 0.05,
            min_trend_levels: 3,
        }
    }
}

/// Where a frequency sits relative to the resonant structure of alpha.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FrequencyClassM {
    /// A return denominator q_n that is itself a resonant member.
    BestReturn { level: usize },
    /// A resonant member l q_n with l >= 2.
    Multiple { level: usize, l: u64 },
    /// Outside the resonant set.
    Generic,
}

/// One frequency of the transfer series. Magnitudes are carried in log2
/// alongside clamped f64 values so that rows like `psi` at `2^-838860803`
/// over a norm of the same scale stay meaningful.
#[derive(Clone, Debug, Serialize)]
pub struct TransferEntry {
    pub m_dec: String,
    pub m_u64: Option<u64>,
    pub m_log2: f64,
    pub class: FrequencyClassM,
    /// log2 |c_m|.
    pub c_log2: f64,
    /// log2 dist(m alpha, Z).
    pub norm_log2: f64,
    /// log2 of |c_m| / dist(m alpha, Z), the return ratio.
    pub ratio_log2: f64,
    pub psi_sq_log2: f64,
    /// exp2 of the above, saturated to f64 range.
    pub psi_sq: f64,
    /// Complex transfer value where representable, else zero.
    pub psi_re: f64,
    pub psi_im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct L2Checkpoint {
    pub horizon_dec: String,
    /// Running sum of 2 |psi_m|^2 over all entries up to this horizon.
    pub partial: f64,
}

/// Mass summary of one denominator level.
#[derive(Clone, Debug, Serialize)]
pub struct LevelEvidence {
    pub level: usize,
    pub q_log2: f64,
    /// Coefficient-bearing members seen at this level.
    pub members: usize,
    pub max_psi_sq_log2: f64,
    /// Members past the dense prefix, whose mass the dense partial sums
    /// cannot see.
    pub beyond_members: usize,
    pub max_beyond_psi_sq_log2: f64,
}

/// The transfer series at a finite horizon: dense prefix plus resonant
/// members beyond it, with union checkpoints in scan order.
#[derive(Clone, Debug, Serialize)]
pub struct TransferCoefficients {
    pub dense_horizon: u64,
    pub dense: Vec<TransferEntry>,
    pub sparse: Vec<TransferEntry>,
    pub checkpoints: Vec<L2Checkpoint>,
    pub levels: Vec<LevelEvidence>,
    /// Bound on the dense-tail mass `sum_{m > H, m not resonant} 2 psi_m^2`.
    pub dense_tail_sq: f64,
    /// Some level had members past the multiplier cap (or past exact
    /// storage); the scan is a certified prefix, not a census.
    pub member_scan_truncated: bool,
}

impl TransferCoefficients {
    pub fn rows(&self) -> impl Iterator<Item = &TransferEntry> {
        self.dense.iter().chain(self.sparse.iter())
    }
}

/// A resonant member in level form.
#[derive(Clone, Debug)]
pub struct ResonantMember {
    pub level: usize,
    pub multiplier: u64,
    pub m: StoredInt,
    pub m_log2: f64,
    /// log2 of dist(m alpha, Z) = multiplier * theta_level, exact because a
    /// member's residue cannot wrap.
    pub norm_log2: f64,
}

#[derive(Clone, Debug)]
pub struct MemberScan {
    pub members: Vec<ResonantMember>,
    pub truncated: bool,
}

/// Enumerates resonant members `l q_n` with value above `above`, walking
/// each level until its first failure; along one level the defining
/// quantity `2 l^3 q_n^2 theta_n` increases, so the walk is exhaustive up
/// to `mult_cap`. `max_value` bounds the scan for comparisons against a
/// value-horizon enumeration; members beyond u64 are past any such cap.
pub fn resonant_members(
    alpha: &RotationNumber,
    above: u64,
    mult_cap: u64,
    max_value: Option<u64>,
) -> Result<MemberScan> {
    let mut members = Vec::new();
    let mut truncated = false;
    for n in 0..alpha.theta_levels() {
        let q = alpha.q(n).expect("theta level implies materialized q");
        // a_1 = 1 duplicates the unit denominator; keep the higher level
        if let Some(qn1) = alpha.q(n + 1) {
            if stored_same(q, qn1) {
                continue;
            }
        }
        let ql2 = q.log2();
        let tl2 = alpha.theta(n)?.value.log2_f64();
        let mut l = 1u64;
        loop {
            if l > mult_cap {
                truncated = true;
                break;
            }
            let ll2 = (l as f64).log2();
            // log2 of 2 l^3 q_n^2 theta_n, the membership quantity
            let margin = 1.0 + 3.0 * ll2 + 2.0 * ql2 + tl2;
            let is_member = if margin <= -1e-6 {
                true
            } else if margin >= 1e-6 {
                false
            } else {
                match q.full() {
                    Some(qb) => alpha.in_resonant_set(&(qb * l))?,
                    None => {
                        return Err(Error::PrecisionExhausted {
                            context: format!(
                                "resonance margin at level {n}, multiple {l} needs exact storage"
                            ),
                            prec: 0,
                        })
                    }
                }
            };
            if !is_member {
                break;
            }
            let m_u64 = q.to_u64().and_then(|v| v.checked_mul(l));
            if let Some(cap) = max_value {
                match m_u64 {
                    Some(v) if v <= cap => {}
                    _ => break,
                }
            }
            let inside_prefix = matches!(m_u64, Some(v) if v <= above);
            if !inside_prefix {
                let m = if l == 1 {
                    q.clone()
                } else if let Some(qb) = q.full() {
                    StoredInt::new(qb * l, u64::MAX)
                } else {
                    // cannot form the value of a multiple of a summarized
                    // denominator; everything deeper on this level is noted
                    truncated = true;
                    break;
                };
                members.push(ResonantMember {
                    level: n,
                    multiplier: l,
                    m,
                    m_log2: ql2 + ll2,
                    norm_log2: ll2 + tl2,
                });
            }
            l += 1;
        }
    }
    Ok(MemberScan { members, truncated })
}

/// log2 of 2 sin(pi x) for x = 2^l, x in (0, 1/2]; the small-angle branch
/// avoids evaluating sin below f64 range.
fn log2_two_sin_pi(l: f64) -> f64 {
    if l == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if l < -30.0 {
        (2.0 * PI).log2() + l
    } else {
        let x = l.exp2();
        (2.0 * (PI * x).sin()).log2()
    }
}

/// exp2 saturated to f64 range instead of overflowing to inf, so report
/// fields stay JSON-clean.
fn exp2_sat(l: f64) -> f64 {
    if l == f64::NEG_INFINITY || l < -1070.0 {
        0.0
    } else if l > 1023.0 {
        f64::MAX
    } else {
        l.exp2()
    }
}

fn sat_add(acc: f64, t: f64) -> f64 {
    let s = acc + t;
    if s.is_finite() {
        s
    } else {
        f64::MAX
    }
}

/// Member test and level attribution for a dense frequency: a member below
/// the dense horizon must be a multiple of some materialized denominator
/// whose scaled norm matches the measured one.
fn annotate_dense(alpha: &RotationNumber, m: u64, norm_log2: f64) -> FrequencyClassM {
    // membership: 2 m^2 dist <= 1, in log form with slack on the member side
    if 1.0 + 2.0 * (m as f64).log2() + norm_log2 > 1e-6 {
        return FrequencyClassM::Generic;
    }
    for n in (0..alpha.levels()).rev() {
        let Some(q) = alpha.q_u64(n) else { continue };
        if q == 0 || q > m || m % q != 0 {
            continue;
        }
        let l = m / q;
        let Ok(theta) = alpha.theta(n) else { continue };
        let expect = (l as f64).log2() + theta.value.log2_f64();
        if (norm_log2 - expect).abs() < 0.5 {
            return if l == 1 {
                FrequencyClassM::BestReturn { level: n }
            } else {
                FrequencyClassM::Multiple { level: n, l }
            };
        }
    }
    FrequencyClassM::Generic
}

fn guard_resonant_alpha(alpha: &RotationNumber, roof: &FourierRoof) -> Result<()> {
    if let Some(ra) = roof.resonant_alpha() {
        let same = std::ptr::eq(ra.as_ref(), alpha)
            || (ra.levels() == alpha.levels()
                && ra.alpha_f64().to_bits() == alpha.alpha_f64().to_bits());
        if !same {
            return Err(Error::InvalidInput(
                "resonant roof is bound to a different rotation number".into(),
            ));
        }
    }
    Ok(())
}

/// Computes the transfer series to the configured horizon: exact complex
/// values on the dense prefix, log-space magnitudes on the resonant members
/// beyond it.
pub fn formal_transfer(
    alpha: &RotationNumber,
    roof: &FourierRoof,
    opts: &ClassifyOptions,
) -> Result<TransferCoefficients> {
    guard_resonant_alpha(alpha, roof)?;
    let h = opts.dense_horizon;

    let dense_opt: Vec<Option<TransferEntry>> =
        exec::try_map_indexed(h as usize, |i| -> Result<Option<TransferEntry>> {
            let m = i as u64 + 1;
            let c_log2 = roof.lmag(m);
            if c_log2 == f64::NEG_INFINITY {
                return Ok(None);
            }
            let s = alpha.srez_i64(m as i64)?;
            let s_f64 = s.value.to_f64();
            let norm_log2 = s.value.log2_f64();
            let two_sin_log2 = log2_two_sin_pi(norm_log2);
            let psi_sq_log2 = 2.0 * (c_log2 - two_sin_log2);

            // psi = -i c e^{-i pi s} / (2 sin pi s), with s the signed residue
            let (cre, cim) = roof.coeff(m as i64);
            let (mut psi_re, mut psi_im) = (0.0, 0.0);
            let two_sin = 2.0 * (PI * s_f64).sin();
            if two_sin != 0.0 && (cre != 0.0 || cim != 0.0) {
                let (cp, sp) = ((PI * s_f64).cos(), (PI * s_f64).sin());
                let t_re = cre * cp + cim * sp;
                let t_im = cim * cp - cre * sp;
                psi_re = t_im / two_sin;
                psi_im = -t_re / two_sin;
            }
            Ok(Some(TransferEntry {
                m_dec: m.to_string(),
                m_u64: Some(m),
                m_log2: (m as f64).log2(),
                class: annotate_dense(alpha, m, norm_log2),
                c_log2,
                norm_log2,
                ratio_log2: c_log2 - norm_log2,
                psi_sq_log2,
                psi_sq: exp2_sat(psi_sq_log2),
                psi_re,
                psi_im,
            }))
        })?;
    let dense: Vec<TransferEntry> = dense_opt.into_iter().flatten().collect();

    let scan = resonant_members(alpha, h, opts.mult_cap, None)?;
    let mut sparse = Vec::with_capacity(scan.members.len());
    for mem in &scan.members {
        let c_log2 = roof.lmag_member(mem.level, mem.multiplier, &mem.m);
        let psi_sq_log2 = 2.0 * (c_log2 - log2_two_sin_pi(mem.norm_log2));
        sparse.push(TransferEntry {
            m_dec: mem.m.to_decimal_capped(40),
            m_u64: mem.m.to_u64(),
            m_log2: mem.m_log2,
            class: if mem.multiplier == 1 {
                FrequencyClassM::BestReturn { level: mem.level }
            } else {
                FrequencyClassM::Multiple { level: mem.level, l: mem.multiplier }
            },
            c_log2,
            norm_log2: mem.norm_log2,
            ratio_log2: c_log2 - mem.norm_log2,
            psi_sq_log2,
            psi_sq: exp2_sat(psi_sq_log2),
            psi_re: 0.0,
            psi_im: 0.0,
        });
    }

    // union checkpoints: dense octaves, then one per member in scan order
    let mut checkpoints = Vec::new();
    let mut acc = 0.0;
    {
        let mut bound = 64u64.min(h);
        let mut it = dense.iter().peekable();
        loop {
            while let Some(e) = it.peek() {
                if e.m_u64.unwrap_or(u64::MAX) <= bound {
                    acc = sat_add(acc, 2.0 * e.psi_sq);
                    it.next();
                } else {
                    break;
                }
            }
            checkpoints.push(L2Checkpoint { horizon_dec: bound.to_string(), partial: acc });
            if bound >= h {
                break;
            }
            bound = (bound * 2).min(h);
        }
    }
    let dense_partial = acc;
    for e in &sparse {
        acc = sat_add(acc, 2.0 * e.psi_sq);
        checkpoints.push(L2Checkpoint { horizon_dec: e.m_dec.clone(), partial: acc });
    }
    let _ = dense_partial;

    // per-level mass summary over both row sets
    let mut lvl: BTreeMap<usize, LevelEvidence> = BTreeMap::new();
    for (e, beyond) in dense
        .iter()
        .map(|e| (e, false))
        .chain(sparse.iter().map(|e| (e, true)))
    {
        let level = match e.class {
            FrequencyClassM::BestReturn { level } => level,
            FrequencyClassM::Multiple { level, .. } => level,
            FrequencyClassM::Generic => continue,
        };
        if e.c_log2 == f64::NEG_INFINITY {
            continue;
        }
        let q_log2 = alpha.q(level).map(|q| q.log2()).unwrap_or(f64::NAN);
        let ev = lvl.entry(level).or_insert(LevelEvidence {
            level,
            q_log2,
            members: 0,
            max_psi_sq_log2: f64::NEG_INFINITY,
            beyond_members: 0,
            max_beyond_psi_sq_log2: f64::NEG_INFINITY,
        });
        ev.members += 1;
        ev.max_psi_sq_log2 = ev.max_psi_sq_log2.max(e.psi_sq_log2);
        if beyond {
            ev.beyond_members += 1;
            ev.max_beyond_psi_sq_log2 = ev.max_beyond_psi_sq_log2.max(e.psi_sq_log2);
        }
    }

    Ok(TransferCoefficients {
        dense_horizon: h,
        dense,
        sparse,
        checkpoints,
        levels: lvl.into_values().collect(),
        dense_tail_sq: roof.quartic_tail_sq(h),
        member_scan_truncated: scan.truncated,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum L2Verdict {
    Converged,
    Diverging,
    Undecided,
}

#[derive(Clone, Debug, Serialize)]
pub struct L2Report {
    pub verdict: L2Verdict,
    pub dense_partial: f64,
    /// Movement of the dense partial sum across its last octave.
    pub dense_last_increment: f64,
    pub dense_tail_sq: f64,
    pub dense_cauchy: bool,
    /// Running total including resonant members, saturated.
    pub total_partial: f64,
    pub deepest_beyond_level: Option<usize>,
    pub deepest_beyond_psi_sq_log2: f64,
    /// Members past the dense prefix whose squared transfer clears the bar.
    pub witnesses: Vec<String>,
    pub notes: Vec<String>,
}

/// Convergence verdict from the union evidence. Divergence is claimed only
/// from the deepest level that shows members past the dense prefix, so a
/// roof whose support simply stops cannot be misread as mixing; convergence
/// additionally needs the dense prefix to be Cauchy with a small analytic
/// tail.
pub fn l2_conjugacy_test(tc: &TransferCoefficients, opts: &ClassifyOptions) -> L2Report {
    let mut notes = Vec::new();
    let dense_partial: f64 = tc.dense.iter().fold(0.0, |a, e| sat_add(a, 2.0 * e.psi_sq));
    let half = tc.dense_horizon / 2;
    let half_partial: f64 = tc
        .dense
        .iter()
        .take_while(|e| e.m_u64.unwrap_or(u64::MAX) <= half)
        .fold(0.0, |a, e| sat_add(a, 2.0 * e.psi_sq));
    let dense_last_increment = dense_partial - half_partial;
    let dense_cauchy =
        dense_last_increment <= opts.dense_tail_tol && tc.dense_tail_sq <= opts.dense_tail_tol;

    let total_partial = tc
        .checkpoints
        .last()
        .map(|c| c.partial)
        .unwrap_or(dense_partial);

    let deepest = tc
        .levels
        .iter()
        .rev()
        .find(|ev| ev.beyond_members > 0);
    let deepest_level = deepest.map(|ev| ev.level);
    let deepest_mass = deepest
        .map(|ev| ev.max_beyond_psi_sq_log2)
        .unwrap_or(f64::NEG_INFINITY);

    let witnesses: Vec<String> = tc
        .sparse
        .iter()
        .filter(|e| e.psi_sq_log2 >= opts.bar_log2)
        .map(|e| e.m_dec.clone())
        .collect();

    let all_beyond_small = tc
        .levels
        .iter()
        .all(|ev| ev.beyond_members == 0 || ev.max_beyond_psi_sq_log2 < opts.converge_tol_log2);

    let verdict = if deepest_mass >= opts.bar_log2 {
        L2Verdict::Diverging
    } else if dense_cauchy && all_beyond_small {
        L2Verdict::Converged
    } else {
        if !dense_cauchy {
            notes.push("dense partial sums still moving at the horizon".to_string());
        }
        if !all_beyond_small {
            notes.push(
                "resonant mass sits between the convergence tolerance and the divergence bar"
                    .to_string(),
            );
        }
        L2Verdict::Undecided
    };
    if tc.member_scan_truncated {
        notes.push("member scan truncated at the multiplier cap".to_string());
    }

    L2Report {
        verdict,
        dense_partial,
        dense_last_increment,
        dense_tail_sq: tc.dense_tail_sq,
        dense_cauchy,
        total_partial,
        deepest_beyond_level: deepest_level,
        deepest_beyond_psi_sq_log2: deepest_mass,
        witnesses,
        notes,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralClass {
    /// An L2 conjugacy to the rigid suspension exists (discrete spectrum).
    DiscreteConjugate,
    /// Divergent transfer concentrated on one frequency scale per level.
    WeakMixingSingle,
    /// Divergent transfer spread over levels with decreasing, non-summable
    /// return ratios.
    WeakMixingMulti,
    Undecided,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub class: SpectralClass,
    pub hypotheses: HypothesisReport,
    pub l2: L2Report,
    pub levels: Vec<LevelEvidence>,
    pub notes: Vec<String>,
}

/// Trend over the level series of a diverging transfer. A series that does
/// not decay and ends high is the single-frequency picture (one return
/// scale dominates ever after); a strictly decreasing series that still
/// carries mass at the deepest levels is the multi-frequency picture.
fn trend_class(
    levels: &[LevelEvidence],
    opts: &ClassifyOptions,
    notes: &mut Vec<String>,
) -> SpectralClass {
    let series: Vec<(usize, f64)> = levels
        .iter()
        .filter(|ev| ev.max_psi_sq_log2 > f64::NEG_INFINITY)
        .map(|ev| (ev.level, ev.max_psi_sq_log2))
        .collect();
    if series.len() < 2 {
        notes.push("too few coefficient-bearing levels for a trend".to_string());
        return SpectralClass::Undecided;
    }
    let last = series.last().expect("nonempty").1;
    let strictly_decreasing = series.windows(2).all(|w| w[1].1 < w[0].1 - 1e-9);
    if !strictly_decreasing {
        if last >= opts.single_floor_log2 {
            return SpectralClass::WeakMixingSingle;
        }
        notes.push("level masses neither settle nor decay".to_string());
        return SpectralClass::Undecided;
    }
    if series.len() >= opts.min_trend_levels {
        let mass: f64 = series
            .iter()
            .rev()
            .take(opts.min_trend_levels)
            .map(|&(_, s)| 2.0 * exp2_sat(s))
            .sum();
        if mass >= opts.multi_mass_floor {
            return SpectralClass::WeakMixingMulti;
        }
        notes.push("decreasing level masses with a vanishing tail".to_string());
    } else {
        notes.push("too few levels to certify a decreasing-ratio tail".to_string());
    }
    SpectralClass::Undecided
}

/// Full classification at the configured horizons. Mixing verdicts are
/// downgraded to undecided when the coefficient-envelope hypotheses do not
/// all pass, since the dichotomy is only certified under them; a coboundary
/// found by the transfer test needs no such backing.
pub fn classify(
    alpha: &RotationNumber,
    roof: &FourierRoof,
    opts: &ClassifyOptions,
) -> Result<ClassificationReport> {
    let hypotheses = roof.check_hypotheses(opts.h_horizon);
    let mut notes = Vec::new();

    if roof.is_constant() {
        notes.push("constant roof: the special flow is a rigid suspension".to_string());
        return Ok(ClassificationReport {
            class: SpectralClass::DiscreteConjugate,
            hypotheses,
            l2: L2Report {
                verdict: L2Verdict::Converged,
                dense_partial: 0.0,
                dense_last_increment: 0.0,
                dense_tail_sq: 0.0,
                dense_cauchy: true,
                total_partial: 0.0,
                deepest_beyond_level: None,
                deepest_beyond_psi_sq_log2: f64::NEG_INFINITY,
                witnesses: vec![],
                notes: vec![],
            },
            levels: vec![],
            notes,
        });
    }

    let tc = formal_transfer(alpha, roof, opts)?;
    let l2 = l2_conjugacy_test(&tc, opts);

    let mut class = match l2.verdict {
        L2Verdict::Converged => SpectralClass::DiscreteConjugate,
        L2Verdict::Undecided => {
            notes.push("transfer evidence inconclusive at this horizon".to_string());
            SpectralClass::Undecided
        }
        L2Verdict::Diverging => trend_class(&tc.levels, opts, &mut notes),
    };

    if matches!(
        class,
        SpectralClass::WeakMixingSingle | SpectralClass::WeakMixingMulti
    ) && !hypotheses.all_pass()
    {
        notes.push(
            "envelope hypotheses unverified at this horizon; mixing verdict downgraded"
                .to_string(),
        );
        class = SpectralClass::Undecided;
    }

    Ok(ClassificationReport {
        class,
        hypotheses,
        l2,
        levels: tc.levels,
        notes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub grid_log2: u32,
    pub sup_residual: f64,
    /// What the dense truncation of psi can leave behind: the l1 tail of the
    /// roof past the dense horizon.
    pub truncation_bound: f64,
    pub float_slack: f64,
    pub pass: bool,
}

/// Checks the coboundary equation `phi(x) - c_0 = psi(x + alpha) - psi(x)`
/// on a grid, with phi summed well past the transfer's dense horizon so the
/// residual actually measures the truncation, not a shared one.
pub fn verify_cohomology_residual(
    alpha: &RotationNumber,
    roof: &FourierRoof,
    tc: &TransferCoefficients,
    grid_log2: u32,
) -> Result<ResidualReport> {
    let n = 1usize << grid_log2;
    let a = alpha.alpha_f64();
    let c0 = roof.c0();
    let phi_horizon = tc.dense_horizon.max(4096);
    let rows: Vec<(f64, f64, f64)> = tc
        .dense
        .iter()
        .filter(|e| e.psi_re != 0.0 || e.psi_im != 0.0)
        .map(|e| (e.m_u64.expect("dense row") as f64, e.psi_re, e.psi_im))
        .collect();
    let psi_at = |x: f64| -> f64 {
        rows.iter()
            .map(|&(m, re, im)| {
                let ang = 2.0 * PI * m * x;
                2.0 * (re * ang.cos() - im * ang.sin())
            })
            .sum()
    };
    let residuals: Vec<f64> = exec::try_map_indexed(n, |i| -> Result<f64> {
        let x = (i as f64 + 0.5) / n as f64;
        let shifted = (x + a).fract();
        let phi = roof.evaluate(x, phi_horizon)?;
        Ok((phi - c0 - (psi_at(shifted) - psi_at(x))).abs())
    })?;
    let sup_residual = residuals.into_iter().fold(0.0f64, f64::max);
    let truncation_bound = roof.tail_l1(tc.dense_horizon);
    let psi_l1: f64 = rows.iter().map(|&(_, re, im)| 2.0 * re.hypot(im)).sum();
    let float_slack = 1e-7 * (1.0 + psi_l1);
    Ok(ResidualReport {
        grid_log2,
        sup_residual,
        truncation_bound,
        float_slack,
        pass: sup_residual <= truncation_bound + float_slack,
    })
}

/// A mode kept by a reduction, in level form.
#[derive(Clone, Debug, Serialize)]
pub struct ReducedMode {
    pub level: usize,
    pub multiplier: u64,
    pub m_dec: String,
    pub m_u64: Option<u64>,
    pub m_log2: f64,
    pub c_log2: f64,
    pub norm_log2: f64,
    pub ratio_log2: f64,
    pub psi_sq_log2: f64,
}

fn reduced_from_entry(e: &TransferEntry) -> Option<ReducedMode> {
    let (level, multiplier) = match e.class {
        FrequencyClassM::BestReturn { level } => (level, 1),
        FrequencyClassM::Multiple { level, l } => (level, l),
        FrequencyClassM::Generic => return None,
    };
    Some(ReducedMode {
        level,
        multiplier,
        m_dec: e.m_dec.clone(),
        m_u64: e.m_u64,
        m_log2: e.m_log2,
        c_log2: e.c_log2,
        norm_log2: e.norm_log2,
        ratio_log2: e.ratio_log2,
        psi_sq_log2: e.psi_sq_log2,
    })
}

/// First reduction: restrict the roof to the resonant set. Everything else
/// is a coboundary whose transfer obeys `|psi_m| < m^2 |c_m| / 2` off the
/// set, giving an explicit L2 bound on the discarded part.
#[derive(Clone, Debug, Serialize)]
pub struct MReduction {
    pub kept: Vec<ReducedMode>,
    pub discarded_count: usize,
    /// Lemma-form bound `sum 2 (m^2 |c_m| / 2)^2` over discarded modes,
    /// including the analytic tail past the dense horizon.
    pub discarded_l2_bound: f64,
    /// The discarded transfer mass actually measured, `sum 2 psi_m^2`.
    pub discarded_l2_exact: f64,
    /// l1 size of the discarded transfer, bounding the sup norm of the
    /// coboundary correction.
    pub discarded_transfer_l1: f64,
    pub horizon: u64,
}

#[allow(non_snake_case)]
pub fn reduce_to_M(roof: &FourierRoof, tc: &TransferCoefficients) -> MReduction {
    let mut kept = Vec::new();
    let mut discarded_count = 0usize;
    let mut bound = roof.quartic_tail_sq(tc.dense_horizon);
    let mut exact = 0.0;
    let mut l1 = 0.0;
    for e in &tc.dense {
        match reduced_from_entry(e) {
            Some(r) => kept.push(r),
            None => {
                discarded_count += 1;
                let m = e.m_u64.expect("dense row") as f64;
                let c = exp2_sat(e.c_log2);
                bound += (m * m * c) * (m * m * c) / 2.0;
                exact = sat_add(exact, 2.0 * e.psi_sq);
                l1 = sat_add(l1, 2.0 * exp2_sat(e.psi_sq_log2 / 2.0));
            }
        }
    }
    for e in &tc.sparse {
        if e.c_log2 > f64::NEG_INFINITY {
            if let Some(r) = reduced_from_entry(e) {
                kept.push(r);
            }
        }
    }
    MReduction {
        kept,
        discarded_count,
        discarded_l2_bound: bound,
        discarded_l2_exact: exact,
        discarded_transfer_l1: l1,
        horizon: tc.dense_horizon,
    }
}

/// Second reduction: fold the multiples `l q_n`, `l >= 2`, into a
/// coboundary using the square-envelope constants, and keep only the
/// denominator levels with `q_{n+1} > q_n^2`. Requires the square envelope
/// to hold and a non-growing return-ratio series; without those the folded
/// mass has no finite bound.
#[derive(Clone, Debug, Serialize)]
pub struct ReturnReduction {
    pub kept: Vec<ReducedMode>,
    /// Bound `sum_n 2 C_{q_n} r_n^2 / 16` on the folded multiples.
    pub dropped_multiples_l2: f64,
    /// Measured transfer mass on levels failing the growth condition.
    pub dropped_slow_l2: f64,
    pub slow_levels: Vec<usize>,
    pub k3_log2: f64,
    pub growth: Vec<(usize, bool)>,
}

pub fn reduce_to_best_returns(
    alpha: &RotationNumber,
    roof: &FourierRoof,
    mred: &MReduction,
    h1: &H1Report,
) -> Result<ReturnReduction> {
    if h1.verdict != Verdict::Pass {
        return Err(Error::CertificateUnsatisfiable(
            "square-envelope check did not pass; multiples cannot be folded".into(),
        ));
    }
    // group by level; track the l = 1 ratio series for the K3 guard
    let mut by_level: BTreeMap<usize, Vec<&ReducedMode>> = BTreeMap::new();
    for r in &mred.kept {
        by_level.entry(r.level).or_default().push(r);
    }
    let ratio_series: Vec<(usize, f64)> = by_level
        .iter()
        .filter_map(|(&n, rs)| {
            rs.iter()
                .filter(|r| r.multiplier == 1 && r.c_log2 > f64::NEG_INFINITY)
                .map(|r| (n, r.ratio_log2))
                .next()
        })
        .collect();
    if ratio_series.is_empty() {
        return Ok(ReturnReduction {
            kept: vec![],
            dropped_multiples_l2: 0.0,
            dropped_slow_l2: 0.0,
            slow_levels: vec![],
            k3_log2: f64::NEG_INFINITY,
            growth: vec![],
        });
    }
    let (last_level, last_ratio) = *ratio_series.last().expect("nonempty");
    let earlier_max = ratio_series
        .iter()
        .filter(|&&(n, _)| n != last_level)
        .map(|&(_, r)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    if ratio_series.len() > 1 && last_ratio > earlier_max + 2.0 {
        return Err(Error::CertificateUnsatisfiable(
            "return ratios grow with depth; no uniform coefficient-to-norm bound".into(),
        ));
    }
    let k3_log2 = ratio_series
        .iter()
        .map(|&(_, r)| r)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut kept = Vec::new();
    let mut dropped_multiples_l2 = 0.0;
    let mut dropped_slow_l2 = 0.0;
    let mut slow_levels = Vec::new();
    let mut growth = Vec::new();
    for (&n, rs) in &by_level {
        let grow = level_growth_ok(alpha, n)?;
        growth.push((n, grow));
        let lead = rs
            .iter()
            .find(|r| r.multiplier == 1 && r.c_log2 > f64::NEG_INFINITY);
        if !grow {
            slow_levels.push(n);
            for r in rs {
                dropped_slow_l2 = sat_add(dropped_slow_l2, 2.0 * exp2_sat(r.psi_sq_log2));
            }
            continue;
        }
        if rs.iter().any(|r| r.multiplier >= 2 && r.c_log2 > f64::NEG_INFINITY) {
            let c_n = square_envelope_at(roof, alpha, n, h1)?;
            if let Some(r1) = lead {
                dropped_multiples_l2 += 2.0 * c_n * exp2_sat(2.0 * r1.ratio_log2) / 16.0;
            }
        }
        if let Some(r1) = lead {
            kept.push((*r1).clone());
        }
    }
    Ok(ReturnReduction {
        kept,
        dropped_multiples_l2,
        dropped_slow_l2,
        slow_levels,
        k3_log2,
        growth,
    })
}

/// Whether `q_{n+1} > q_n^2`, decided exactly when both are stored in full
/// and by log2 with a half-bit guard band otherwise.
fn level_growth_ok(alpha: &RotationNumber, n: usize) -> Result<bool> {
    let qn = alpha.q(n).ok_or_else(|| Error::QuotientsExhausted {
        level: n,
        reason: "growth test needs the level".into(),
    })?;
    let qn1 = alpha.q(n + 1).ok_or_else(|| Error::QuotientsExhausted {
        level: n + 1,
        reason: "growth test needs the next level".into(),
    })?;
    if let (Some(a), Some(b)) = (qn.full(), qn1.full()) {
        return Ok(*b > a * a);
    }
    let margin = qn1.log2() - 2.0 * qn.log2();
    if margin > 0.5 {
        Ok(true)
    } else if margin < -0.5 {
        Ok(false)
    } else {
        Err(Error::PrecisionExhausted {
            context: format!("growth test at level {n} is borderline under summarized storage"),
            prec: 0,
        })
    }
}

/// The square-envelope constant at `q_n`: from the envelope table when the
/// level is inside its horizon, else zero for a support with certified
/// cross-divisibility cleanliness, else a direct multiple scan.
fn square_envelope_at(
    roof: &FourierRoof,
    alpha: &RotationNumber,
    n: usize,
    h1: &H1Report,
) -> Result<f64> {
    if let Some(q) = alpha.q_u64(n) {
        if let Some(&(_, c)) = h1.c_table.iter().find(|&&(m, _)| m == q) {
            return Ok(c);
        }
        let lm = roof.lmag(q);
        if lm > f64::NEG_INFINITY {
            let sums = roof.inner_sums(q, lm);
            return Ok(sums.square);
        }
    }
    if roof.support_cross_divisibility_clean() == Some(true) {
        return Ok(0.0);
    }
    Err(Error::PrecisionExhausted {
        context: format!("no square-envelope constant available at level {n}"),
        prec: 0,
    })
}

fn class_str(c: &FrequencyClassM) -> String {
    match c {
        FrequencyClassM::BestReturn { level } => format!("best_return:{level}"),
        FrequencyClassM::Multiple { level, l } => format!("multiple:{level}x{l}"),
        FrequencyClassM::Generic => "generic".to_string(),
    }
}

/// CSV of the full transfer table: frequency, class, and the log2
/// magnitudes that stay finite at every scale this crate reaches.
pub fn transfer_csv(tc: &TransferCoefficients) -> String {
    let mut s = String::from("m,class,c_log2,norm_log2,ratio_log2,psi_sq\n");
    for e in tc.rows() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.m_dec,
            class_str(&e.class),
            e.c_log2,
            e.norm_log2,
            e.ratio_log2,
            e.psi_sq
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roof::{make_dyadic_roof, make_resonant_roof, make_table_roof};
    use num_bigint::BigUint;
    use std::sync::{Arc, OnceLock};

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
    fn golden_dyadic_is_a_coboundary() {
        let alpha = golden();
        let roof = make_dyadic_roof();
        let opts = ClassifyOptions::default();
        let tc = formal_transfer(alpha, &roof, &opts).unwrap();
        let l2 = l2_conjugacy_test(&tc, &opts);
        assert_eq!(l2.verdict, L2Verdict::Converged);
        assert!(l2.dense_cauchy);
        assert!(
            l2.dense_partial > 0.25 && l2.dense_partial < 0.28,
            "dense partial {}",
            l2.dense_partial
        );
        assert!(l2.dense_last_increment < 1e-12);
        assert!(tc.sparse.is_empty(), "golden admits no resonant member above 1");

        let report = classify(alpha, &roof, &opts).unwrap();
        assert_eq!(report.class, SpectralClass::DiscreteConjugate);

        let resid = verify_cohomology_residual(alpha, &roof, &tc, 9).unwrap();
        assert!(resid.pass, "sup {} bound {}", resid.sup_residual, resid.truncation_bound);
        assert!(resid.sup_residual < 1e-8);
    }

    #[test]
    fn golden_reductions_keep_only_the_unit_frequency() {
        let alpha = golden();
        let roof = make_dyadic_roof();
        let opts = ClassifyOptions::default();
        let tc = formal_transfer(alpha, &roof, &opts).unwrap();
        let mred = reduce_to_M(&roof, &tc);
        assert_eq!(mred.kept.len(), 1);
        assert_eq!(mred.kept[0].m_u64, Some(1));
        assert_eq!(mred.discarded_count, 4095);
        assert!(mred.discarded_l2_exact <= mred.discarded_l2_bound);
        assert!(mred.discarded_l2_bound.is_finite());

        let h1 = roof.check_h1(opts.h_horizon);
        let rred = reduce_to_best_returns(alpha, &roof, &mred, &h1).unwrap();
        assert_eq!(rred.kept.len(), 1);
        assert_eq!(rred.dropped_multiples_l2, 0.0);
        assert!(rred.slow_levels.is_empty());
    }

    #[test]
    fn membership_partition_matches_engine() {
        let alpha = golden();
        let roof = make_dyadic_roof();
        let opts = ClassifyOptions {
            dense_horizon: 256,
            ..ClassifyOptions::default()
        };
        let tc = formal_transfer(alpha, &roof, &opts).unwrap();
        for e in &tc.dense {
            let m = BigUint::from(e.m_u64.unwrap());
            let member = alpha.in_resonant_set(&m).unwrap();
            assert_eq!(
                member,
                e.class != FrequencyClassM::Generic,
                "membership mismatch at m = {}",
                e.m_dec
            );
        }
    }

    #[test]
    fn pow2_liouville_dyadic_goes_single_frequency() {
        let alpha = pow2l();
        let roof = make_dyadic_roof();
        let opts = ClassifyOptions::default();
        let tc = formal_transfer(alpha, &roof, &opts).unwrap();

        // the small members sit inside the dense prefix with their levels
        let by_m = |m: u64| tc.dense.iter().find(|e| e.m_u64 == Some(m)).unwrap();
        assert_eq!(by_m(25).class, FrequencyClassM::BestReturn { level: 3 });
        assert_eq!(by_m(50).class, FrequencyClassM::Multiple { level: 3, l: 2 });
        assert_eq!(by_m(1).class, FrequencyClassM::BestReturn { level: 1 });

        // beyond the prefix, the transfer at q_4 is enormous even though
        // both the coefficient and the norm are around 2^-838860803:
        // theta_4 ~ 2^-(q_4 + log2 q_4) puts psi^2 near
        // 2 (log2 q_4 - log2 2pi) = 53.98
        let l2 = l2_conjugacy_test(&tc, &opts);
        assert_eq!(l2.verdict, L2Verdict::Diverging);
        assert_eq!(l2.deepest_beyond_level, Some(4));
        assert!(
            l2.deepest_beyond_psi_sq_log2 > 52.0 && l2.deepest_beyond_psi_sq_log2 < 56.0,
            "level-4 transfer log2 {}",
            l2.deepest_beyond_psi_sq_log2
        );
        assert!(l2.witnesses.iter().any(|w| w == "838860803"));

        let report = classify(alpha, &roof, &opts).unwrap();
        assert_eq!(report.class, SpectralClass::WeakMixingSingle);
        assert!(report.hypotheses.all_pass());

        // no uniform return-ratio bound: the second reduction must refuse
        let mred = reduce_to_M(&roof, &tc);
        let h1 = roof.check_h1(opts.h_horizon);
        let err = reduce_to_best_returns(alpha, &roof, &mred, &h1).unwrap_err();
        assert!(matches!(err, Error::CertificateUnsatisfiable(_)));
    }

    #[test]
    fn member_scan_matches_engine_enumeration() {
        let alpha = pow2l();
        let q4 = alpha.q_u64(4).unwrap();
        let scan = resonant_members(alpha, 0, 128, Some(2 * q4 + 1)).unwrap();
        let mut values: Vec<BigUint> = scan
            .members
            .iter()
            .map(|m| m.m.full().cloned().expect("small members are full"))
            .collect();
        values.push(BigUint::ZERO);
        values.sort();
        let expect = alpha.resonant_set(&BigUint::from(2 * q4 + 1)).unwrap();
        assert_eq!(values, expect);
        // the spec of the set: {0, 1, 3, 25 l for l <= 87, q_4, 2 q_4}
        assert_eq!(values.len(), 2 + 1 + 87 + 2);
    }

    #[test]
    fn resonant_roof_goes_multi_frequency() {
        let alpha = prime_cubic();
        let roof = make_resonant_roof(alpha, 1.5, 0.15, 4).unwrap();
        let opts = ClassifyOptions {
            h_horizon: 200_000,
            ..ClassifyOptions::default()
        };
        let tc = formal_transfer(alpha, &roof, &opts).unwrap();
        assert!(tc.dense.is_empty(), "support starts at q_4 = 100103");

        let with_mass: Vec<&TransferEntry> = tc
            .sparse
            .iter()
            .filter(|e| e.c_log2 > f64::NEG_INFINITY)
            .collect();
        assert_eq!(with_mass.len(), 6);
        for e in &with_mass {
            assert!(
                e.psi_sq > 0.028 && e.psi_sq < 0.036,
                "transfer mass at {} is {}",
                e.m_dec,
                e.psi_sq
            );
        }

        let l2 = l2_conjugacy_test(&tc, &opts);
        assert_eq!(l2.verdict, L2Verdict::Diverging);
        assert_eq!(l2.witnesses.len(), 6);

        let report = classify(alpha, &roof, &opts).unwrap();
        assert_eq!(report.class, SpectralClass::WeakMixingMulti, "notes: {:?}", report.notes);
        assert!(report.hypotheses.all_pass());

        let mred = reduce_to_M(&roof, &tc);
        assert_eq!(mred.kept.len(), 6);
        assert_eq!(mred.discarded_count, 0);
        assert_eq!(mred.discarded_l2_bound, 0.0);

        let h1 = roof.check_h1(opts.h_horizon);
        let rred = reduce_to_best_returns(alpha, &roof, &mred, &h1).unwrap();
        assert_eq!(rred.kept.len(), 6);
        assert_eq!(rred.dropped_multiples_l2, 0.0);
        assert!(rred.slow_levels.is_empty());
        assert!(
            rred.k3_log2 > 0.2 && rred.k3_log2 < 0.27,
            "k3 log2 {}",
            rred.k3_log2
        );
        assert!(rred.growth.iter().all(|&(_, g)| g));
    }

    #[test]
    fn dyadic_over_cubic_growth_is_still_a_coboundary() {
        // same rotation number as the multi fixture, but the roof's
        // coefficients at the deep denominators are ordinary 2^-m: every
        // return ratio collapses and the transfer converges
        let alpha = prime_cubic();
        let roof = make_dyadic_roof();
        let opts = ClassifyOptions::default();
        let report = classify(alpha, &roof, &opts).unwrap();
        assert_eq!(report.class, SpectralClass::DiscreteConjugate);
        assert_eq!(report.l2.verdict, L2Verdict::Converged);
        let deep = report
            .levels
            .iter()
            .filter(|ev| ev.beyond_members > 0)
            .count();
        assert!(deep >= 2, "deep members should be enumerated, got {deep}");
    }

    #[test]
    fn reduction_bound_dominates_brute_force() {
        let alpha = golden();
        let roof = make_table_roof(vec![
            (0, 1.0, 0.0),
            (1, 0.3, 0.0),
            (-1, 0.3, 0.0),
            (2, 0.1, 0.0),
            (-2, 0.1, 0.0),
            (3, 0.05, 0.02),
            (-3, 0.05, -0.02),
            (5, 0.01, 0.0),
            (-5, 0.01, 0.0),
        ])
        .unwrap();
        let opts = ClassifyOptions {
            dense_horizon: 64,
            ..ClassifyOptions::default()
        };
        let tc = formal_transfer(alpha, &roof, &opts).unwrap();
        let mred = reduce_to_M(&roof, &tc);
        assert_eq!(mred.kept.len(), 1);
        assert_eq!(mred.discarded_count, 3);

        // brute-force the discarded transfer mass from first principles
        let mut brute = 0.0;
        for &(m, c) in &[(2u64, 0.1f64), (3, 0.05f64.hypot(0.02)), (5, 0.01)] {
            let norm = alpha
                .srez_i64(m as i64)
                .unwrap()
                .value
                .to_f64()
                .abs();
            let psi = c / (2.0 * (PI * norm).sin());
            brute += 2.0 * psi * psi;
        }
        assert!((brute - mred.discarded_l2_exact).abs() < 1e-12 * brute.max(1.0));
        assert!(brute <= mred.discarded_l2_bound);
    }

    #[test]
    fn constant_roof_is_discrete() {
        let alpha = golden();
        let roof = make_table_roof(vec![(0, 2.5, 0.0)]).unwrap();
        let report = classify(alpha, &roof, &ClassifyOptions::default()).unwrap();
        assert_eq!(report.class, SpectralClass::DiscreteConjugate);
        assert!(report.notes.iter().any(|n| n.contains("constant")));
    }

    #[test]
    fn residual_tracks_the_truncation() {
        let alpha = golden();
        let roof = make_dyadic_roof();
        let coarse = ClassifyOptions {
            dense_horizon: 24,
            ..ClassifyOptions::default()
        };
        let fine = ClassifyOptions::default();
        let tc_coarse = formal_transfer(alpha, &roof, &coarse).unwrap();
        let tc_fine = formal_transfer(alpha, &roof, &fine).unwrap();
        let r_coarse = verify_cohomology_residual(alpha, &roof, &tc_coarse, 9).unwrap();
        let r_fine = verify_cohomology_residual(alpha, &roof, &tc_fine, 9).unwrap();
        assert!(r_coarse.pass && r_fine.pass);
        // the coarse truncation leaves a visible, bounded tail
        assert!(r_coarse.sup_residual > 1e-9);
        assert!(r_coarse.sup_residual <= r_coarse.truncation_bound + r_coarse.float_slack);
        assert!(r_fine.sup_residual < r_coarse.sup_residual);
    }

    #[test]
    fn transfer_csv_lists_every_row() {
        let alpha = golden();
        let roof = make_dyadic_roof();
        let opts = ClassifyOptions {
            dense_horizon: 32,
            ..ClassifyOptions::default()
        };
        let tc = formal_transfer(alpha, &roof, &opts).unwrap();
        let csv = transfer_csv(&tc);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 32);
        assert!(lines[0].starts_with("m,class,"));
        assert!(lines[1].starts_with("1,best_return:1,"));
    }
}
