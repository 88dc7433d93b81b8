//! Birkhoff sums S_m(x) = sum_{j<m} phi(x + j alpha) along rigidity times,
//! and the weak-mixing criterion built on them.
//!
//! Two evaluation routes cross-check each other. The direct route walks the
//! orbit and adds roof values; it is exact up to rounding but needs m steps.
//! The Fourier route multiplies each roof coefficient by its rotation
//! kernel (see [`kernel`]) and works for sum lengths far beyond any machine
//! integer, because kernels only consume residues mod 1.
//!
//! On top of the evaluators sit rigidity-time plans ([`plan`]): sequences
//! m_n built from inflated convergent denominators so that `||m_n alpha||`
//! shrinks while a chosen part of the roof keeps oscillating. The criterion
//! integrals over those plans ([`criterion`]) decide whether a candidate
//! eigenvalue survives; their behaviour as n grows separates flows with
//! point spectrum from weakly mixing ones.

pub mod criterion;
pub mod kernel;
pub mod plan;

pub use criterion::{
    criterion_integral, delta_n, range_derivative_measure, representative_gap,
    weak_mixing_certificate, CertVerdict, CertificateConfig, CriterionIntegral,
    CriterionOptions, DeltaEntry, DeltaReport, GapReport, LambdaReport, RangeMeasure,
    WeakMixingCertificate,
};
pub use kernel::{kernel_direct, kernel_of, Freq, Kernel};
pub use plan::{
    lambda_representative, make_diagnostic_plan, make_multi_frequency_plan,
    make_single_frequency_plan, modes_from_reduction, modes_from_roof, BirkhoffPlan, LambdaMode,
    LambdaRepresentative, PlanEntry, PlanKind,
};

use serde::Serialize;

use crate::diophantine::RotationNumber;
use crate::exec;
use crate::roof::FourierRoof;
use crate::{Error, Result};

/// Direct orbit evaluation of S_m at one point, with the roof truncated at
/// `horizon`. Compensated summation keeps the rounding error at the scale
/// of one term, not m terms.
pub fn birkhoff_direct(
    alpha: &RotationNumber,
    roof: &FourierRoof,
    m: u64,
    x: f64,
    horizon: u64,
) -> Result<f64> {
    let n = usize::try_from(m)
        .map_err(|_| Error::InvalidInput("direct summation needs a machine-sized m".into()))?;
    let vals = exec::try_map_indexed(n, |j| {
        let pos = alpha.position_f64(j as i64)?;
        roof.evaluate((x + pos).rem_euclid(1.0), horizon)
    })?;
    Ok(kahan_sum(&vals))
}

/// S_m evaluated on the dyadic grid x_i = i / 2^g through roof coefficients
/// and kernels. `value(i) = mean + osc[i]`; the oscillating part carries
/// every nonzero mode of the truncated roof.
#[derive(Clone, Debug, Serialize)]
pub struct SumEvaluation {
    pub m_dec: String,
    pub grid_log2: u32,
    pub horizon: u64,
    /// m * c_0, the linear drift of the sum.
    pub mean: f64,
    pub osc: Vec<f64>,
    /// max - min of the oscillating part over the grid.
    pub range: f64,
    /// Bound on |d/dx| of the oscillating part: sum over modes of
    /// 4 pi k |c_k K_k|.
    pub deriv_sup: f64,
    /// Bound on what the truncation discarded: m * sum_{|k|>H} |c_k|.
    pub truncation_sup: f64,
    pub modes: usize,
}

/// Fourier-side evaluation of S_m on a 2^g grid. The oracle counterpart of
/// [`birkhoff_direct`]; the two agree to rounding on any truncated roof.
pub fn birkhoff_fourier(
    alpha: &RotationNumber,
    roof: &FourierRoof,
    m: u64,
    grid_log2: u32,
    horizon: u64,
) -> Result<SumEvaluation> {
    if grid_log2 > 24 {
        return Err(Error::InvalidInput("grid beyond 2^24 points".into()));
    }
    let n = 1usize << grid_log2;
    let nmask = (n - 1) as u64;
    // (amplitude 2|c K|, folded frequency, phase) per kept mode
    let mut modes: Vec<(f64, u64, f64)> = Vec::new();
    let mut deriv_sup = 0.0f64;
    for k in roof.support_u64(horizon) {
        let cl = roof.lmag(k);
        if cl == f64::NEG_INFINITY {
            continue;
        }
        let ker = kernel_direct(alpha, m, k)?;
        let amp = 2.0 * kernel::exp2_sat(cl + ker.mag_log2);
        if amp == 0.0 {
            continue;
        }
        let phase = roof.phase(k) + ker.arg;
        modes.push((amp, k & nmask, phase));
        deriv_sup += 2.0 * std::f64::consts::PI * (k as f64) * amp;
    }
    let step = 2.0 * std::f64::consts::PI / (n as f64);
    let osc = exec::map_indexed(n, |i| {
        let mut acc = 0.0;
        let mut comp = 0.0;
        for &(amp, fold, phase) in &modes {
            let t = (fold.wrapping_mul(i as u64)) & nmask;
            let v = amp * ((t as f64) * step + phase).cos();
            let y = v - comp;
            let s = acc + y;
            comp = (s - acc) - y;
            acc = s;
        }
        acc
    });
    let lo = osc.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let hi = osc.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    Ok(SumEvaluation {
        m_dec: m.to_string(),
        grid_log2,
        horizon,
        mean: m as f64 * roof.c0(),
        range: hi - lo,
        deriv_sup,
        truncation_sup: m as f64 * roof.tail_l1(horizon),
        modes: modes.len(),
        osc,
    })
}

pub(crate) fn kahan_sum(vals: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for &v in vals {
        let y = v - comp;
        let s = acc + y;
        comp = (s - acc) - y;
        acc = s;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    use rand::{Rng, SeedableRng};

    use crate::roof::{make_dyadic_roof, make_table_roof};

    fn golden() -> &'static RotationNumber {
        static A: OnceLock<RotationNumber> = OnceLock::new();
        A.get_or_init(RotationNumber::golden)
    }

    #[test]
    fn direct_matches_fourier() {
        let a = golden();
        let roof = make_dyadic_roof();
        let horizon = 48;
        for m in [1u64, 2, 13, 55, 89] {
            let ev = birkhoff_fourier(a, &roof, m, 6, horizon).unwrap();
            for i in 0..(1usize << 6) {
                let x = i as f64 / 64.0;
                let d = birkhoff_direct(a, &roof, m, x, horizon).unwrap();
                let f = ev.mean + ev.osc[i];
                assert!(
                    (d - f).abs() <= 1e-9 * (1.0 + d.abs()),
                    "m={m} i={i}: direct {d} fourier {f}"
                );
            }
        }
    }

    #[test]
    fn sums_satisfy_the_cocycle_law() {
        // S_{m+m'}(x) = S_m(x) + S_{m'}(x + m alpha)
        let a = golden();
        let roof = make_dyadic_roof();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xc0cc);
        for _ in 0..12 {
            let m1: u64 = rng.random_range(1..200);
            let m2: u64 = rng.random_range(1..200);
            let x: f64 = rng.random_range(0.0..1.0);
            let whole = birkhoff_direct(a, &roof, m1 + m2, x, 32).unwrap();
            let first = birkhoff_direct(a, &roof, m1, x, 32).unwrap();
            let shift = (x + a.position_f64(m1 as i64).unwrap()).rem_euclid(1.0);
            let second = birkhoff_direct(a, &roof, m2, shift, 32).unwrap();
            assert!(
                (whole - (first + second)).abs() < 1e-8,
                "cocycle gap {} at m1={m1} m2={m2}",
                whole - (first + second)
            );
        }
    }

    #[test]
    fn constant_roof_sums_to_the_drift() {
        let a = golden();
        let roof = make_table_roof(vec![(0, 2.5, 0.0)]).unwrap();
        let s = birkhoff_direct(a, &roof, 64, 0.3, 8).unwrap();
        assert!((s - 160.0).abs() < 1e-9);
        let ev = birkhoff_fourier(a, &roof, 64, 4, 8).unwrap();
        assert_eq!(ev.modes, 0);
        assert!(ev.osc.iter().all(|&v| v == 0.0));
        assert!((ev.mean - 160.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_bound_is_honest() {
        let a = golden();
        let roof = make_dyadic_roof();
        for m in [3u64, 21, 144] {
            let coarse = birkhoff_direct(a, &roof, m, 0.17, 16).unwrap();
            let fine = birkhoff_direct(a, &roof, m, 0.17, 60).unwrap();
            let budget = m as f64 * (roof.tail_l1(16) + roof.tail_l1(60));
            assert!(
                (coarse - fine).abs() <= budget + 1e-12,
                "m={m}: drift {} exceeds budget {budget}",
                (coarse - fine).abs()
            );
        }
    }
}
