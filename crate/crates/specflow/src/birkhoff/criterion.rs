//! The eigenvalue criterion: I_n(lambda) = int_0^1 ||lambda S_{m_n}
//! phi_lambda(x)|| dx along a rigidity plan, together with the range,
//! derivative and crossing-measure diagnostics, the window comparison
//! Delta_n, and the certificate that sweeps a lambda grid.
//!
//! An entry's integrand is || z + sum_j B_j cos(2 pi f_j x + psi_j) ||
//! with z = m_n lambda c_0 mod 1 computed exactly (lambda and c_0 are
//! dyadic rationals, so the phase needs m_n only modulo a power of two)
//! and B_j = 2 |lambda| |c_j K(m_n, f_j)| from exact kernels. Frequencies
//! small enough for the grid are folded onto it exactly; each remaining
//! oscillation must sit on its own resonance scale, far above everything
//! below it, and then integrates as an independent torus dimension: one
//! dimension by the exact arcsine antiderivative, several through the
//! product Bessel series of the distance function. Mixed terms between
//! separated scales need Bessel orders near the frequency ratio, which
//! the margin check pushes double-exponentially below f64 resolution.

use std::f64::consts::PI;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::bigfloat::circle_norm_f64;
use crate::diophantine::{RotationNumber, MODW_BITS};
use crate::exec;
use crate::{Error, Result};

use super::kernel::{self, kernel_of, Freq};
use super::plan::{lambda_representative, BirkhoffPlan, LambdaMode, LambdaRepresentative, PlanEntry, PlanKind};

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOptions {
    /// log2 of the base quadrature grid.
    pub grid_log2: u32,
    /// Odd terms kept in the distance Fourier series.
    pub series_terms: usize,
    /// Oscillations below this amplitude move into the error budget.
    pub tiny_amp: f64,
    /// Product dimensions allowed before the smallest are lumped away.
    pub max_product_dims: usize,
    /// Extra log2 headroom a product dimension must keep above the
    /// combined lower scales, beyond the Bessel-order/argument crossover.
    pub resonance_margin_log2: f64,
    /// Largest acceptable total error bound per integral.
    pub max_error: f64,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        CriterionOptions {
            grid_log2: 12,
            series_terms: 4096,
            tiny_amp: 1e-6,
            max_product_dims: 8,
            resonance_margin_log2: 20.0,
            max_error: 0.02,
        }
    }
}

const GRID_LOG2_CAP: u32 = 22;
/// Largest amplitude the arcsine path walks segment by segment.
const ARC_MAX_AMP: f64 = 1e5;
/// Arc limit when the amplitude multiplies a full grid of base points.
const ARC_GRID_AMP: f64 = 100.0;

fn dyadic_parts(x: f64) -> Option<(u64, i64)> {
    if x == 0.0 {
        return Some((0, 0));
    }
    if !x.is_finite() {
        return None;
    }
    let bits = x.abs().to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut mant, mut e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    while mant & 1 == 0 {
        mant >>= 1;
        e += 1;
    }
    Some((mant, e))
}

/// Position of m lambda c_0 on the circle, exactly. The product
/// |lambda| c_0 is a dyadic rational a / 2^t, so the phase depends on m
/// only through m mod 2^t, which the entry stores exactly for t <= 640.
fn eigen_phase(entry: &PlanEntry, lambda: f64, c0: f64, prec: u32) -> Result<f64> {
    let (ma, ea) =
        dyadic_parts(lambda).ok_or_else(|| Error::InvalidInput("eigenvalue must be finite".into()))?;
    let (mb, eb) =
        dyadic_parts(c0).ok_or_else(|| Error::InvalidInput("drift must be finite".into()))?;
    if ma == 0 || mb == 0 {
        return Ok(0.0);
    }
    let mut mant = ma as u128 * mb as u128;
    let mut e = ea + eb;
    while mant & 1 == 0 {
        mant >>= 1;
        e += 1;
    }
    if e >= 0 {
        return Ok(0.0); // the drift advances by an integer each step
    }
    let t = (-e) as u64;
    if t > MODW_BITS {
        return Err(Error::PrecisionExhausted {
            context: format!(
                "eigenvalue phase needs {t} fractional bits; the residue store keeps {MODW_BITS}"
            ),
            prec,
        });
    }
    let modulus = BigUint::from(1u8) << t;
    let mask = &modulus - BigUint::from(1u8);
    let zr = ((entry.m_modw.clone() & &mask) * (BigUint::from(mant) & &mask)) % &modulus;
    Ok(if t <= 63 {
        zr.to_u64().expect("below 2^63") as f64 / (1u64 << t) as f64
    } else {
        let top = (zr >> (t as u32 - 63)).to_u64().expect("63 bits");
        top as f64 / (1u64 << 63) as f64
    })
}

/// Exact value of int_0^1 ||z + b cos(2 pi y)|| dy. Integrated over a full
/// period the frequency and phase drop out, so this covers one surviving
/// oscillation at any frequency. In u = z + b cos the integrand is
/// piecewise +-(u - j) against the arcsine density; break at half-integers.
fn arc_integral(z: f64, b: f64) -> f64 {
    let lo = z - b;
    let hi = z + b;
    let mut breaks = vec![lo];
    let mut j2 = (2.0 * lo).floor() as i64 + 1;
    while (j2 as f64) * 0.5 < hi {
        breaks.push(j2 as f64 * 0.5);
        j2 += 1;
    }
    breaks.push(hi);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let mid = 0.5 * (p + q);
        let j = mid.round();
        let s = if mid >= j { 1.0 } else { -1.0 };
        let f = |u: f64| {
            let w = ((u - z) / b).clamp(-1.0, 1.0);
            s * ((z - j) * w.asin() - b * (1.0 - w * w).sqrt())
        };
        total += f(q) - f(p);
    }
    (total / PI).clamp(0.0, 0.5)
}

/// |J0(x)| <= min(1, sqrt(2 / (pi x))).
fn j0_env(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        (2.0 / (PI * x)).sqrt().min(1.0)
    }
}

/// Tail of the distance series past the odd index `k0`: the envelope is
/// walked explicitly to 8 k0 and bounded flat beyond (sum of k^-2 over odd
/// k > M stays below 1/M).
fn series_tail(bs: &[f64], k0: usize) -> f64 {
    let env = |k: usize| -> f64 { bs.iter().map(|&b| j0_env(2.0 * PI * k as f64 * b)).product() };
    let far = 8 * k0;
    let mut t = 0.0;
    let mut k = k0 + 2;
    while k <= far {
        t += env(k) / (k * k) as f64;
        k += 2;
    }
    t += env(far) / far as f64;
    t * 2.0 / (PI * PI)
}

/// I(z) = 1/4 - (2/pi^2) sum_{k odd} cos(2 pi k z) prod_j J0(2 pi k B_j) / k^2
/// over independent dimensions, evaluated at many base points, with the
/// truncation tail returned as the error bound.
fn product_series(zs: &[f64], bs: &[f64], terms: usize) -> (Vec<f64>, f64) {
    let mut coef: Vec<(f64, f64)> = Vec::new();
    let mut k = 1usize;
    let last = loop {
        let kk = (k * k) as f64;
        let env: f64 = bs.iter().map(|&b| j0_env(2.0 * PI * k as f64 * b)).product();
        if env / kk >= 1e-18 {
            let p: f64 = bs.iter().map(|&b| libm::j0(2.0 * PI * k as f64 * b)).product();
            coef.push((k as f64, p / kk));
        }
        if env / kk < 1e-18 || k + 2 > terms {
            break k;
        }
        k += 2;
    };
    let tail = series_tail(bs, last);
    let vals = exec::map_indexed(zs.len(), |i| {
        let z = zs[i];
        let mut s = 0.0;
        for &(kf, c) in &coef {
            s += (2.0 * PI * kf * z).cos() * c;
        }
        (0.25 - s * 2.0 / (PI * PI)).clamp(0.0, 0.5)
    });
    (vals, tail)
}

fn log2_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (1.0 + (lo - hi).exp2()).log2()
}

/// One roof mode crossed with one plan entry. The kernel is lambda-free;
/// lambda only scales the amplitude.
#[derive(Clone, Debug)]
struct Oscillator {
    freq: Freq,
    f_log2: f64,
    /// 2 |c K| at lambda = 1.
    amp: f64,
    phase: f64,
}

/// Amplitude bound below which a mode is exactly 0.0 in every f64 quantity
/// downstream: |K(m, f)| <= m, so c_log2 + m_log2 caps the oscillator.
/// Culling on the bound also sidesteps kernel residues parked on deep
/// resonances (l q_s b theta ~ integer), where separating the residue from
/// zero can take precision far beyond any working context.
const VISIBILITY_FLOOR_LOG2: f64 = -1100.0;

fn entry_oscillators(
    alpha: &RotationNumber,
    entry: &PlanEntry,
    modes: &[LambdaMode],
) -> Result<Vec<Oscillator>> {
    // Output stays index-aligned with `modes`: culled entries keep a
    // zero-amplitude slot (they lump into the error budget as exactly 0).
    let mut out = Vec::with_capacity(modes.len());
    for md in modes {
        if md.c_log2 + entry.m_log2 < VISIBILITY_FLOOR_LOG2 {
            out.push(Oscillator {
                freq: md.freq.clone(),
                f_log2: md.freq.log2(alpha),
                amp: 0.0,
                phase: 0.0,
            });
            continue;
        }
        let ker = kernel_of(alpha, &entry.terms, &md.freq)?;
        out.push(Oscillator {
            freq: md.freq.clone(),
            f_log2: md.freq.log2(alpha),
            amp: 2.0 * kernel::exp2_sat(md.c_log2 + ker.mag_log2),
            phase: md.c_phase + ker.arg,
        });
    }
    Ok(out)
}

struct EntryIntegral {
    value: f64,
    err: f64,
    /// Lipschitz constant of the grid-resolved part, for refinement.
    d_slow: f64,
    dims: usize,
    lumped: usize,
    method: &'static str,
}

fn integrate_oscillators(
    alpha: &RotationNumber,
    osc: &[Oscillator],
    scale: f64,
    z: f64,
    grid_log2: u32,
    opts: &CriterionOptions,
) -> Result<EntryIntegral> {
    let mut err = 0.0;
    let mut lumped = 0usize;
    let mut live: Vec<(&Oscillator, f64)> = Vec::new();
    for o in osc {
        let b = scale * o.amp;
        if b < opts.tiny_amp {
            err += b;
            if b > 0.0 {
                lumped += 1;
            }
        } else {
            live.push((o, b));
        }
    }
    if live.is_empty() {
        return Ok(EntryIntegral {
            value: circle_norm_f64(z),
            err,
            d_slow: 0.0,
            dims: 0,
            lumped,
            method: "exact",
        });
    }
    if live.len() == 1 {
        let b = live[0].1;
        if b <= ARC_MAX_AMP {
            return Ok(EntryIntegral {
                value: arc_integral(z, b),
                err,
                d_slow: 0.0,
                dims: 1,
                lumped,
                method: "arc",
            });
        }
        let (vals, tail) = product_series(&[z], &[b], opts.series_terms);
        return Ok(EntryIntegral {
            value: vals[0],
            err: err + tail,
            d_slow: 0.0,
            dims: 1,
            lumped,
            method: "series",
        });
    }

    let n = 1usize << grid_log2;
    let mut slow: Vec<(u64, f64, f64)> = Vec::new();
    let mut fast: Vec<(f64, f64)> = Vec::new(); // (amplitude, f_log2)
    for (o, b) in &live {
        match o.freq.value_u64(alpha) {
            Some(v) if v as usize <= n / 2 => slow.push((v, *b, o.phase)),
            _ => fast.push((*b, o.f_log2)),
        }
    }
    fast.sort_by(|x, y| y.0.total_cmp(&x.0));
    while fast.len() > opts.max_product_dims {
        let (b, _) = fast.pop().expect("nonempty");
        err += b;
        lumped += 1;
    }
    // Scale-separation gate. A cross term between a product dimension and
    // the scales below it needs a Bessel order near f / span, and
    // |J_nu(x)| collapses double-exponentially once nu clears the
    // argument; past the margin the residue is below f64 and charges
    // nothing. The first lone dimension has nothing to resonate against.
    fast.sort_by(|x, y| x.1.total_cmp(&y.1));
    let k_reach = 16.0 * opts.series_terms as f64;
    let mut span_log2 = if slow.is_empty() {
        f64::NEG_INFINITY
    } else {
        slow.iter().map(|s| s.0 as f64).sum::<f64>().log2()
    };
    let mut b_below = slow.iter().map(|s| s.1).fold(0.0f64, f64::max);
    for &(b, fl) in &fast {
        if span_log2 > f64::NEG_INFINITY {
            let order_floor = fl - span_log2;
            let arg_ceil = (2.0 * PI * k_reach * b_below.max(opts.tiny_amp)).log2();
            if order_floor < arg_ceil + opts.resonance_margin_log2 {
                return Err(Error::PrecisionExhausted {
                    context: format!(
                        "correlated resonant multiples exceed the product model: a frequency at 2^{fl:.1} sits only 2^{order_floor:.1} above the scales below it"
                    ),
                    prec: grid_log2,
                });
            }
        }
        span_log2 = log2_add(span_log2, fl);
        b_below = b_below.max(b);
    }

    let g1 = grid_log2 + 1;
    let mask = (1u64 << g1) - 1;
    let zs: Vec<f64> = if slow.is_empty() {
        vec![z]
    } else {
        let folded: Vec<(u64, f64, f64)> =
            slow.iter().map(|&(v, b, ph)| (v & mask, b, ph)).collect();
        let step = 2.0 * PI / (1u64 << g1) as f64;
        exec::map_indexed(n, move |i| {
            let odd = (2 * i as u64 + 1) & mask;
            let mut s = z;
            for &(f, b, ph) in &folded {
                let t = (f as u128 * odd as u128) as u64 & mask;
                s += b * (step * t as f64 + ph).cos();
            }
            s
        })
    };
    let d_slow: f64 = slow.iter().map(|&(v, b, _)| 2.0 * PI * v as f64 * b).sum();
    if !slow.is_empty() {
        err += d_slow / (4.0 * n as f64);
    }

    let method;
    let (vals, tail) = if fast.is_empty() {
        method = "grid";
        (exec::map_indexed(zs.len(), |i| circle_norm_f64(zs[i])), 0.0)
    } else if fast.len() == 1 && (fast[0].0 <= ARC_GRID_AMP || (zs.len() == 1 && fast[0].0 <= ARC_MAX_AMP)) {
        method = if slow.is_empty() { "arc" } else { "grid+arc" };
        let b = fast[0].0;
        (exec::map_indexed(zs.len(), move |i| arc_integral(zs[i], b)), 0.0)
    } else {
        method = if slow.is_empty() { "series" } else { "grid+series" };
        let bs: Vec<f64> = fast.iter().map(|f| f.0).collect();
        product_series(&zs, &bs, opts.series_terms)
    };
    let value = (super::kahan_sum(&vals) / vals.len() as f64).clamp(0.0, 0.5);
    Ok(EntryIntegral { value, err: err + tail, d_slow, dims: slow.len() + fast.len(), lumped, method })
}

/// One row of a criterion evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionIntegral {
    pub n: usize,
    pub m_dec: String,
    pub m_log2: f64,
    pub norm_log2: f64,
    /// Exact position of m_n lambda c_0 on the circle.
    pub z: f64,
    pub integral: f64,
    pub error_bound: f64,
    pub lower: f64,
    pub upper: f64,
    /// Oscillation range estimate 2 sum_j B_j at this lambda.
    pub r_est: f64,
    /// |lambda| R_n > 4: below it the criterion cannot see the entry.
    pub resolvable: bool,
    pub dims: usize,
    pub lumped: usize,
    pub method: String,
}

fn evaluate_entry(
    alpha: &RotationNumber,
    entry: &PlanEntry,
    osc: &[Oscillator],
    scale: f64,
    c0: f64,
    prec: u32,
    opts: &CriterionOptions,
) -> Result<CriterionIntegral> {
    let z = eigen_phase(entry, scale, c0, prec)?;
    let mut attempt = integrate_oscillators(alpha, osc, scale, z, opts.grid_log2, opts);
    let retry_grid = match &attempt {
        Ok(p) if p.err > opts.max_error && p.d_slow > 0.0 => {
            // the Lipschitz bound names the grid that will succeed
            let needed = (p.d_slow / (2.0 * opts.max_error)).log2().ceil() as i64;
            Some((needed.max(opts.grid_log2 as i64 + 1) as u32).min(GRID_LOG2_CAP))
        }
        Ok(_) => None,
        Err(Error::PrecisionExhausted { .. }) => {
            Some((opts.grid_log2 + 4).min(GRID_LOG2_CAP))
        }
        Err(_) => None,
    };
    if let Some(g) = retry_grid {
        attempt = integrate_oscillators(alpha, osc, scale, z, g, opts);
    }
    let part = attempt?;
    if part.err > opts.max_error {
        return Err(Error::PrecisionExhausted {
            context: format!(
                "integral error bound {:.3e} stays above {:.3e} at the grid cap",
                part.err, opts.max_error
            ),
            prec,
        });
    }
    let r_est = (2.0 * scale * osc.iter().map(|o| o.amp).sum::<f64>()).min(f64::MAX);
    Ok(CriterionIntegral {
        n: entry.n,
        m_dec: entry.m_dec.clone(),
        m_log2: entry.m_log2,
        norm_log2: entry.norm_log2,
        z,
        integral: part.value,
        error_bound: part.err,
        lower: (part.value - part.err).max(0.0),
        upper: (part.value + part.err).min(0.5),
        r_est,
        resolvable: r_est > 4.0,
        dims: part.dims,
        lumped: part.lumped,
        method: part.method.into(),
    })
}

/// Criterion integrals of one lambda over a plan. `modes` is the roof the
/// integrand actually carries, normally the kept set of a
/// lambda-representative. The sign of lambda is immaterial: the integrand
/// is invariant under negation.
pub fn criterion_integral(
    alpha: &RotationNumber,
    plan: &BirkhoffPlan,
    modes: &[LambdaMode],
    lambda: f64,
    c0: f64,
    opts: &CriterionOptions,
) -> Result<Vec<CriterionIntegral>> {
    let scale = lambda.abs();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidInput("eigenvalue candidate must be finite and nonzero".into()));
    }
    if !(c0.is_finite() && c0 >= 0.0) {
        return Err(Error::InvalidInput("drift coefficient must be finite and nonnegative".into()));
    }
    let prec = alpha.ctx().prec;
    plan.entries
        .iter()
        .map(|entry| {
            let osc = entry_oscillators(alpha, entry, modes)?;
            evaluate_entry(alpha, entry, &osc, scale, c0, prec, opts)
        })
        .collect()
}

/// Pointwise gap between the representative roof and its level slice
/// under one plan entry: sup over the grid of
/// |lambda S_{m_n} phi_lambda - lambda S_{m_n} phi_n|, phi_n being the
/// kept modes at the slice level (the dropped part is a coboundary and is
/// gone from the flow entirely, so it does not appear).
#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub n: usize,
    pub level: usize,
    pub lambda: f64,
    pub grid_sup: f64,
    /// Half-cell Lipschitz slack of the grid estimate.
    pub resolution_slack: f64,
    /// Coefficient envelope on modes past the enumeration horizon.
    pub tail_bound: f64,
    /// Plain l1 kernel bound, valid at any frequency.
    pub l1_bound: f64,
    pub sup_bound: f64,
    pub pass: bool,
}

pub fn representative_gap(
    alpha: &RotationNumber,
    entry: &PlanEntry,
    rep: &LambdaRepresentative,
    level: usize,
    opts: &CriterionOptions,
) -> Result<GapReport> {
    let scale = rep.lambda.abs();
    let g = opts.grid_log2;
    let n_pts = 1usize << g;
    let mut folded: Vec<(u64, f64, f64)> = Vec::new();
    let mut l1 = 0.0;
    let mut deriv = 0.0f64;
    for md in &rep.kept {
        if md.level == Some(level) || md.c_log2 + entry.m_log2 < VISIBILITY_FLOOR_LOG2 {
            continue;
        }
        let ker = kernel_of(alpha, &entry.terms, &md.freq)?;
        let a = scale * 2.0 * kernel::exp2_sat(md.c_log2 + ker.mag_log2);
        if a == 0.0 {
            continue;
        }
        l1 += a;
        deriv += 2.0 * PI * kernel::exp2_sat(md.m_log2) * a;
        folded.push((md.freq.fold_pow2(alpha, g)?, a, md.c_phase + ker.arg));
    }
    let grid_sup = if folded.is_empty() {
        0.0
    } else {
        let step = 2.0 * PI / n_pts as f64;
        let mask = (n_pts - 1) as u64;
        exec::map_indexed(n_pts, |i| {
            let mut s = 0.0;
            for &(f, a, ph) in &folded {
                let t = (f as u128 * i as u128) as u64 & mask;
                s += a * (step * t as f64 + ph).cos();
            }
            s.abs()
        })
        .into_iter()
        .fold(0.0f64, f64::max)
    };
    let resolution_slack = deriv / (2.0 * n_pts as f64);
    let tail_bound = PI * scale * rep.tail_weight;
    let sup_bound = (grid_sup + resolution_slack).min(l1) + tail_bound;
    Ok(GapReport {
        n: entry.n,
        level,
        lambda: rep.lambda,
        grid_sup,
        resolution_slack,
        tail_bound,
        l1_bound: l1 + tail_bound,
        sup_bound,
        pass: sup_bound < 0.125,
    })
}

/// Range, derivative and crossing measure of the level slice under one
/// plan entry. Substituting y = q_s x turns the slice frequencies into
/// their multipliers, so the grid resolves them exactly at any magnitude
/// of q_s; the substitution is measure-preserving, so the crossing
/// fraction transfers back unchanged.
#[derive(Clone, Debug, Serialize)]
pub struct RangeMeasure {
    pub n: usize,
    pub level: usize,
    pub lambda: f64,
    pub z: f64,
    pub range: f64,
    /// Lower envelope 2 (||m_n q_s alpha|| / ||q_s alpha||) |c_{q_s}| (1 - 4 K1).
    pub range_lower: f64,
    pub range_ok: bool,
    pub deriv_sup_log2: f64,
    /// First-order envelope 4 q_s w1 |c_{q_s}| (1 + K2); the measured sup
    /// carries the 2 pi of differentiation on top, so this is reported,
    /// not asserted.
    pub deriv_env_log2: f64,
    pub crossing: f64,
    pub measure_floor: f64,
    pub measure_ok: bool,
    /// |lambda| R_n > 4; below it the entry is reported, not judged.
    pub lambda_ok: bool,
    pub modes: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn range_derivative_measure(
    alpha: &RotationNumber,
    entry: &PlanEntry,
    modes: &[LambdaMode],
    level: usize,
    lambda: f64,
    c0: f64,
    k1: f64,
    k2: f64,
    opts: &CriterionOptions,
) -> Result<RangeMeasure> {
    let scale = lambda.abs();
    let q_log2 = alpha
        .q(level)
        .ok_or_else(|| Error::QuotientsExhausted {
            level,
            reason: "slice level not materialized".into(),
        })?
        .log2();
    let mut slice: Vec<(u64, f64, f64)> = Vec::new(); // (multiplier, amp, phase)
    let mut main: Option<(f64, f64)> = None; // (log2 w1, c_log2) of the multiplier-1 mode
    let mut deriv = f64::NEG_INFINITY;
    for md in modes {
        if md.level != Some(level) || md.c_log2 + entry.m_log2 < VISIBILITY_FLOOR_LOG2 {
            continue;
        }
        let ker = kernel_of(alpha, &entry.terms, &md.freq)?;
        let amp = 2.0 * kernel::exp2_sat(md.c_log2 + ker.mag_log2);
        slice.push((md.multiplier, amp, md.c_phase + ker.arg));
        deriv = log2_add(deriv, (2.0 * PI).log2() + md.m_log2 + (1.0 + md.c_log2 + ker.mag_log2));
        if md.multiplier == 1 {
            main = Some((ker.num_log2 - ker.den_log2, md.c_log2));
        }
    }
    let (w1_log2, c_log2) =
        main.ok_or_else(|| Error::InvalidInput("level slice has no principal mode".into()))?;
    let z = eigen_phase(entry, scale, c0, alpha.ctx().prec)?;
    let n_pts = 1usize << opts.grid_log2;
    let vals = exec::map_indexed(n_pts, |i| {
        let y = i as f64 / n_pts as f64;
        slice.iter().map(|&(l, a, ph)| a * (2.0 * PI * l as f64 * y + ph).cos()).sum::<f64>()
    });
    let hi = vals.iter().fold(f64::MIN, |a, &b| a.max(b));
    let lo = vals.iter().fold(f64::MAX, |a, &b| a.min(b));
    let range = hi - lo;
    let crossing =
        vals.iter().filter(|&&v| circle_norm_f64(z + scale * v) >= 0.25).count() as f64
            / n_pts as f64;
    let range_lower = kernel::exp2_sat(1.0 + w1_log2 + c_log2) * (1.0 - 4.0 * k1);
    let measure_floor = (1.0 - 4.0 * k1) / (8.0 * (1.0 + k2));
    Ok(RangeMeasure {
        n: entry.n,
        level,
        lambda,
        z,
        range,
        range_lower,
        range_ok: range > range_lower,
        deriv_sup_log2: deriv,
        deriv_env_log2: 2.0 + q_log2 + w1_log2 + c_log2 + (1.0 + k2).log2(),
        crossing,
        measure_floor,
        measure_ok: crossing > measure_floor,
        lambda_ok: scale * range > 4.0,
        modes: slice.len(),
    })
}

/// One window comparison: the residual modes of
/// S_{m_n} phi_2 - sum_{k in W_n} S_{b_k q_k} phi_k(. + prefix_k alpha),
/// with phi_k the three-mode slice of eq-style c_0 + c_{q_k} e(q_k .).
/// Amplitudes are carried in log2: the residuals shrink below any f64
/// for the deep windows, and the monotonicity claim lives at that scale.
#[derive(Clone, Debug, Serialize)]
pub struct DeltaEntry {
    pub n: usize,
    pub window: Vec<usize>,
    pub grid_sup_log2: f64,
    pub l2_lower_log2: f64,
    pub l1_upper_log2: f64,
    /// f64 views; zero when the scale has left the representable range.
    pub grid_sup: f64,
    pub l2_lower: f64,
    pub l1_upper: f64,
    pub amps: Vec<DeltaAmp>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaAmp {
    pub level: usize,
    pub multiplier: u64,
    pub in_window: bool,
    /// log2 of 2 |A_j|.
    pub amp_log2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaReport {
    pub entries: Vec<DeltaEntry>,
    pub strictly_decreasing: bool,
    /// Consecutive intervals [l2, l1] stay disjoint.
    pub separated: bool,
}

pub fn delta_n(
    alpha: &RotationNumber,
    plan: &BirkhoffPlan,
    modes: &[LambdaMode],
    grid_log2: u32,
) -> Result<DeltaReport> {
    if plan.kind != PlanKind::MultiFrequency {
        return Err(Error::InvalidInput("window comparison needs a multi-frequency plan".into()));
    }
    for w in plan.entries.windows(2) {
        if w[1].levels.first() <= w[0].levels.first() {
            return Err(Error::InvalidInput("window starts must increase".into()));
        }
    }
    let n_pts = 1usize << grid_log2;
    let mut entries = Vec::with_capacity(plan.entries.len());
    for entry in &plan.entries {
        let mut amps = Vec::new();
        let mut residual: Vec<(f64, f64, u64)> = Vec::new(); // (amp_log2 of 2|A|, phase, folded freq)
        for md in modes {
            let lvl = md.level.unwrap_or(usize::MAX);
            let in_window = entry.levels.contains(&lvl) && md.multiplier == 1;
            // terms of A_j as (mag_log2, arg)
            let mut terms: Vec<(f64, f64)> = Vec::new();
            if in_window {
                // cocycle split: K(m_n, f) = sum_k K(b_k q_k, f) e(f prefix_k alpha);
                // dropping the k = lvl term leaves exactly the residual
                let mut shift = 0.0f64;
                for (k, wk) in &entry.terms {
                    let t = vec![(*k, wk.clone())];
                    if *k != lvl {
                        let ker = kernel_of(alpha, &t, &md.freq)?;
                        terms.push((ker.mag_log2, ker.arg + 2.0 * PI * shift));
                    }
                    shift += super::kernel::combination_freq_residue(alpha, &t, &md.freq)?.to_f64();
                }
            } else {
                let ker = kernel_of(alpha, &entry.terms, &md.freq)?;
                terms.push((ker.mag_log2, ker.arg));
            }
            let (amp_log2, phase) = if terms.is_empty() {
                (f64::NEG_INFINITY, 0.0)
            } else {
                let tmax = terms.iter().map(|t| t.0).fold(f64::MIN, f64::max);
                let re: f64 = terms.iter().map(|&(m, a)| (m - tmax).exp2() * a.cos()).sum();
                let im: f64 = terms.iter().map(|&(m, a)| (m - tmax).exp2() * a.sin()).sum();
                let h = re.hypot(im);
                if h == 0.0 {
                    (f64::NEG_INFINITY, 0.0)
                } else {
                    (1.0 + md.c_log2 + tmax + h.log2(), md.c_phase + im.atan2(re))
                }
            };
            amps.push(DeltaAmp {
                level: lvl,
                multiplier: md.multiplier,
                in_window: entry.levels.contains(&lvl),
                amp_log2,
            });
            if amp_log2 > f64::NEG_INFINITY {
                residual.push((amp_log2, phase, md.freq.fold_pow2(alpha, grid_log2)?));
            }
        }
        let peak = residual.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        let (grid_sup_log2, l2_lower_log2, l1_upper_log2) = if peak == f64::NEG_INFINITY {
            (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY)
        } else {
            let rel: Vec<(f64, f64, u64)> =
                residual.iter().map(|&(a, p, f)| ((a - peak).exp2(), p, f)).collect();
            let step = 2.0 * PI / n_pts as f64;
            let mask = (n_pts - 1) as u64;
            let sup_rel = exec::map_indexed(n_pts, |i| {
                let mut s = 0.0;
                for &(a, ph, f) in &rel {
                    let t = (f as u128 * i as u128) as u64 & mask;
                    s += a * (step * t as f64 + ph).cos();
                }
                s.abs()
            })
            .into_iter()
            .fold(0.0f64, f64::max);
            let l1_rel: f64 = rel.iter().map(|r| r.0).sum();
            // L2 of the real residual: sum over modes of 2 |A_j|^2, and
            // 2|A_j| is what the relative amplitudes carry
            let l2_rel = (rel.iter().map(|r| r.0 * r.0 / 2.0).sum::<f64>()).sqrt();
            (peak + sup_rel.log2(), peak + l2_rel.log2(), peak + l1_rel.log2())
        };
        entries.push(DeltaEntry {
            n: entry.n,
            window: entry.levels.clone(),
            grid_sup_log2,
            l2_lower_log2,
            l1_upper_log2,
            grid_sup: kernel::exp2_sat(grid_sup_log2),
            l2_lower: kernel::exp2_sat(l2_lower_log2),
            l1_upper: kernel::exp2_sat(l1_upper_log2),
            amps,
        });
    }
    let strictly_decreasing = entries
        .windows(2)
        .all(|w| w[1].grid_sup_log2 < w[0].grid_sup_log2);
    let separated = entries.windows(2).all(|w| w[1].l1_upper_log2 < w[0].l2_lower_log2);
    Ok(DeltaReport { entries, strictly_decreasing, separated })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertVerdict {
    Pass,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateConfig {
    pub lambda_max: f64,
    pub lambda_count: usize,
    /// Integer multiples k / c_0 probed as direct eigenvalue candidates.
    pub eigen_candidates: u32,
    /// Per-lambda pass floor for the criterion integrals.
    pub floor: f64,
    /// Collapse bar: an unresolvable deep entry whose integral stays below
    /// this refutes (the eigenvalue equation is being satisfied).
    pub refute_bar: f64,
    /// sum m |c_m| beyond the enumerated modes.
    pub tail_weight: f64,
    pub c0: f64,
    pub criterion: CriterionOptions,
}

impl CertificateConfig {
    pub fn for_drift(c0: f64) -> Self {
        CertificateConfig {
            lambda_max: 16.0,
            lambda_count: 16,
            eigen_candidates: 3,
            floor: 0.05,
            refute_bar: 0.025,
            tail_weight: 0.0,
            c0,
            criterion: CriterionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaReport {
    pub lambda: f64,
    pub source: String,
    pub kept_modes: usize,
    pub dropped_modes: usize,
    pub entries: Vec<CriterionIntegral>,
    /// inf of the lower bounds over resolvable entries.
    pub inf_resolvable: Option<f64>,
    pub below_threshold: bool,
    pub passes: bool,
    pub refutes: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakMixingCertificate {
    pub verdict: CertVerdict,
    pub floor: f64,
    pub refute_bar: f64,
    /// Smallest lambda at which any entry's range clears the threshold.
    pub lambda_min: f64,
    pub reports: Vec<LambdaReport>,
    pub notes: Vec<String>,
}

fn lambda_report(
    alpha: &RotationNumber,
    plan: &BirkhoffPlan,
    modes: &[LambdaMode],
    osc_all: &[Vec<Oscillator>],
    lambda: f64,
    source: String,
    cfg: &CertificateConfig,
    prec: u32,
) -> Result<LambdaReport> {
    let rep = lambda_representative(modes, lambda, cfg.tail_weight)?;
    let kept_idx: Vec<usize> = rep
        .kept
        .iter()
        .map(|k| modes.iter().position(|m| m.freq == k.freq).expect("kept mode comes from this set"))
        .collect();
    let mut entries = Vec::with_capacity(plan.entries.len());
    for (e, entry) in plan.entries.iter().enumerate() {
        let osc: Vec<Oscillator> = kept_idx.iter().map(|&i| osc_all[e][i].clone()).collect();
        entries.push(evaluate_entry(alpha, entry, &osc, lambda.abs(), cfg.c0, prec, &cfg.criterion)?);
    }
    let deepest = entries.last().expect("nonempty plan");
    let inf = entries
        .iter()
        .filter(|e| e.resolvable)
        .map(|e| e.lower)
        .fold(f64::INFINITY, f64::min);
    let below_threshold = inf == f64::INFINITY;
    let passes = !below_threshold && deepest.resolvable && inf >= cfg.floor;
    let refutes = !deepest.resolvable && deepest.upper < cfg.refute_bar;
    Ok(LambdaReport {
        lambda,
        source,
        kept_modes: rep.kept.len(),
        dropped_modes: rep.dropped.len(),
        inf_resolvable: if below_threshold { None } else { Some(inf) },
        below_threshold,
        passes,
        refutes,
        entries,
    })
}

/// Sweep a lambda grid (plus the integer drift candidates k / c_0, which
/// put z_n = 0 exactly) and judge each against the criterion floor. A
/// lambda whose entries all sit below the range threshold is reported but
/// not judged; a collapsed deep entry refutes.
pub fn weak_mixing_certificate(
    alpha: &RotationNumber,
    plan: &BirkhoffPlan,
    modes: &[LambdaMode],
    cfg: &CertificateConfig,
) -> Result<WeakMixingCertificate> {
    if plan.entries.is_empty() {
        return Err(Error::InvalidInput("empty plan".into()));
    }
    if !(cfg.c0.is_finite() && cfg.c0 >= 0.0) {
        return Err(Error::InvalidInput("drift coefficient must be finite and nonnegative".into()));
    }
    let prec = alpha.ctx().prec;
    let mut notes = plan.notes.clone();
    let osc_all: Vec<Vec<Oscillator>> = plan
        .entries
        .iter()
        .map(|e| entry_oscillators(alpha, e, modes))
        .collect::<Result<_>>()?;
    let r1_max = osc_all
        .iter()
        .map(|os| 2.0 * os.iter().map(|o| o.amp).sum::<f64>())
        .fold(0.0f64, f64::max);
    let lambda_min = if r1_max > 0.0 { 4.0 / r1_max } else { 1.0 };
    if r1_max == 0.0 {
        notes.push("no oscillation at lambda = 1: range thresholds never clear".into());
    }
    let lo = lambda_min.min(cfg.lambda_max);
    let hi = cfg.lambda_max.max(lo);
    let count = cfg.lambda_count.max(1);
    let mut candidates: Vec<(f64, String)> = (0..count)
        .map(|i| {
            let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            (lo * (hi / lo).powf(t), "grid".to_string())
        })
        .collect();
    if cfg.c0 > 0.0 {
        for k in 1..=cfg.eigen_candidates {
            let l = k as f64 / cfg.c0;
            if l.is_finite() && l > 0.0 {
                candidates.push((l, format!("eigenvalue candidate {k}/c0")));
            }
        }
    } else {
        notes.push("zero drift: z_n = 0 at every lambda".into());
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12 * b.0.abs());

    let mut reports = Vec::new();
    for (lambda, source) in candidates {
        match lambda_report(alpha, plan, modes, &osc_all, lambda, source, cfg, prec) {
            Ok(r) => reports.push(r),
            Err(e) => notes.push(format!("lambda {lambda:.6}: {e}")),
        }
    }
    let refuted = reports.iter().any(|r| r.refutes);
    let judged: Vec<&LambdaReport> = reports.iter().filter(|r| !r.below_threshold).collect();
    let verdict = if refuted {
        CertVerdict::Refuted
    } else if !judged.is_empty() && judged.iter().all(|r| r.passes) {
        CertVerdict::Pass
    } else {
        CertVerdict::Inconclusive
    };
    if plan.kind == PlanKind::MultiFrequency {
        notes.push(
            "distribution of the sums against the shifted normal is compared by the clt pipeline"
                .into(),
        );
    }
    Ok(WeakMixingCertificate {
        verdict,
        floor: cfg.floor,
        refute_bar: cfg.refute_bar,
        lambda_min,
        reports,
        notes,
    })
}
