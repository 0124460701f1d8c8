//! Coincidence probability, time-resolved coincidence density and Fisher
//! information of HOM interference with frequency-entangled pairs.
//!
//! The coincidence probability is
//! `P_c(Δt) = ½[1 − V·O(Δt)·cos(Δω·Δt)]` with `O` the wave-packet overlap.
//! The time-resolved density `g(τ; Δt)` is a modeling choice: the minimal
//! non-negative density whose τ-integral reproduces `P_c` with the beat
//! factor held outside the integral.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, overlap_parts, BeatPeriod, DelaySetting, SourceSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterferenceError {
    #[error("maximum of the Fisher information sits at the search edge Δt = {edge_ns} ns")]
    MaxAtGridEdge { edge_ns: f64 },
    #[error("no defined Fisher information point on the search grid")]
    NoDefinedPoint,
    #[error("visibility {0} outside (0, 1]")]
    Visibility(f64),
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

/// Coincidence and anticoincidence probability at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferencePoint {
    pub delay: DelaySetting,
    pub p_coincidence: f64,
}

impl InterferencePoint {
    pub fn p_anticoincidence(&self) -> f64 {
        1.0 - self.p_coincidence
    }
}

/// Fisher information about Δt carried by one detected pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherPoint {
    pub delay: DelaySetting,
    /// ns⁻²; zero when `defined` is false.
    pub fisher: f64,
    /// False at 0/0 points (P_c ∈ {0, 1} with vanishing slope).
    pub defined: bool,
}

/// `P_c`, `1 − P_c` and `∂P_c/∂Δt` evaluated together.
#[derive(Debug, Clone, Copy)]
pub struct Coincidence {
    pub p: f64,
    pub q: f64,
    pub slope: f64,
}

/// Evaluates the coincidence probability and its delay derivative.
///
/// `P_c` is assembled as `½[(1−V) + V((1−O) + 2·O·sin²(θ/2))]`, which
/// equals the textbook form but keeps full relative precision close to a
/// perfect dip.
pub fn coincidence(delta_t: f64, spec: &SourceSpec) -> Coincidence {
    let v = spec.visibility();
    let dw = spec.delta_omega();
    let o = overlap_parts(delta_t, &spec.wavepacket());
    let theta = dw * delta_t;
    let (sin, cos) = theta.sin_cos();
    let half_sin = (0.5 * theta).sin();
    let p = 0.5 * ((1.0 - v) + v * (o.one_minus + 2.0 * o.value * half_sin * half_sin));
    let q = 0.5 * (1.0 + v * o.value * cos);
    let slope = -0.5 * v * (o.slope * cos - o.value * dw * sin);
    Coincidence { p, q, slope }
}

/// Coincidence probability at `delay`.
pub fn coincidence_probability(delay: DelaySetting, spec: &SourceSpec) -> InterferencePoint {
    InterferencePoint {
        delay,
        p_coincidence: coincidence(delay.time_delay_ns(), spec).p,
    }
}

/// Analytic `∂P_c/∂Δt` in ns⁻¹.
pub fn coincidence_slope(delay: DelaySetting, spec: &SourceSpec) -> f64 {
    coincidence(delay.time_delay_ns(), spec).slope
}

/// Time-resolved coincidence density `g(τ; Δt)` in ns⁻¹.
///
/// `g = ¼[φ²(τ+Δt) + φ²(τ−Δt)] − ½·V·φ(τ+Δt)·φ(τ−Δt)·cos(Δω·Δt)`.
pub fn coincidence_density(tau: f64, delay: DelaySetting, spec: &SourceSpec) -> f64 {
    let (coinc, _) = density_split(tau, delay.time_delay_ns(), spec);
    coinc
}

/// Splits the marginal pair density at τ into its coincidence part `g`
/// and the marginal `m = ½[φ²(τ+Δt) + φ²(τ−Δt)]`.
pub(crate) fn density_split(tau: f64, delta_t: f64, spec: &SourceSpec) -> (f64, f64) {
    let wp = spec.wavepacket();
    let a = model::amplitude(tau + delta_t, &wp);
    let b = model::amplitude(tau - delta_t, &wp);
    let beat = (spec.delta_omega() * delta_t).cos();
    let marginal = 0.5 * (a * a + b * b);
    let g = 0.5 * marginal - 0.5 * spec.visibility() * a * b * beat;
    (g.max(0.0), marginal)
}

/// Per-pair Fisher information about Δt.
pub fn fisher_information(delay: DelaySetting, spec: &SourceSpec) -> FisherPoint {
    let c = coincidence(delay.time_delay_ns(), spec);
    let num = c.slope * c.slope;
    let den = c.p * c.q;
    let (fisher, defined) = if den > 0.0 {
        (num / den, true)
    } else if num == 0.0 {
        (0.0, false)
    } else {
        (f64::INFINITY, true)
    };
    FisherPoint { delay, fisher, defined }
}

/// Location and value of the largest defined Fisher information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherMax {
    pub delay: DelaySetting,
    pub fisher: f64,
}

/// Coarse grid over `Δt ∈ [0, 5/Γmin]` followed by golden-section
/// refinement around the best grid point.
///
/// The grid step is at most a fiftieth of the beat period (and at most
/// span/4000 for degenerate sources). Undefined points are skipped. The
/// lower boundary Δt = 0 is a symmetry point of F and counts as interior;
/// a maximum on the upper boundary is reported as an error.
pub fn max_fisher(spec: &SourceSpec) -> Result<FisherMax, InterferenceError> {
    let span = 5.0 / spec.wavepacket().gamma_min();
    let mut step = span / 4000.0;
    if let BeatPeriod::Finite { .. } = model::beat_period(spec) {
        let period_ns = model::beat_period(spec).ns().unwrap_or(span);
        step = step.min(period_ns / 50.0);
    }
    let n = (span / step).ceil() as usize;
    let step = span / n as f64;

    let eval = |dt: f64| {
        let f = fisher_information(DelaySetting::from_time_ns(dt), spec);
        if f.defined {
            f.fisher
        } else {
            f64::NEG_INFINITY
        }
    };

    const CHUNK: usize = 1 << 16;
    let chunks = n / CHUNK + 1;
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = ((c + 1) * CHUNK).min(n + 1);
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for i in start..end {
                let v = eval(step * i as f64);
                if v > best.1 {
                    best = (i, v);
                }
            }
            best
        })
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                // deterministic: larger value, then lower index
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    if best.0 == usize::MAX || !best.1.is_finite() {
        return Err(InterferenceError::NoDefinedPoint);
    }
    if best.0 == n {
        return Err(InterferenceError::MaxAtGridEdge { edge_ns: span });
    }
    let lo = step * best.0.saturating_sub(1) as f64;
    let hi = step * (best.0 + 1) as f64;
    let (x, fx) = golden_max(eval, lo, hi, 1e-15 * span);
    let (x, fx) = if fx >= best.1 {
        (x, fx)
    } else {
        (step * best.0 as f64, best.1)
    };
    Ok(FisherMax {
        delay: DelaySetting::from_time_ns(x),
        fisher: fx,
    })
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// One row of the visibility-robustness table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub visibility: f64,
    pub ratio_entangled: f64,
    pub ratio_degenerate: f64,
}

/// Ratio of the maximal Fisher information at visibility V to its value at
/// V = 1, for an entangled and a degenerate source.
pub fn fisher_ratio_curve(
    visibilities: &[f64],
    spec_entangled: &SourceSpec,
    spec_degenerate: &SourceSpec,
) -> Result<Vec<RatioRow>, InterferenceError> {
    for &v in visibilities {
        if !(v > 0.0 && v <= 1.0) {
            return Err(InterferenceError::Visibility(v));
        }
    }
    let ideal_e = max_fisher(&spec_entangled.with_visibility(1.0)?)?.fisher;
    let ideal_d = max_fisher(&spec_degenerate.with_visibility(1.0)?)?.fisher;
    visibilities
        .iter()
        .map(|&v| {
            let fe = max_fisher(&spec_entangled.with_visibility(v)?)?.fisher;
            let fd = max_fisher(&spec_degenerate.with_visibility(v)?)?.fisher;
            Ok(RatioRow {
                visibility: v,
                ratio_entangled: fe / ideal_e,
                ratio_degenerate: fd / ideal_d,
            })
        })
        .collect()
}

/// First delay Δt > 0 with cos(Δω·Δt) = 0, where `P_c = ½` and the fringe
/// slope is steepest. `None` for degenerate sources.
pub fn quadrature_point(spec: &SourceSpec) -> Option<DelaySetting> {
    let dw = spec.delta_omega().abs();
    (dw > 0.0).then(|| DelaySetting::from_time_ns(std::f64::consts::FRAC_PI_2 / dw))
}
