//! Two-sided exponential fit of a signal–idler correlation histogram.
//!
//! Bin `i` with edges `[lo, hi)` has mean
//! `μᵢ = B·w + A·∫_{lo−τ₀}^{hi−τ₀} φ²`, where φ² decays as `e^{−2Γs·τ}` for
//! `τ > 0` and as `e^{2Γi·τ}` for `τ < 0`. `A` is the number of correlated
//! pairs and `B` the flat background per ns. The weights are refreshed
//! from the model until they stop changing, so the optimum is the Poisson
//! maximum-likelihood point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmFailure, LmOptions, Residuals};
use super::EstimationError;
use crate::model::{pair_bandwidth, WavePacketParams};
use crate::montecarlo::G2Histogram;

pub const MIN_BINS_PER_SIDE: usize = 10;
const MAX_REWEIGHTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Errors {
    pub gamma_s: f64,
    pub gamma_i: f64,
    pub amplitude: f64,
    pub background_per_ns: f64,
    pub peak_ns: f64,
    pub pair_bandwidth_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub gamma_s: f64,
    pub gamma_i: f64,
    /// Correlated pairs under the peak.
    pub amplitude: f64,
    /// Flat background, counts per ns of delay.
    pub background_per_ns: f64,
    pub peak_ns: f64,
    /// `pair_bandwidth` of the fitted rates.
    pub pair_bandwidth_mhz: f64,
    pub errors: G2Errors,
    /// `Γs − Γi` and its standard error, with the covariance included.
    pub asymmetry: f64,
    pub asymmetry_err: f64,
    pub converged: bool,
    pub iterations: usize,
    pub chi_square: f64,
    pub dof: usize,
}

impl G2Fit {
    fn params(&self) -> [f64; 5] {
        [
            self.background_per_ns,
            self.amplitude,
            self.peak_ns,
            self.gamma_s,
            self.gamma_i,
        ]
    }

    /// Expected counts in a bin.
    pub fn bin_mean(&self, lo: f64, hi: f64) -> f64 {
        bin_mean(&self.params(), lo, hi)
    }

    /// `(center, observed, model, normalized residual)` rows.
    pub fn residuals(&self, h: &G2Histogram) -> Vec<[f64; 4]> {
        (0..h.len())
            .map(|i| {
                let (lo, hi) = h.bin_edges(i);
                let m = self.bin_mean(lo, hi);
                let y = h.counts[i] as f64;
                [h.bin_center(i), y, m, (y - m) / m.max(0.5).sqrt()]
            })
            .collect()
    }
}

/// Probability mass of φ² between `d1 < d2`, evaluated from the nearer
/// tail for accuracy.
fn mass(gs: f64, gi: f64, d1: f64, d2: f64) -> f64 {
    let p_neg = gs / (gs + gi);
    let p_pos = gi / (gs + gi);
    let cdf_neg = |d: f64| p_neg * (2.0 * gi * d).exp();
    let sf_pos = |d: f64| p_pos * (-2.0 * gs * d).exp();
    if d2 <= 0.0 {
        cdf_neg(d2) - cdf_neg(d1)
    } else if d1 >= 0.0 {
        sf_pos(d1) - sf_pos(d2)
    } else {
        1.0 - cdf_neg(d1) - sf_pos(d2)
    }
}

fn bin_mean(p: &[f64], lo: f64, hi: f64) -> f64 {
    let [b, a, t0, gs, gi] = [p[0], p[1], p[2], p[3], p[4]];
    if !(gs > 0.0 && gi > 0.0) {
        return f64::NAN;
    }
    b * (hi - lo) + a * mass(gs, gi, lo - t0, hi - t0)
}

struct Problem<'a> {
    edges: Vec<(f64, f64)>,
    counts: &'a [u64],
    sigma: Vec<f64>,
    steps: [f64; 5],
}

impl Residuals for Problem<'_> {
    fn residual_count(&self) -> usize {
        self.counts.len()
    }

    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.counts.len(),
            self.edges
                .iter()
                .zip(self.counts)
                .zip(&self.sigma)
                .map(|((&(lo, hi), &y), &s)| (y as f64 - bin_mean(p, lo, hi)) / s),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.counts.len(), 5);
        let mut q = p.to_vec();
        for c in 0..5 {
            let h = self.steps[c];
            q[c] = p[c] + h;
            let up = self.residuals(&q);
            q[c] = p[c] - h;
            let dn = self.residuals(&q);
            q[c] = p[c];
            j.set_column(c, &((up - dn) / (2.0 * h)));
        }
        j
    }
}

fn weights_from(p: &[f64], edges: &[(f64, f64)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(lo, hi)| bin_mean(p, lo, hi).max(0.5).sqrt())
        .collect()
}

fn initial_guess(h: &G2Histogram, peak: usize) -> [f64; 5] {
    let w = h.bin_width_ns;
    let n = h.len();
    let edge = (n / 10).max(3);
    let mut outer: Vec<u64> = h.counts[..edge].iter().chain(&h.counts[n - edge..]).copied().collect();
    outer.sort_unstable();
    let bg_bin = outer[outer.len() / 2] as f64;
    let height = h.counts[peak] as f64 - bg_bin;
    let amplitude = h.counts.iter().map(|&c| c as f64 - bg_bin).sum::<f64>().max(1.0);
    let half_width = |dir: isize| {
        let mut i = peak as isize;
        while i >= 0 && (i as usize) < n && (h.counts[i as usize] as f64 - bg_bin) > 0.5 * height {
            i += dir;
        }
        ((i - peak as isize).abs() as f64 * w).max(w)
    };
    let ln2 = std::f64::consts::LN_2;
    [
        bg_bin / w,
        amplitude,
        h.bin_center(peak),
        ln2 / (2.0 * half_width(1)),
        ln2 / (2.0 * half_width(-1)),
    ]
}

/// Fits the two-sided exponential model. The histogram needs at least
/// [`MIN_BINS_PER_SIDE`] bins on either side of its highest bin.
pub fn fit_g2(h: &G2Histogram, init: Option<&G2Fit>) -> Result<G2Fit, EstimationError> {
    let n = h.len();
    let peak = h
        .counts
        .iter()
        .enumerate()
        .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
        .map(|(i, _)| i)
        .ok_or(EstimationError::InsufficientData {
            points: 0,
            needed: 2 * MIN_BINS_PER_SIDE + 1,
        })?;
    if peak < MIN_BINS_PER_SIDE || n - 1 - peak < MIN_BINS_PER_SIDE {
        return Err(EstimationError::PeakAtEdge { bin: peak, bins: n });
    }
    let edges: Vec<(f64, f64)> = (0..n).map(|i| h.bin_edges(i)).collect();
    let mut p: Vec<f64> = match init {
        Some(f) => f.params().to_vec(),
        None => initial_guess(h, peak).to_vec(),
    };
    let w = h.bin_width_ns;
    let steps = |p: &[f64]| {
        [
            1e-6 * p[0].abs().max(1.0),
            1e-6 * p[1].abs().max(1.0),
            1e-6 * w,
            1e-6 * p[3],
            1e-6 * p[4],
        ]
    };
    let mut sigma = match init {
        Some(_) => weights_from(&p, &edges),
        None => h.counts.iter().map(|&c| (c as f64).max(1.0).sqrt()).collect(),
    };

    let mut iterations = 0;
    let mut outcome = None;
    for _ in 0..MAX_REWEIGHTS {
        let problem = Problem {
            edges: edges.clone(),
            counts: &h.counts,
            sigma: sigma.clone(),
            steps: steps(&p),
        };
        let out = minimize(&problem, &p, LmOptions::default()).map_err(|e| match e {
            LmFailure::Singular => EstimationError::Singular,
            LmFailure::NonFinite => EstimationError::NonFinite,
        })?;
        iterations += out.iterations;
        if !out.converged {
            return Err(EstimationError::NotConverged { iterations });
        }
        let change = out
            .params
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-12))
            .fold(0.0, f64::max);
        p = out.params.clone();
        let new_sigma = weights_from(&p, &edges);
        let weights_moved = new_sigma
            .iter()
            .zip(&sigma)
            .map(|(a, b)| (a - b).abs() / b)
            .fold(0.0, f64::max);
        sigma = new_sigma;
        outcome = Some(out);
        if change < 1e-10 || weights_moved < 1e-10 {
            break;
        }
        outcome = None;
    }
    let Some(out) = outcome else {
        return Err(EstimationError::NotConverged { iterations });
    };

    let sd = |i: usize| out.covariance[(i, i)].max(0.0).sqrt();
    let (gs, gi) = (p[3], p[4]);
    let wp = WavePacketParams::new(gs, gi).map_err(|_| EstimationError::NonFinite)?;
    let bw = pair_bandwidth(&wp);
    // gradient of the bandwidth with respect to (Γs, Γi)
    let grad = |k: usize| {
        let h = 1e-7 * p[k];
        let mut a = [gs, gi];
        a[k - 3] += h;
        let up = WavePacketParams::new(a[0], a[1])
            .map(|w| pair_bandwidth(&w))
            .unwrap_or(f64::NAN);
        a[k - 3] -= 2.0 * h;
        let dn = WavePacketParams::new(a[0], a[1])
            .map(|w| pair_bandwidth(&w))
            .unwrap_or(f64::NAN);
        (up - dn) / (2.0 * h)
    };
    let (ds, di) = (grad(3), grad(4));
    let c = &out.covariance;
    let bw_var = ds * ds * c[(3, 3)] + di * di * c[(4, 4)] + 2.0 * ds * di * c[(3, 4)];
    let asym_var = c[(3, 3)] + c[(4, 4)] - 2.0 * c[(3, 4)];

    Ok(G2Fit {
        gamma_s: gs,
        gamma_i: gi,
        amplitude: p[1],
        background_per_ns: p[0],
        peak_ns: p[2],
        pair_bandwidth_mhz: bw,
        errors: G2Errors {
            background_per_ns: sd(0),
            amplitude: sd(1),
            peak_ns: sd(2),
            gamma_s: sd(3),
            gamma_i: sd(4),
            pair_bandwidth_mhz: bw_var.max(0.0).sqrt(),
        },
        asymmetry: gs - gi,
        asymmetry_err: asym_var.max(0.0).sqrt(),
        converged: true,
        iterations,
        chi_square: out.chi_square,
        dof: n - 5,
    })
}
