//! Sinusoidal fringe fit of a delay scan:
//! `N(ΔL) = A[1 − V·E(ΔL)·cos(2πΔL/Λ + θ)]`.
//!
//! `E` is the overlap envelope `e^{−|ΔL|/ℓ}(1 + |ΔL|/ℓ)` with decay length
//! `ℓ` (the equal-rate form of the overlap, `ℓ = c/2Γ`), or 1 when no scale
//! is given. Over scans much shorter than the coherence length `ℓ` is not
//! identifiable, so it is frozen unless [`EnvelopeMode::Free`] is asked for.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmFailure, LmOptions, Residuals};
use super::EstimationError;
use crate::montecarlo::ScanResult;

/// Scan samples with their standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeData {
    pub path_delay_um: Vec<f64>,
    pub counts: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FringeData {
    /// Net cross-port coincidences per point, `σ² = max(raw, 1)`.
    pub fn from_scan(scan: &ScanResult) -> Self {
        let mut d = FringeData {
            path_delay_um: Vec::with_capacity(scan.points.len()),
            counts: Vec::with_capacity(scan.points.len()),
            sigma: Vec::with_capacity(scan.points.len()),
        };
        for p in &scan.points {
            d.path_delay_um.push(p.delay.path_delay_um());
            d.counts.push(p.counts.net_coincidences());
            d.sigma.push((p.counts.coincidences as f64).max(1.0).sqrt());
        }
        d
    }

    /// Counts with Poisson weights `σ² = max(count, 1)`.
    pub fn poisson(path_delay_um: Vec<f64>, counts: Vec<f64>) -> Self {
        let sigma = counts.iter().map(|c| c.max(1.0).sqrt()).collect();
        FringeData {
            path_delay_um,
            counts,
            sigma,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    fn span(&self) -> f64 {
        let (lo, hi) = self
            .path_delay_um
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeMode {
    #[default]
    Frozen,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeErrors {
    pub period_um: f64,
    pub visibility: f64,
    pub phase_rad: f64,
    pub offset: f64,
    pub envelope_scale_um: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub period_um: f64,
    pub visibility: f64,
    /// In (−π, π].
    pub phase_rad: f64,
    pub offset: f64,
    pub envelope_scale_um: Option<f64>,
    pub envelope_mode: EnvelopeMode,
    pub errors: FringeErrors,
    pub converged: bool,
    pub iterations: usize,
    pub chi_square: f64,
    pub dof: usize,
    /// The optimum lay above V = 1 and was clamped.
    pub visibility_clamped: bool,
    /// V is less than three standard errors from zero.
    pub low_significance: bool,
}

impl FringeFit {
    pub fn model(&self, path_delay_um: f64) -> f64 {
        model(
            &[self.offset, self.visibility, self.period_um, self.phase_rad],
            self.envelope_scale_um,
            path_delay_um,
        )
    }

    /// `(x, observed, model, normalized residual)` rows.
    pub fn residuals(&self, data: &FringeData) -> Vec<[f64; 4]> {
        (0..data.len())
            .map(|i| {
                let x = data.path_delay_um[i];
                let m = self.model(x);
                [x, data.counts[i], m, (data.counts[i] - m) / data.sigma[i]]
            })
            .collect()
    }
}

pub const MIN_POINTS: usize = 8;
pub const MIN_PERIODS: f64 = 1.5;

fn envelope(x: f64, scale: Option<f64>) -> (f64, f64) {
    // value and derivative with respect to the scale
    match scale {
        None => (1.0, 0.0),
        Some(l) => {
            let u = x.abs() / l;
            let e = (-u).exp();
            (e * (1.0 + u), e * u * u / l)
        }
    }
}

fn model(p: &[f64], scale: Option<f64>, x: f64) -> f64 {
    let (e, _) = envelope(x, scale);
    p[0] * (1.0 - p[1] * e * (2.0 * PI * x / p[2] + p[3]).cos())
}

struct Problem<'a> {
    data: &'a FringeData,
    /// Frozen scale, ignored when the scale is the fifth parameter.
    frozen_scale: Option<f64>,
    free: bool,
}

impl Problem<'_> {
    fn scale(&self, p: &[f64]) -> Option<f64> {
        if self.free {
            Some(p[4])
        } else {
            self.frozen_scale
        }
    }
}

impl Residuals for Problem<'_> {
    fn residual_count(&self) -> usize {
        self.data.len()
    }

    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let s = self.scale(p);
        DVector::from_iterator(
            self.data.len(),
            (0..self.data.len())
                .map(|i| (self.data.counts[i] - model(p, s, self.data.path_delay_um[i])) / self.data.sigma[i]),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let s = self.scale(p);
        let cols = if self.free { 5 } else { 4 };
        let mut j = DMatrix::zeros(self.data.len(), cols);
        for i in 0..self.data.len() {
            let x = self.data.path_delay_um[i];
            let w = -1.0 / self.data.sigma[i];
            let (e, de) = envelope(x, s);
            let arg = 2.0 * PI * x / p[2] + p[3];
            let (sn, cs) = arg.sin_cos();
            j[(i, 0)] = w * (1.0 - p[1] * e * cs);
            j[(i, 1)] = w * (-p[0] * e * cs);
            j[(i, 2)] = w * (p[0] * p[1] * e * sn * (-2.0 * PI * x / (p[2] * p[2])));
            j[(i, 3)] = w * (p[0] * p[1] * e * sn);
            if self.free {
                j[(i, 4)] = w * (-p[0] * p[1] * de * cs);
            }
        }
        j
    }
}

fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Weighted periodogram peak of the mean-subtracted data, searched over
/// periods from twice the span down to twice the mean point spacing.
pub fn dominant_period(data: &FringeData) -> f64 {
    let n = data.len();
    let span = data.span();
    let mean = data.counts.iter().sum::<f64>() / n as f64;
    let f_lo = 0.5 / span;
    let f_hi = 0.5 * (n - 1) as f64 / span;
    let power = |f: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for i in 0..n {
            let (sn, cs) = (2.0 * PI * f * data.path_delay_um[i]).sin_cos();
            let y = data.counts[i] - mean;
            c += y * cs;
            s += y * sn;
        }
        c * c + s * s
    };
    let steps = 64 * n;
    let df = (f_hi - f_lo) / steps as f64;
    let mut best = (f_lo, f64::NEG_INFINITY);
    for k in 0..=steps {
        let f = f_lo + k as f64 * df;
        let p = power(f);
        if p > best.1 {
            best = (f, p);
        }
    }
    // parabolic refinement on the grid neighbourhood
    let (f0, p0) = best;
    let (pm, pp) = (power(f0 - df), power(f0 + df));
    let denom = pm - 2.0 * p0 + pp;
    let shift = if denom < 0.0 { 0.5 * (pm - pp) / denom } else { 0.0 };
    1.0 / (f0 + shift.clamp(-1.0, 1.0) * df)
}

/// Offset and the cosine/sine amplitudes at a fixed period by weighted
/// linear regression; returns `(A, V, θ)`.
fn linear_init(data: &FringeData, period: f64, scale: Option<f64>) -> Option<(f64, f64, f64)> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for i in 0..data.len() {
        let x = data.path_delay_um[i];
        let (e, _) = envelope(x, scale);
        let (sn, cs) = (2.0 * PI * x / period).sin_cos();
        let row = Vector3::new(1.0, e * cs, e * sn);
        let w = 1.0 / (data.sigma[i] * data.sigma[i]);
        ata += w * row * row.transpose();
        atb += w * data.counts[i] * row;
    }
    let c = ata.cholesky()?.solve(&atb);
    // c1 = −A V cos θ, c2 = A V sin θ
    let a = c[0];
    let amp = (c[1] * c[1] + c[2] * c[2]).sqrt();
    Some((a, amp / a, c[2].atan2(-c[1])))
}

/// Fits a fringe to scan data. Without `init` the period comes from the
/// periodogram and offset, visibility and phase from a linear fit at that
/// period; with `init` its parameters are the starting point and its
/// envelope scale is used (frozen or as start value, by `mode`).
pub fn fit_fringe_data(
    data: &FringeData,
    init: Option<&FringeFit>,
    mode: EnvelopeMode,
) -> Result<FringeFit, EstimationError> {
    let n = data.len();
    let np = if mode == EnvelopeMode::Free { 5 } else { 4 };
    if n < MIN_POINTS || n <= np {
        return Err(EstimationError::InsufficientData {
            points: n,
            needed: MIN_POINTS.max(np + 1),
        });
    }
    if data
        .counts
        .iter()
        .chain(&data.path_delay_um)
        .chain(&data.sigma)
        .any(|v| !v.is_finite())
        || data.sigma.iter().any(|&s| s <= 0.0)
    {
        return Err(EstimationError::NonFinite);
    }
    let span = data.span();
    let scale = init.and_then(|f| f.envelope_scale_um);
    if mode == EnvelopeMode::Free && scale.is_none() {
        return Err(EstimationError::MissingEnvelopeScale);
    }

    let start = match init {
        Some(f) => {
            let mut p = vec![f.offset, f.visibility, f.period_um, f.phase_rad];
            if mode == EnvelopeMode::Free {
                p.push(scale.unwrap());
            }
            p
        }
        None => {
            let period = dominant_period(data);
            let (a, v, theta) = linear_init(data, period, scale).ok_or(EstimationError::Singular)?;
            let mut p = vec![a, v, period, theta];
            if mode == EnvelopeMode::Free {
                p.push(scale.unwrap());
            }
            p
        }
    };
    if span < MIN_PERIODS * start[2].abs() {
        return Err(EstimationError::InsufficientSpan {
            span,
            needed: MIN_PERIODS * start[2].abs(),
        });
    }

    let problem = Problem {
        data,
        frozen_scale: scale,
        free: mode == EnvelopeMode::Free,
    };
    let out = minimize(&problem, &start, LmOptions::default()).map_err(|e| match e {
        LmFailure::Singular => EstimationError::Singular,
        LmFailure::NonFinite => EstimationError::NonFinite,
    })?;
    if !out.converged {
        return Err(EstimationError::NotConverged {
            iterations: out.iterations,
        });
    }
    let mut p = out.params;
    let sd = |i: usize| out.covariance[(i, i)].max(0.0).sqrt();
    // equivalent representation with V ≥ 0 and Λ > 0
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    let visibility_clamped = p[1] > 1.0;
    let visibility = p[1].min(1.0);
    let errors = FringeErrors {
        offset: sd(0),
        visibility: sd(1),
        period_um: sd(2),
        phase_rad: sd(3),
        envelope_scale_um: (mode == EnvelopeMode::Free).then(|| sd(4)),
    };
    Ok(FringeFit {
        period_um: p[2],
        visibility,
        phase_rad: wrap_phase(p[3]),
        offset: p[0],
        envelope_scale_um: if mode == EnvelopeMode::Free { Some(p[4]) } else { scale },
        envelope_mode: mode,
        errors,
        converged: true,
        iterations: out.iterations,
        chi_square: out.chi_square,
        dof: n - np,
        visibility_clamped,
        low_significance: visibility < 3.0 * errors.visibility,
    })
}

/// [`fit_fringe_data`] on the net coincidences of a delay scan.
pub fn fit_fringe(
    scan: &ScanResult,
    init: Option<&FringeFit>,
    mode: EnvelopeMode,
) -> Result<FringeFit, EstimationError> {
    fit_fringe_data(&FringeData::from_scan(scan), init, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> FringeFit {
        FringeFit {
            period_um: 3.13,
            visibility: 0.873,
            phase_rad: 0.4,
            offset: 5000.0,
            envelope_scale_um: None,
            envelope_mode: EnvelopeMode::Frozen,
            errors: FringeErrors {
                period_um: 0.0,
                visibility: 0.0,
                phase_rad: 0.0,
                offset: 0.0,
                envelope_scale_um: None,
            },
            converged: true,
            iterations: 0,
            chi_square: 0.0,
            dof: 0,
            visibility_clamped: false,
            low_significance: false,
        }
    }

    fn synthetic(t: &FringeFit, n: usize, periods: f64) -> FringeData {
        let x: Vec<f64> = (0..n)
            .map(|i| periods * t.period_um * i as f64 / (n - 1) as f64)
            .collect();
        let y = x.iter().map(|&x| t.model(x)).collect();
        FringeData::poisson(x, y)
    }

    #[test]
    fn noiseless_recovery() {
        let t = truth();
        let fit = fit_fringe_data(&synthetic(&t, 41, 2.0), None, EnvelopeMode::Frozen).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.period_um, t.period_um) < 1e-6);
        assert!(rel(fit.visibility, t.visibility) < 1e-6);
        assert!(rel(fit.offset, t.offset) < 1e-6);
        assert!((fit.phase_rad - t.phase_rad).abs() < 1e-6);
        assert!(fit.chi_square < 1e-12);
    }

    #[test]
    fn noiseless_recovery_with_free_envelope() {
        let mut t = truth();
        t.envelope_scale_um = Some(8.0);
        let data = synthetic(&t, 81, 6.0);
        let mut init = t;
        init.envelope_scale_um = Some(12.0);
        init.period_um = 3.0;
        init.visibility = 0.8;
        let fit = fit_fringe_data(&data, Some(&init), EnvelopeMode::Free).unwrap();
        assert!((fit.envelope_scale_um.unwrap() - 8.0).abs() < 1e-6);
        assert!((fit.period_um - 3.13).abs() < 1e-6);
    }

    #[test]
    fn refit_is_idempotent() {
        let t = truth();
        let mut data = synthetic(&t, 41, 2.0);
        // deterministic perturbation
        for (i, c) in data.counts.iter_mut().enumerate() {
            *c += 40.0 * ((i * 7919) % 13) as f64 / 13.0 - 20.0;
        }
        let first = fit_fringe_data(&data, None, EnvelopeMode::Frozen).unwrap();
        let second = fit_fringe_data(&data, Some(&first), EnvelopeMode::Frozen).unwrap();
        assert!(second.iterations <= 2);
        for (a, b) in [
            (first.period_um, second.period_um),
            (first.visibility, second.visibility),
            (first.offset, second.offset),
            (first.phase_rad, second.phase_rad),
        ] {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn negative_visibility_is_folded() {
        let mut t = truth();
        t.phase_rad = 0.4 + PI;
        let data = synthetic(&t, 41, 2.0);
        let mut init = truth();
        init.visibility = -0.8;
        let fit = fit_fringe_data(&data, Some(&init), EnvelopeMode::Frozen).unwrap();
        assert!(fit.visibility > 0.0);
        assert!((wrap_phase(fit.phase_rad - t.phase_rad)).abs() < 1e-6);
    }

    #[test]
    fn rejects_short_scans() {
        let t = truth();
        assert!(matches!(
            fit_fringe_data(&synthetic(&t, 6, 2.0), None, EnvelopeMode::Frozen),
            Err(EstimationError::InsufficientData { .. })
        ));
        assert!(matches!(
            fit_fringe_data(&synthetic(&t, 30, 1.0), Some(&t), EnvelopeMode::Frozen),
            Err(EstimationError::InsufficientSpan { .. })
        ));
        assert!(matches!(
            fit_fringe_data(&synthetic(&t, 30, 2.0), None, EnvelopeMode::Free),
            Err(EstimationError::MissingEnvelopeScale)
        ));
    }

    #[test]
    fn flat_data_singular_or_insignificant() {
        let x: Vec<f64> = (0..41).map(|i| i as f64 * 0.15).collect();
        let y = vec![1000.0; 41];
        // zero amplitude leaves the period and phase undetermined
        let r = fit_fringe_data(&FringeData::poisson(x, y), Some(&truth()), EnvelopeMode::Frozen);
        match r {
            Ok(f) => assert!(f.low_significance),
            Err(e) => assert!(matches!(e, EstimationError::Singular), "{e:?}"),
        }
    }
}
