//! Physical parameter types and the closed-form wave-packet mathematics.
//!
//! Units: times in ns, decay rates in ns⁻¹, angular frequencies in rad/ns,
//! wavelengths in nm, optical path lengths in µm. Bandwidths are reported
//! as ordinary frequencies `Γ / 2π` in MHz.
//!
//! The decay rates are the `Γ` that appear literally in the biphoton
//! amplitude; with this reading `Γ / 2π` reproduces the quoted
//! single-photon bandwidths (1/18.84 ns⁻¹ → 8.45 MHz).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vacuum speed of light, exact, in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Speed of light in nm/ns.
pub const C_NM_PER_NS: f64 = SPEED_OF_LIGHT;
/// Speed of light in µm/ns.
pub const C_UM_PER_NS: f64 = SPEED_OF_LIGHT * 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} must be finite and > 0, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("{field} must be finite and >= 0, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("visibility must lie in [0, 1], got {0}")]
    Visibility(f64),
    #[error("{field} is not finite")]
    NonFinite { field: &'static str },
}

fn positive(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::NotPositive { field, value })
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::Negative { field, value })
    }
}

/// Signal and idler cavity decay rates of the double-exponential biphoton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePacketParams {
    gamma_s: f64,
    gamma_i: f64,
}

impl WavePacketParams {
    pub fn new(gamma_s: f64, gamma_i: f64) -> Result<Self, ModelError> {
        Ok(Self {
            gamma_s: positive("gamma_s", gamma_s)?,
            gamma_i: positive("gamma_i", gamma_i)?,
        })
    }

    /// Equal signal and idler rates.
    pub fn symmetric(gamma: f64) -> Result<Self, ModelError> {
        Self::new(gamma, gamma)
    }

    /// Equal rates chosen so that [`pair_bandwidth`] equals `mhz`.
    pub fn symmetric_from_pair_bandwidth(mhz: f64) -> Result<Self, ModelError> {
        let mhz = positive("pair_bandwidth", mhz)?;
        let gamma = 2.0 * PI * mhz * 1e-3 / (2f64.sqrt() - 1.0).sqrt();
        Self::symmetric(gamma)
    }

    pub fn gamma_s(&self) -> f64 {
        self.gamma_s
    }

    pub fn gamma_i(&self) -> f64 {
        self.gamma_i
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_s.min(self.gamma_i)
    }

    /// Square of the amplitude prefactor, `2ΓsΓi/(Γs+Γi)`.
    fn norm_sq(&self) -> f64 {
        2.0 * self.gamma_s * self.gamma_i / (self.gamma_s + self.gamma_i)
    }
}

/// Optical delay between the two interferometer arms.
///
/// Stored as the time delay; the path length is derived through the
/// vacuum speed of light.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DelaySetting {
    time_delay_ns: f64,
}

impl DelaySetting {
    pub const ZERO: DelaySetting = DelaySetting { time_delay_ns: 0.0 };

    pub fn from_time_ns(time_delay_ns: f64) -> Self {
        Self { time_delay_ns }
    }

    pub fn from_path_um(path_delay_um: f64) -> Self {
        Self {
            time_delay_ns: path_delay_um / C_UM_PER_NS,
        }
    }

    pub fn time_delay_ns(&self) -> f64 {
        self.time_delay_ns
    }

    pub fn path_delay_um(&self) -> f64 {
        self.time_delay_ns * C_UM_PER_NS
    }
}

/// Signal/idler frequency detuning in both ordinary and angular form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detuning {
    /// Ordinary frequency difference `c(1/λs − 1/λi)` in THz.
    pub thz: f64,
    /// Angular frequency difference in rad/ns.
    pub rad_per_ns: f64,
}

impl Detuning {
    pub fn from_thz(thz: f64) -> Self {
        Self {
            thz,
            rad_per_ns: 2.0 * PI * thz * 1e3,
        }
    }

    pub fn from_rad_per_ns(rad_per_ns: f64) -> Self {
        Self {
            thz: rad_per_ns / (2.0 * PI) * 1e-3,
            rad_per_ns,
        }
    }
}

/// Beat period of the quantum-beating fringes in path delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BeatPeriod {
    Finite {
        um: f64,
    },
    /// Degenerate wavelengths: no beating, the period is unbounded.
    Unbounded,
}

impl BeatPeriod {
    pub fn um(&self) -> Option<f64> {
        match *self {
            BeatPeriod::Finite { um } => Some(um),
            BeatPeriod::Unbounded => None,
        }
    }

    /// Period in time delay (ns), if finite.
    pub fn ns(&self) -> Option<f64> {
        self.um().map(|um| um / C_UM_PER_NS)
    }
}

/// The full physical configuration of the photon-pair source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    lambda_s_nm: f64,
    lambda_i_nm: f64,
    visibility: f64,
    wavepacket: WavePacketParams,
    pair_rate: f64,
    background_rate: f64,
}

impl SourceSpec {
    pub fn new(
        lambda_s_nm: f64,
        lambda_i_nm: f64,
        visibility: f64,
        wavepacket: WavePacketParams,
        pair_rate: f64,
        background_rate: f64,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(ModelError::Visibility(visibility));
        }
        Ok(Self {
            lambda_s_nm: positive("lambda_s", lambda_s_nm)?,
            lambda_i_nm: positive("lambda_i", lambda_i_nm)?,
            visibility,
            wavepacket,
            pair_rate: non_negative("pair_rate", pair_rate)?,
            background_rate: non_negative("background_rate", background_rate)?,
        })
    }

    /// Builds a source whose signal and idler wavelengths satisfy energy
    /// conservation with `pump_nm` and differ by `detuning`.
    pub fn from_pump_and_detuning(
        pump_nm: f64,
        detuning: Detuning,
        visibility: f64,
        wavepacket: WavePacketParams,
        pair_rate: f64,
        background_rate: f64,
    ) -> Result<Self, ModelError> {
        let pump_nm = positive("pump_wavelength", pump_nm)?;
        let pump_ghz = C_NM_PER_NS / pump_nm;
        let df_ghz = detuning.thz * 1e3;
        let fs = 0.5 * (pump_ghz + df_ghz);
        let fi = 0.5 * (pump_ghz - df_ghz);
        Self::new(
            C_NM_PER_NS / fs,
            C_NM_PER_NS / fi,
            visibility,
            wavepacket,
            pair_rate,
            background_rate,
        )
    }

    pub fn lambda_s_nm(&self) -> f64 {
        self.lambda_s_nm
    }
    pub fn lambda_i_nm(&self) -> f64 {
        self.lambda_i_nm
    }
    pub fn visibility(&self) -> f64 {
        self.visibility
    }
    pub fn wavepacket(&self) -> WavePacketParams {
        self.wavepacket
    }
    pub fn pair_rate(&self) -> f64 {
        self.pair_rate
    }
    pub fn background_rate(&self) -> f64 {
        self.background_rate
    }

    pub fn with_visibility(mut self, visibility: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(ModelError::Visibility(visibility));
        }
        self.visibility = visibility;
        Ok(self)
    }

    pub fn with_rates(mut self, pair_rate: f64, background_rate: f64) -> Result<Self, ModelError> {
        self.pair_rate = non_negative("pair_rate", pair_rate)?;
        self.background_rate = non_negative("background_rate", background_rate)?;
        Ok(self)
    }

    pub fn with_wavepacket(mut self, wavepacket: WavePacketParams) -> Self {
        self.wavepacket = wavepacket;
        self
    }

    /// Angular detuning Δω in rad/ns, recomputed from the wavelengths.
    pub fn delta_omega(&self) -> f64 {
        detuning(self).rad_per_ns
    }
}

/// Biphoton amplitude φ(t_s − t_i) in ns^(−1/2).
pub fn wavepacket_amplitude(t_diff: f64, params: &WavePacketParams) -> Result<f64, ModelError> {
    if !t_diff.is_finite() {
        return Err(ModelError::NonFinite { field: "t_diff" });
    }
    Ok(amplitude(t_diff, params))
}

#[inline]
pub(crate) fn amplitude(t_diff: f64, params: &WavePacketParams) -> f64 {
    let pre = params.norm_sq().sqrt();
    if t_diff >= 0.0 {
        pre * (-params.gamma_s * t_diff).exp()
    } else {
        pre * (params.gamma_i * t_diff).exp()
    }
}

/// `(1 − e^{−δ·d}) / δ`, continuous through δ = 0.
#[inline]
fn expm1_ratio(delta: f64, d: f64) -> f64 {
    if delta == 0.0 {
        d
    } else {
        -(-delta * d).exp_m1() / delta
    }
}

/// Autocorrelation pieces of φ at lag `d ≥ 0`: returns `(R(d), 1 − R(d), R'(d))`.
///
/// `R(d) = A²[e^{−a d}/2a + e^{−b d}/2b + (e^{−a d} − e^{−b d})/(b − a)]`
/// with `a ≤ b` the two rates; the expression is symmetric in the rates.
#[inline]
fn autocorrelation(d: f64, params: &WavePacketParams) -> (f64, f64, f64) {
    let a = params.gamma_s.min(params.gamma_i);
    let b = params.gamma_s.max(params.gamma_i);
    let a2 = params.norm_sq();
    let delta = b - a;
    let ea = (-a * d).exp();
    let eb = (-b * d).exp();
    let mid = ea * expm1_ratio(delta, d);
    let r = a2 * (ea / (2.0 * a) + eb / (2.0 * b) + mid);
    // 1 − R written as a sum of small terms so it stays accurate as d → 0.
    let one_minus = a2 * (-(-a * d).exp_m1() / (2.0 * a) + -(-b * d).exp_m1() / (2.0 * b) - mid);
    // R'(d) = A²[−(e^{−a d} + e^{−b d})/2 + (b e^{−b d} − a e^{−a d})/(b − a)]
    let slope_mid = if delta == 0.0 {
        ea * (1.0 - a * d)
    } else {
        ea * ((-delta * d).exp() - a * expm1_ratio(delta, d))
    };
    let dr = a2 * (-0.5 * (ea + eb) + slope_mid);
    (r.clamp(0.0, 1.0), one_minus.clamp(0.0, 1.0), dr)
}

/// Overlap `∫ φ(τ+Δt) φ(τ−Δt) dτ`, i.e. the autocorrelation at lag `2|Δt|`.
pub fn overlap(delta_t: f64, params: &WavePacketParams) -> Result<f64, ModelError> {
    if !delta_t.is_finite() {
        return Err(ModelError::NonFinite { field: "delta_t" });
    }
    Ok(overlap_parts(delta_t, params).value)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct OverlapParts {
    pub value: f64,
    pub one_minus: f64,
    /// d(overlap)/d(Δt)
    pub slope: f64,
}

#[inline]
pub(crate) fn overlap_parts(delta_t: f64, params: &WavePacketParams) -> OverlapParts {
    let d = 2.0 * delta_t.abs();
    let (value, one_minus, dr) = autocorrelation(d, params);
    OverlapParts {
        value,
        one_minus,
        slope: 2.0 * delta_t.signum() * dr,
    }
}

/// Photon-pair bandwidth ΔΩ/2π in MHz.
pub fn pair_bandwidth(params: &WavePacketParams) -> f64 {
    let s2 = params.gamma_s * params.gamma_s;
    let i2 = params.gamma_i * params.gamma_i;
    let root = (s2 * s2 + 6.0 * s2 * i2 + i2 * i2).sqrt();
    let omega = (0.5 * (root - s2 - i2)).sqrt();
    omega / (2.0 * PI) * 1e3
}

/// Single-photon bandwidth Γ/2π in MHz for a decay rate in ns⁻¹.
pub fn single_photon_bandwidth(gamma: f64) -> f64 {
    gamma / (2.0 * PI) * 1e3
}

/// Signal/idler detuning computed from the vacuum wavelengths.
pub fn detuning(spec: &SourceSpec) -> Detuning {
    let df_ghz = C_NM_PER_NS / spec.lambda_s_nm - C_NM_PER_NS / spec.lambda_i_nm;
    Detuning::from_thz(df_ghz * 1e-3)
}

/// Optical frequency in THz of a vacuum wavelength in nm.
pub fn optical_frequency_thz(lambda_nm: f64) -> f64 {
    C_NM_PER_NS / lambda_nm * 1e-3
}

/// Fringe period in path delay, `c / Δf`.
pub fn beat_period(spec: &SourceSpec) -> BeatPeriod {
    let df = detuning(spec).thz.abs();
    if df == 0.0 {
        BeatPeriod::Unbounded
    } else {
        BeatPeriod::Finite {
            um: C_UM_PER_NS / (df * 1e3),
        }
    }
}

/// Loaded quality factor `(c/λ)/Δν` of a resonance of linewidth `linewidth_mhz`.
pub fn quality_factor(center_wavelength_nm: f64, linewidth_mhz: f64) -> Result<f64, ModelError> {
    let lambda = positive("center_wavelength", center_wavelength_nm)?;
    let width = positive("linewidth", linewidth_mhz)?;
    Ok(C_NM_PER_NS / lambda * 1e3 / width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hom_oracle::{derivative, integrate, integrate_with_breaks};
    use proptest::prelude::*;

    fn quoted_rates() -> WavePacketParams {
        WavePacketParams::new(1.0 / 18.84, 1.0 / 17.53).unwrap()
    }

    fn quad_overlap(dt: f64, p: &WavePacketParams) -> f64 {
        let span = 40.0 / p.gamma_min();
        integrate_with_breaks(
            |t| amplitude(t + dt, p) * amplitude(t - dt, p),
            -span,
            span,
            &[-dt, dt],
            1e-13,
        )
    }

    #[test]
    fn amplitude_at_zero_equal_rates() {
        let p = WavePacketParams::symmetric(0.05).unwrap();
        let v = wavepacket_amplitude(0.0, &p).unwrap();
        assert!((v - 0.05f64.sqrt()).abs() < 1e-15);
        assert!((v - 0.2236).abs() < 1e-4);
    }

    #[test]
    fn amplitude_matches_independent_evaluation() {
        // sqrt(2ab/(a+b)) * exp(-a*10) evaluated in a separate calculator.
        let v = wavepacket_amplitude(10.0, &quoted_rates()).unwrap();
        assert!((v - 0.137_919_637_300_472).abs() < 1e-13);
        let neg = wavepacket_amplitude(-10.0, &quoted_rates()).unwrap();
        assert!(neg < v, "idler side decays faster");
    }

    #[test]
    fn non_finite_inputs_rejected() {
        assert!(wavepacket_amplitude(f64::NAN, &quoted_rates()).is_err());
        assert!(overlap(f64::INFINITY, &quoted_rates()).is_err());
        assert!(WavePacketParams::new(0.0, 1.0).is_err());
        assert!(WavePacketParams::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn overlap_at_zero_is_one() {
        assert_eq!(overlap(0.0, &quoted_rates()).unwrap(), 1.0);
        let parts = overlap_parts(0.0, &quoted_rates());
        assert_eq!(parts.one_minus, 0.0);
        assert_eq!(parts.slope, 0.0);
    }

    #[test]
    fn symmetric_overlap_reduction() {
        let g = 0.07;
        let p = WavePacketParams::symmetric(g).unwrap();
        for &dt in &[0.01, 0.5, 3.0, 11.0, 40.0] {
            let x = 2.0 * g * dt;
            let expected = (-x).exp() * (1.0 + x);
            assert!((overlap(dt, &p).unwrap() - expected).abs() < 1e-15);
            assert!((quad_overlap(dt, &p) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_at_five_ns_matches_quadrature() {
        let p = quoted_rates();
        let q = quad_overlap(5.0, &p);
        // frozen from the quadrature oracle
        assert!((q - 0.894_210_228_990_257_6).abs() < 1e-10);
        assert!((overlap(5.0, &p).unwrap() - q).abs() < 1e-9);
    }

    #[test]
    fn overlap_slope_matches_finite_difference() {
        let p = quoted_rates();
        for &dt in &[-7.0, -0.3, 0.2, 4.0, 25.0] {
            let fd = derivative(|x| overlap(x, &p).unwrap(), dt, 1e-3);
            let an = overlap_parts(dt, &p).slope;
            assert!((fd - an).abs() < 1e-9 * an.abs().max(1e-3), "{dt}: {fd} vs {an}");
        }
    }

    #[test]
    fn one_minus_overlap_is_accurate_near_zero() {
        let g = 0.05;
        let p = WavePacketParams::symmetric(g).unwrap();
        let dt = 1e-6 / g;
        let x = 2.0 * g * dt;
        // series of 1 − e^{−x}(1+x) = x²/2 − x³/3 + x⁴/8
        let series = x * x / 2.0 - x * x * x / 3.0 + x.powi(4) / 8.0;
        let got = overlap_parts(dt, &p).one_minus;
        assert!(((got - series) / series).abs() < 1e-8);
    }

    #[test]
    fn quoted_bandwidths() {
        let p = quoted_rates();
        assert!((pair_bandwidth(&p) - 5.63).abs() < 0.01);
        assert!((single_photon_bandwidth(p.gamma_s()) - 8.45).abs() < 0.01);
        assert!((single_photon_bandwidth(p.gamma_i()) - 9.08).abs() < 0.01);
    }

    #[test]
    fn symmetric_bandwidth_reduction() {
        let g = 0.3;
        let p = WavePacketParams::symmetric(g).unwrap();
        let expected = g * (2f64.sqrt() - 1.0).sqrt() / (2.0 * PI) * 1e3;
        assert!((pair_bandwidth(&p) - expected).abs() < 1e-12);
        let back = WavePacketParams::symmetric_from_pair_bandwidth(pair_bandwidth(&p)).unwrap();
        assert!((back.gamma_s() - g).abs() < 1e-14);
    }

    fn spec(ls: f64, li: f64) -> SourceSpec {
        SourceSpec::new(ls, li, 1.0, quoted_rates(), 0.0, 0.0).unwrap()
    }

    #[test]
    fn detuning_and_beat_period() {
        let s = spec(909.6, 1281.6);
        assert!((detuning(&s).thz - 95.66).abs() < 0.02);
        assert!((beat_period(&s).um().unwrap() - 3.13).abs() < 0.01);
        let d = spec(1064.0, 1064.0);
        assert_eq!(detuning(&d).thz, 0.0);
        assert_eq!(beat_period(&d), BeatPeriod::Unbounded);
    }

    #[test]
    fn pump_energy_conservation() {
        let sum = optical_frequency_thz(909.6) + optical_frequency_thz(1281.6);
        let pump = optical_frequency_thz(532.0);
        assert!(((sum - pump) / pump).abs() < 0.01);
    }

    #[test]
    fn beat_period_at_100_thz() {
        let s =
            SourceSpec::from_pump_and_detuning(532.0, Detuning::from_thz(100.0), 1.0, quoted_rates(), 0.0, 0.0).unwrap();
        assert!((detuning(&s).thz - 100.0).abs() < 1e-9);
        // 299792458 m/s / 100 THz = 2.99792458 µm
        assert!((beat_period(&s).um().unwrap() - 2.997_924_58).abs() < 1e-9);
    }

    #[test]
    fn quality_factors() {
        let q = quality_factor(532.0, 99.1).unwrap();
        assert!((q - 5.7e6).abs() < 0.1e6);
        let carrier_mhz = optical_frequency_thz(780.0) * 1e6;
        assert!((quality_factor(780.0, carrier_mhz).unwrap() - 1.0).abs() < 1e-12);
        // 299792458 / 1064e-9 / 50e6
        assert!((quality_factor(1064.0, 50.0).unwrap() - 5.635_196_578_947e6).abs() < 1.0);
        assert!(quality_factor(-1.0, 1.0).is_err());
    }

    #[test]
    fn source_spec_validation() {
        let p = quoted_rates();
        assert!(SourceSpec::new(909.6, 1281.6, 1.2, p, 0.0, 0.0).is_err());
        assert!(SourceSpec::new(0.0, 1281.6, 0.5, p, 0.0, 0.0).is_err());
        assert!(SourceSpec::new(909.6, 1281.6, 0.5, p, -1.0, 0.0).is_err());
        assert!(SourceSpec::new(909.6, 1281.6, 0.5, p, 1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn normalization(gs in 0.01f64..1.0, gi in 0.01f64..1.0) {
            let p = WavePacketParams::new(gs, gi).unwrap();
            // each side decays at its own rate; span them separately so the
            // quadrature sees the peak at t = 0
            let f = |t: f64| amplitude(t, &p).powi(2);
            let norm = integrate(f, -60.0 / gi, 0.0, 1e-13) + integrate(f, 0.0, 60.0 / gs, 1e-13);
            prop_assert!((norm - 1.0).abs() < 1e-8);
        }

        #[test]
        fn overlap_bounds_and_symmetry(gs in 0.01f64..1.0, gi in 0.01f64..1.0, dt in -500.0f64..500.0) {
            let p = WavePacketParams::new(gs, gi).unwrap();
            let o = overlap(dt, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&o));
            prop_assert_eq!(o, overlap(-dt, &p).unwrap());
            let parts = overlap_parts(dt, &p);
            prop_assert!((parts.value + parts.one_minus - 1.0).abs() < 1e-12);
        }

        #[test]
        fn overlap_decays_monotonically(gs in 0.01f64..1.0, gi in 0.01f64..1.0, dt in 0.0f64..200.0, step in 1e-3f64..10.0) {
            let p = WavePacketParams::new(gs, gi).unwrap();
            prop_assert!(overlap(dt + step, &p).unwrap() <= overlap(dt, &p).unwrap());
        }

        #[test]
        fn bandwidth_monotone(gs in 0.01f64..1.0, gi in 0.01f64..1.0, bump in 1e-3f64..0.5) {
            let base = pair_bandwidth(&WavePacketParams::new(gs, gi).unwrap());
            prop_assert!(pair_bandwidth(&WavePacketParams::new(gs + bump, gi).unwrap()) > base);
            prop_assert!(pair_bandwidth(&WavePacketParams::new(gs, gi + bump).unwrap()) > base);
        }

        #[test]
        fn delay_round_trip(um in -1e6f64..1e6) {
            let d = DelaySetting::from_path_um(um);
            let back = DelaySetting::from_time_ns(d.time_delay_ns()).path_delay_um();
            prop_assert!((back - um).abs() <= 1e-12 * um.abs().max(1e-300));
            let t = d.time_delay_ns();
            let again = DelaySetting::from_path_um(d.path_delay_um()).time_delay_ns();
            prop_assert!((again - t).abs() <= 1e-12 * t.abs().max(1e-300));
        }
    }
}
