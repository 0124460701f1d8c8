//! Synthetic time-tag generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tags::{Channel, TagStream, TimeTag};
use super::{Pairing, SimError};
use crate::interference::{coincidence, density_split};
use crate::model::{DelaySetting, SourceSpec, WavePacketParams};

/// How the signal–idler time difference and the routing of a pair are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Time difference from φ², routing from an independent Bernoulli(P_c).
    #[default]
    Aggregate,
    /// Time difference and routing drawn jointly from the time-resolved
    /// coincidence density.
    TimeResolved,
}

/// Everything needed to produce one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub spec: SourceSpec,
    pub delay: DelaySetting,
    pub duration_s: f64,
    /// Coincidence window half-width.
    pub coincidence_window_ns: f64,
    /// Indexed by [`Channel::code`].
    pub detection_efficiency: [f64; 4],
    pub jitter_sigma_ns: f64,
    pub seed: u64,
    pub mode: SamplingMode,
    pub pairing: Pairing,
    /// Emit exactly this many pairs, uniformly over the acquisition
    /// (a Poisson process conditioned on its count). `None` draws the
    /// count from the Poisson law.
    pub pair_count: Option<u64>,
    /// Upper bound on the expected number of tags.
    pub max_events: u64,
}

pub const DEFAULT_WINDOW_NS: f64 = 50.0;
pub const DEFAULT_MAX_EVENTS: u64 = 50_000_000;

impl SimulationConfig {
    pub fn new(spec: SourceSpec, duration_s: f64, seed: u64) -> Self {
        Self {
            spec,
            delay: DelaySetting::ZERO,
            duration_s,
            coincidence_window_ns: DEFAULT_WINDOW_NS,
            detection_efficiency: [1.0; 4],
            jitter_sigma_ns: 0.0,
            seed,
            mode: SamplingMode::Aggregate,
            pairing: Pairing::Greedy,
            pair_count: None,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &'static str, value: f64| SimError::Config { field, value };
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(bad("duration_s", self.duration_s));
        }
        if !(self.coincidence_window_ns.is_finite() && self.coincidence_window_ns > 0.0) {
            return Err(bad("coincidence_window_ns", self.coincidence_window_ns));
        }
        for &e in &self.detection_efficiency {
            if !(0.0..=1.0).contains(&e) {
                return Err(bad("detection_efficiency", e));
            }
        }
        if !(self.jitter_sigma_ns.is_finite() && self.jitter_sigma_ns >= 0.0) {
            return Err(bad("jitter_sigma_ns", self.jitter_sigma_ns));
        }
        if !self.delay.time_delay_ns().is_finite() {
            return Err(bad("delay", self.delay.time_delay_ns()));
        }
        Ok(())
    }

    pub fn expected_pairs(&self) -> f64 {
        match self.pair_count {
            Some(n) => n as f64,
            None => self.spec.pair_rate() * self.duration_s,
        }
    }

    pub fn expected_events(&self) -> f64 {
        2.0 * self.expected_pairs() + 4.0 * self.spec.background_rate() * self.duration_s
    }
}

/// Inverse CDF of the φ² time-difference density.
///
/// `u ∈ (0, 1]`. The negative branch (idler later) carries weight
/// `Γs/(Γs+Γi)` and decays at `2Γi`; the positive branch decays at `2Γs`.
pub fn sample_time_difference(u: f64, params: &WavePacketParams) -> f64 {
    let gs = params.gamma_s();
    let gi = params.gamma_i();
    let p_neg = gs / (gs + gi);
    if u < p_neg {
        (u / p_neg).ln() / (2.0 * gi)
    } else {
        -((1.0 - u) / (1.0 - p_neg)).max(f64::MIN_POSITIVE).ln() / (2.0 * gs)
    }
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

fn to_ps(t_ns: f64) -> u64 {
    (t_ns * 1e3).round() as u64
}

fn jitter<R: Rng>(rng: &mut R, normal: &Option<Normal<f64>>) -> f64 {
    normal.as_ref().map_or(0.0, |n| n.sample(rng))
}

const PAIR_STREAM: u64 = 0;

/// Generates a sorted time-tag stream for one acquisition.
///
/// Pairs are emitted on one ChaCha8 stream; each detector's background
/// runs on its own stream so background tags do not depend on the pair
/// settings. Identical configurations produce identical streams.
pub fn simulate_stream(config: &SimulationConfig) -> Result<TagStream, SimError> {
    config.validate()?;
    let expected = config.expected_events();
    if expected > config.max_events as f64 {
        return Err(SimError::MemoryBudget {
            expected,
            budget: config.max_events,
        });
    }
    let spec = &config.spec;
    let wp = spec.wavepacket();
    let dt = config.delay.time_delay_ns();
    let span_ns = config.duration_s * 1e9;
    let duration_ps = to_ps(span_ns);
    let p_c = coincidence(dt, spec).p;
    let normal =
        (config.jitter_sigma_ns > 0.0).then(|| Normal::new(0.0, config.jitter_sigma_ns).expect("sigma checked"));
    let eff = config.detection_efficiency;

    let mut tags = Vec::with_capacity(expected.ceil() as usize + 16);
    let push = |t_ns: f64, channel: Channel, tags: &mut Vec<TimeTag>| {
        if t_ns >= 0.0 {
            let ts = to_ps(t_ns);
            if ts < duration_ps {
                tags.push(TimeTag { timestamp: ts, channel });
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(PAIR_STREAM);
    let emission_times: Box<dyn Iterator<Item = f64>> = match config.pair_count {
        Some(n) => {
            let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * span_ns).collect();
            times.sort_by(f64::total_cmp);
            Box::new(times.into_iter())
        }
        None => Box::new(PoissonTimes::new(spec.pair_rate() * 1e-9, span_ns, rng.clone())),
    };
    // Keep the emission-time RNG independent from the per-pair draws.
    let mut pair_rng = ChaCha8Rng::seed_from_u64(config.seed);
    pair_rng.set_stream(PAIR_STREAM + 1);

    for t0 in emission_times {
        let (tau, coincident) = match config.mode {
            SamplingMode::Aggregate => {
                let tau = sample_time_difference(open_unit(&mut pair_rng), &wp);
                (tau, pair_rng.random::<f64>() < p_c)
            }
            SamplingMode::TimeResolved => {
                let branch = pair_rng.random::<f64>() < 0.5;
                let delta = sample_time_difference(open_unit(&mut pair_rng), &wp);
                let tau = if branch { delta - dt } else { delta + dt };
                let (g, m) = density_split(tau, dt, spec);
                (tau, pair_rng.random::<f64>() * m < g)
            }
        };
        let c_side = pair_rng.random::<f64>() < 0.5;
        let (ch_s, ch_i) = match (coincident, c_side) {
            (true, true) => (Channel::CSignal, Channel::DIdler),
            (true, false) => (Channel::DSignal, Channel::CIdler),
            (false, true) => (Channel::CSignal, Channel::CIdler),
            (false, false) => (Channel::DSignal, Channel::DIdler),
        };
        let keep_s = pair_rng.random::<f64>() < eff[ch_s.code() as usize];
        let keep_i = pair_rng.random::<f64>() < eff[ch_i.code() as usize];
        let js = jitter(&mut pair_rng, &normal);
        let ji = jitter(&mut pair_rng, &normal);
        if keep_s {
            push(t0 + tau + js, ch_s, &mut tags);
        }
        if keep_i {
            push(t0 + ji, ch_i, &mut tags);
        }
    }

    let bg_rate = spec.background_rate() * 1e-9;
    for ch in Channel::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(PAIR_STREAM + 2 + ch.code() as u64);
        for t in PoissonTimes::new(bg_rate, span_ns, rng) {
            push(t, ch, &mut tags);
        }
    }

    tags.sort_unstable();
    Ok(TagStream { tags, duration_ps })
}

/// Arrival times of a homogeneous Poisson process on `[0, span)`,
/// generated from exponential gaps by inverse-CDF sampling.
struct PoissonTimes {
    rate: f64,
    span: f64,
    t: f64,
    rng: ChaCha8Rng,
}

impl PoissonTimes {
    fn new(rate_per_ns: f64, span_ns: f64, rng: ChaCha8Rng) -> Self {
        Self {
            rate: rate_per_ns,
            span: span_ns,
            t: 0.0,
            rng,
        }
    }
}

impl Iterator for PoissonTimes {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.rate <= 0.0 {
            return None;
        }
        self.t += -open_unit(&mut self.rng).ln() / self.rate;
        (self.t < self.span).then_some(self.t)
    }
}
