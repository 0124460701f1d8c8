//! Delay scans: one acquisition per path-delay setting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coincidence::{count_coincidences, CoincidenceCounts};
use super::simulate::{simulate_stream, SimulationConfig};
use super::SimError;
use crate::model::DelaySetting;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub delay: DelaySetting,
    pub seed: u64,
    pub counts: CoincidenceCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
}

impl ScanResult {
    pub fn path_delays_um(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delay.path_delay_um()).collect()
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for acquisition `index` of a run with `base` seed:
/// `splitmix64(base ⊕ splitmix64(index))`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// Simulates and counts every delay in `delays`. Points are computed in
/// parallel; the output order always matches the input order.
pub fn scan_delay(base: &SimulationConfig, delays: &[DelaySetting]) -> Result<ScanResult, SimError> {
    if delays.is_empty() {
        return Err(SimError::EmptyScan);
    }
    let points = delays
        .par_iter()
        .enumerate()
        .map(|(index, &delay)| {
            let mut cfg = *base;
            cfg.delay = delay;
            cfg.seed = derive_seed(base.seed, index as u64);
            let run = || -> Result<ScanPoint, SimError> {
                let stream = simulate_stream(&cfg)?;
                let counts = count_coincidences(&stream, cfg.coincidence_window_ns, cfg.pairing)?;
                Ok(ScanPoint {
                    delay,
                    seed: cfg.seed,
                    counts,
                })
            };
            run().map_err(|e| SimError::AtDelay {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScanResult { points })
}

/// `n` evenly spaced path delays from `start_um` to `stop_um` inclusive.
pub fn linear_delays(start_um: f64, stop_um: f64, n: usize) -> Vec<DelaySetting> {
    match n {
        0 => Vec::new(),
        1 => vec![DelaySetting::from_path_um(start_um)],
        _ => (0..n)
            .map(|i| {
                let x = start_um + (stop_um - start_um) * i as f64 / (n - 1) as f64;
                DelaySetting::from_path_um(x)
            })
            .collect(),
    }
}
