//! Windowed coincidence counting between detector channels.

use serde::{Deserialize, Serialize};

use super::tags::{Channel, TagStream};
use super::SimError;

/// Matching rule for tags of two channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Each tag is matched to its nearest unused partner inside the window;
    /// a tag takes part in at most one coincidence of a given channel pair.
    #[default]
    Greedy,
    /// Every partner inside the window counts.
    AllPairs,
}

/// The two cross-port channel pairs, then the two same-port pairs.
pub const CHANNEL_PAIRS: [(Channel, Channel); 4] = [
    (Channel::CSignal, Channel::DIdler),
    (Channel::DSignal, Channel::CIdler),
    (Channel::CSignal, Channel::CIdler),
    (Channel::DSignal, Channel::DIdler),
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    /// Signal–idler coincidences on opposite ports.
    pub coincidences: u64,
    /// Signal–idler coincidences on the same port (bunched pairs).
    pub same_port: u64,
    /// Per channel pair, in [`CHANNEL_PAIRS`] order.
    pub per_pair: [u64; 4],
    /// Indexed by [`Channel::code`].
    pub singles: [u64; 4],
    /// Expected accidental cross-port coincidences, `Σ r₁·r₂·2w·T`.
    pub accidental_estimate: f64,
    /// Same estimate for the same-port channel pairs.
    pub accidental_same_port: f64,
    pub window_ns: f64,
    pub duration_s: f64,
}

impl CoincidenceCounts {
    /// Cross-port coincidences with the accidental expectation removed.
    pub fn net_coincidences(&self) -> f64 {
        self.coincidences as f64 - self.accidental_estimate
    }

    /// Pairs seen in any port configuration.
    pub fn detected_pairs(&self) -> u64 {
        self.coincidences + self.same_port
    }
}

/// Counts coincidences with `|t_s − t_i| ≤ window_ns` in a sorted stream.
pub fn count_coincidences(stream: &TagStream, window_ns: f64, pairing: Pairing) -> Result<CoincidenceCounts, SimError> {
    if !(window_ns.is_finite() && window_ns > 0.0) {
        return Err(SimError::Config {
            field: "coincidence_window_ns",
            value: window_ns,
        });
    }
    if let Some(index) = stream.first_unsorted() {
        return Err(SimError::Unsorted { index });
    }
    let window_ps = (window_ns * 1e3).round() as u64;
    let by_channel: Vec<Vec<u64>> = Channel::ALL.iter().map(|&c| stream.channel_times(c)).collect();
    let singles = [0, 1, 2, 3].map(|i| by_channel[i].len() as u64);

    let per_pair = CHANNEL_PAIRS.map(|(a, b)| {
        let xs = &by_channel[a.code() as usize];
        let ys = &by_channel[b.code() as usize];
        match pairing {
            Pairing::Greedy => greedy_matches(xs, ys, window_ps),
            Pairing::AllPairs => all_pair_matches(xs, ys, window_ps),
        }
    });

    let duration_s = stream.duration_s();
    let accidental = |pairs: &[(Channel, Channel)]| -> f64 {
        if duration_s <= 0.0 {
            return 0.0;
        }
        pairs
            .iter()
            .map(|&(a, b)| {
                let ra = singles[a.code() as usize] as f64 / duration_s;
                let rb = singles[b.code() as usize] as f64 / duration_s;
                ra * rb * 2.0 * window_ns * 1e-9 * duration_s
            })
            .sum()
    };

    Ok(CoincidenceCounts {
        coincidences: per_pair[0] + per_pair[1],
        same_port: per_pair[2] + per_pair[3],
        per_pair,
        singles,
        accidental_estimate: accidental(&CHANNEL_PAIRS[..2]),
        accidental_same_port: accidental(&CHANNEL_PAIRS[2..]),
        window_ns,
        duration_s,
    })
}

/// Two-pointer nearest-neighbour matching; ties go to the earlier partner.
fn greedy_matches(xs: &[u64], ys: &[u64], window: u64) -> u64 {
    let mut used = vec![false; ys.len()];
    let mut lo = 0usize;
    let mut count = 0;
    for &x in xs {
        let start = x.saturating_sub(window);
        while lo < ys.len() && (ys[lo] < start || used[lo]) {
            lo += 1;
        }
        let mut best: Option<(usize, u64)> = None;
        let mut k = lo;
        while k < ys.len() && ys[k] <= x + window {
            if !used[k] {
                let d = ys[k].abs_diff(x);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
            k += 1;
        }
        if let Some((k, _)) = best {
            used[k] = true;
            count += 1;
        }
    }
    count
}

fn all_pair_matches(xs: &[u64], ys: &[u64], window: u64) -> u64 {
    let mut lo = 0usize;
    let mut hi = 0usize;
    let mut count = 0;
    for &x in xs {
        let start = x.saturating_sub(window);
        while lo < ys.len() && ys[lo] < start {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < ys.len() && ys[hi] <= x + window {
            hi += 1;
        }
        count += (hi - lo) as u64;
    }
    count
}
