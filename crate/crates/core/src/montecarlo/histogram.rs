//! Start–stop histogram of signal − idler detection-time differences.

use serde::{Deserialize, Serialize};

use super::tags::TagStream;
use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub bin_width_ns: f64,
    /// Left edge of the first bin (= −span).
    pub start_ns: f64,
    pub counts: Vec<u64>,
}

impl G2Histogram {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.start_ns + (i as f64 + 0.5) * self.bin_width_ns
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let lo = self.start_ns + i as f64 * self.bin_width_ns;
        (lo, lo + self.bin_width_ns)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(N₊ − N₋)/√(N₊ + N₋)` with N± the counts strictly right/left of τ = 0.
    /// A bin straddling zero is excluded.
    pub fn asymmetry_z(&self) -> f64 {
        let (mut left, mut right) = (0u64, 0u64);
        for (i, &c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bin_edges(i);
            if hi <= 0.0 {
                left += c;
            } else if lo >= 0.0 {
                right += c;
            }
        }
        let total = (left + right) as f64;
        if total == 0.0 {
            0.0
        } else {
            (right as f64 - left as f64) / total.sqrt()
        }
    }
}

/// All-pairs histogram of `t_signal − t_idler` over `[−span, −span + n·w)`
/// with `n = ⌊2·span / w⌋` bins of width `w`.
pub fn g2_histogram(stream: &TagStream, bin_width_ns: f64, span_ns: f64) -> Result<G2Histogram, SimError> {
    if !(bin_width_ns.is_finite() && bin_width_ns > 0.0) {
        return Err(SimError::Config {
            field: "bin_width_ns",
            value: bin_width_ns,
        });
    }
    if !(span_ns.is_finite() && span_ns >= bin_width_ns) {
        return Err(SimError::DegenerateBinning { span_ns, bin_width_ns });
    }
    if let Some(index) = stream.first_unsorted() {
        return Err(SimError::Unsorted { index });
    }
    let bin_ps = (bin_width_ns * 1e3).round() as i64;
    let span_ps = (span_ns * 1e3).round() as i64;
    let nbins = (2 * span_ps / bin_ps) as usize;
    let upper = -span_ps + nbins as i64 * bin_ps;
    let mut counts = vec![0u64; nbins];

    let (signals, idlers): (Vec<i64>, Vec<i64>) = {
        let mut s = Vec::new();
        let mut i = Vec::new();
        for t in &stream.tags {
            if t.channel.is_signal() {
                s.push(t.timestamp as i64);
            } else {
                i.push(t.timestamp as i64);
            }
        }
        (s, i)
    };

    let mut lo = 0usize;
    for &ts in &signals {
        // idler times in (ts − upper, ts + span]
        while lo < idlers.len() && ts - idlers[lo] >= upper {
            lo += 1;
        }
        let mut k = lo;
        while k < idlers.len() && ts - idlers[k] >= -span_ps {
            let d = ts - idlers[k];
            counts[((d + span_ps) / bin_ps) as usize] += 1;
            k += 1;
        }
    }

    Ok(G2Histogram {
        bin_width_ns: bin_ps as f64 * 1e-3,
        start_ns: -span_ps as f64 * 1e-3,
        counts,
    })
}
