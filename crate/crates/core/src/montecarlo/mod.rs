//! Photon-pair Monte Carlo: event streams, coincidence counting,
//! correlation histograms and delay scans.
//!
//! Each pair is emitted at a Poisson time, gets a signal − idler time
//! difference from φ² and is routed either to opposite beam-splitter
//! ports (a coincidence, probability `P_c`) or to a common port chosen
//! 50/50. Dead time, afterpulsing and multi-pair emission are not modeled;
//! at the source rates of interest the mean number of pairs per coherence
//! time is far below one. The interferometer delay itself (fs to ps) is
//! not added to the arrival times.

mod coincidence;
mod histogram;
mod scan;
mod simulate;
pub mod tags;

use thiserror::Error;

pub use coincidence::{count_coincidences, CoincidenceCounts, Pairing, CHANNEL_PAIRS};
pub use histogram::{g2_histogram, G2Histogram};
pub use scan::{derive_seed, linear_delays, scan_delay, splitmix64, ScanPoint, ScanResult};
pub use simulate::{
    sample_time_difference, simulate_stream, SamplingMode, SimulationConfig, DEFAULT_MAX_EVENTS, DEFAULT_WINDOW_NS,
};
pub use tags::{Channel, TagStream, TimeTag};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid {field}: {value}")]
    Config { field: &'static str, value: f64 },
    #[error("expected {expected:.3e} events exceeds the budget of {budget}")]
    MemoryBudget { expected: f64, budget: u64 },
    #[error("time tags are not sorted (first out-of-order tag at index {index})")]
    Unsorted { index: usize },
    #[error("span {span_ns} ns is smaller than the bin width {bin_width_ns} ns")]
    DegenerateBinning { span_ns: f64, bin_width_ns: f64 },
    #[error("delay scan needs at least one delay")]
    EmptyScan,
    #[error("delay #{index}: {source}")]
    AtDelay {
        index: usize,
        #[source]
        source: Box<SimError>,
    },
}
