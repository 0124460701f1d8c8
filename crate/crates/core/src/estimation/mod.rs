//! Parameter recovery: fringe fits of delay scans, G² fits of correlation
//! histograms and maximum-likelihood delay estimation.

mod fringe;
mod g2fit;
pub mod lm;
mod mle;

use thiserror::Error;

pub use fringe::{
    dominant_period, fit_fringe, fit_fringe_data, EnvelopeMode, FringeData, FringeErrors, FringeFit, MIN_PERIODS,
    MIN_POINTS,
};
pub use g2fit::{fit_g2, G2Errors, G2Fit, MIN_BINS_PER_SIDE};
pub use mle::{crb, estimate_delay_mle, log_likelihood, score, summarize, BenchmarkSummary, Crb, DelayEstimate, Tally};

use crate::model::DelaySetting;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("{points} data points, at least {needed} needed")]
    InsufficientData { points: usize, needed: usize },
    #[error("scan spans {span:.4} µm, at least {needed:.4} µm needed")]
    InsufficientSpan { span: f64, needed: f64 },
    #[error("a free envelope needs a starting scale")]
    MissingEnvelopeScale,
    #[error("no convergence after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("normal equations are singular")]
    Singular,
    #[error("non-finite input or model value")]
    NonFinite,
    #[error("histogram peak in bin {bin} of {bins} is too close to the edge")]
    PeakAtEdge { bin: usize, bins: usize },
    #[error("likelihood maximum on the search-interval edge at {:.6e} ns", estimate.time_delay_ns())]
    EdgeMaximum { estimate: DelaySetting },
    #[error("Fisher information undefined at {delta_t_ns:.6e} ns")]
    UndefinedFisher { delta_t_ns: f64 },
    #[error("search interval [{lo_ns:e}, {hi_ns:e}] ns is empty or wider than one beat period")]
    InvalidInterval { lo_ns: f64, hi_ns: f64 },
    #[error("no detected pairs")]
    NoData,
}
