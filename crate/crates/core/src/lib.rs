//! Two-photon interference between non-degenerate photon pairs: the
//! wave-packet model, coincidence probabilities and Fisher information,
//! a time-tag Monte Carlo and the estimators used on its output.
//!
//! Units: time in ns, rates in ns⁻¹, angular frequencies in rad/ns,
//! wavelengths in nm, optical path delays in µm.

pub mod estimation;
pub mod interference;
pub mod model;
pub mod montecarlo;

pub use interference::*;
pub use model::*;
