//! One module per subcommand. Each turns a resolved configuration into
//! in-memory output files; writing and the manifest are left to the caller.

pub mod estimate;
pub mod figure1;
pub mod fit;
pub mod g2;
pub mod scan;
pub mod simulate;

use std::path::Path;

use hom_core::montecarlo::SimulationConfig;
use hom_core::{DelaySetting, SourceSpec};

use crate::config::Resolved;
use crate::error::CliError;
use crate::output::{FileDigest, OutputFile};

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<OutputFile>,
    pub inputs: Vec<FileDigest>,
    /// Human-readable lines for stdout.
    pub report: Vec<String>,
    pub seed: Option<u64>,
}

pub const COMMANDS: [&str; 6] = ["figure1", "simulate", "scan", "g2", "fit", "estimate"];

/// Runs `command`. Relative input paths are tried against the working
/// directory first, then against `input_base`.
pub fn run(command: &str, r: &Resolved, input_base: Option<&Path>) -> Result<Outcome, CliError> {
    match command {
        "figure1" => figure1::run(r),
        "simulate" => simulate::run(r),
        "scan" => scan::run(r),
        "g2" => g2::run(r),
        "fit" => fit::run(r, input_base),
        "estimate" => estimate::run(r),
        other => Err(CliError::Config(format!("unknown command `{other}`"))),
    }
}

/// Acquisition settings from `[simulation]` for `spec`.
pub fn simulation_config(r: &Resolved, spec: SourceSpec, seed: u64) -> Result<SimulationConfig, CliError> {
    let s = r.simulation()?;
    let mut eff = [0.0; 4];
    eff.copy_from_slice(&s.efficiency);
    let cfg = SimulationConfig {
        spec,
        delay: DelaySetting::from_path_um(s.delay_um),
        duration_s: s.duration_s,
        coincidence_window_ns: s.window_ns,
        detection_efficiency: eff,
        jitter_sigma_ns: s.jitter_ns,
        seed,
        mode: s.mode,
        pairing: s.pairing,
        pair_count: s.pairs,
        max_events: s.max_events,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn counts_columns() -> Vec<&'static str> {
    vec![
        "coincidences",
        "same_port",
        "accidental_estimate",
        "net_coincidences",
        "singles_c_signal",
        "singles_c_idler",
        "singles_d_signal",
        "singles_d_idler",
    ]
}

pub(crate) fn counts_cells(c: &hom_core::montecarlo::CoincidenceCounts) -> Vec<String> {
    use crate::output::fmt_f;
    use hom_core::montecarlo::tags::Channel;
    let single = |ch: Channel| c.singles[ch.code() as usize].to_string();
    vec![
        c.coincidences.to_string(),
        c.same_port.to_string(),
        fmt_f(c.accidental_estimate),
        fmt_f(c.net_coincidences()),
        single(Channel::CSignal),
        single(Channel::CIdler),
        single(Channel::DSignal),
        single(Channel::DIdler),
    ]
}
