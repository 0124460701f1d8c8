//! Repeated maximum-likelihood delay estimates at the fringe quadrature
//! point, compared with the Cramér–Rao bound.

use hom_core::estimation::{crb, estimate_delay_mle, summarize, BenchmarkSummary, EstimationError, Tally};
use hom_core::montecarlo::{count_coincidences, derive_seed, simulate_stream};
use hom_core::{beat_period, quadrature_point, DelaySetting, SourceSpec};
use rayon::prelude::*;
use serde::Serialize;

use super::{simulation_config, Outcome};
use crate::config::Resolved;
use crate::error::CliError;
use crate::output::{fmt_f, OutputFile, Table};

#[derive(Debug, Clone, Copy)]
enum Status {
    Interior,
    Edge,
    NoData,
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    seed: u64,
    tally: Tally,
    estimate_ns: f64,
    status: Status,
}

#[derive(Debug, Clone, Serialize)]
struct Benchmark {
    visibility: f64,
    truth_ns: f64,
    search_lo_ns: f64,
    search_hi_ns: f64,
    pairs_per_trial: u64,
    skipped_trials: usize,
    /// Variance at the first visibility over the variance here.
    information_relative_to_first: f64,
    /// `(V / V_first)²`.
    v_squared_relative_to_first: f64,
    #[serde(flatten)]
    summary: BenchmarkSummary,
}

#[derive(Serialize)]
struct Report {
    benchmark: Vec<Benchmark>,
}

fn run_trials(r: &Resolved, spec: SourceSpec, seed: u64) -> Result<(DelaySetting, f64, Vec<Trial>), CliError> {
    let e = r.estimate()?;
    let truth = quadrature_point(&spec)
        .ok_or_else(|| CliError::Config("estimate needs a non-degenerate source (no quadrature point)".into()))?;
    let quarter = beat_period(&spec).ns().expect("finite beat period") / 4.0;
    let lo = DelaySetting::from_time_ns(truth.time_delay_ns() - quarter);
    let hi = DelaySetting::from_time_ns(truth.time_delay_ns() + quarter);
    let mut base = simulation_config(r, spec, seed)?;
    base.delay = truth;
    base.pair_count = Some(e.pairs_per_trial);
    base.duration_s = e.trial_duration_s;
    base.validate()?;

    let trials = (0..e.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut cfg = base;
            cfg.seed = derive_seed(seed, t);
            let stream = simulate_stream(&cfg)?;
            let counts = count_coincidences(&stream, cfg.coincidence_window_ns, cfg.pairing)?;
            let tally = Tally::from_counts(&counts);
            let (estimate_ns, status) = match estimate_delay_mle(tally, &spec, lo, hi) {
                Ok(d) => (d.delta_t_ns, Status::Interior),
                Err(EstimationError::EdgeMaximum { estimate }) => (estimate.time_delay_ns(), Status::Edge),
                Err(EstimationError::NoData) => (f64::NAN, Status::NoData),
                Err(e) => return Err(CliError::from(e)),
            };
            Ok(Trial {
                seed: cfg.seed,
                tally,
                estimate_ns,
                status,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((truth, quarter, trials))
}

pub fn run(r: &Resolved) -> Result<Outcome, CliError> {
    let spec = r.source()?;
    let seed = r.seed()?;
    let e = r.estimate()?;
    if e.trials < 2 {
        return Err(CliError::Config(format!(
            "estimate.trials: need at least 2, got {}",
            e.trials
        )));
    }
    if e.pairs_per_trial == 0 {
        return Err(CliError::Config("estimate.pairs_per_trial must be positive".into()));
    }
    let visibilities = e.visibilities.clone().unwrap_or_else(|| vec![spec.visibility()]);
    if visibilities.is_empty() {
        return Err(CliError::Config("estimate.visibilities: empty".into()));
    }

    let mut table = Table::new(&["visibility", "trial", "seed", "k", "n", "delta_t_ns", "status"]);
    table
        .comment(format!("base seed {seed}; trial seeds are shared across visibilities"))
        .comment("status: interior, edge (maximum on the search boundary, kept at that value) or no-data (skipped)");
    let mut benchmarks: Vec<Benchmark> = Vec::new();
    let mut report = Vec::new();
    for &v in &visibilities {
        let spec_v = spec
            .with_visibility(v)
            .map_err(|err| CliError::Config(format!("estimate.visibilities: {err}")))?;
        let (truth, quarter, trials) = run_trials(r, spec_v, seed)?;
        let bound = crb(truth, &spec_v, e.pairs_per_trial)?
            .value()
            .ok_or_else(|| CliError::Runtime(format!("no Fisher information at the quadrature point for V = {v}")))?;
        let mut estimates = Vec::with_capacity(trials.len());
        let (mut edges, mut skipped) = (0, 0);
        for (i, t) in trials.iter().enumerate() {
            let status = match t.status {
                Status::Interior => "interior",
                Status::Edge => "edge",
                Status::NoData => "no-data",
            };
            match t.status {
                Status::Interior => estimates.push(t.estimate_ns),
                Status::Edge => {
                    edges += 1;
                    estimates.push(t.estimate_ns);
                }
                Status::NoData => skipped += 1,
            }
            table.row(&[
                fmt_f(v),
                i.to_string(),
                t.seed.to_string(),
                t.tally.k.to_string(),
                t.tally.n.to_string(),
                fmt_f(t.estimate_ns),
                status.to_string(),
            ]);
        }
        if estimates.len() < 2 {
            return Err(CliError::Runtime(format!("V = {v}: fewer than 2 trials with data")));
        }
        let summary = summarize(&estimates, truth.time_delay_ns(), bound, edges);
        let (first_var, first_v) = benchmarks
            .first()
            .map(|b| (b.summary.variance_ns2, b.visibility))
            .unwrap_or((summary.variance_ns2, v));
        report.push(format!(
            "V = {v}: variance/CRB {:.3} +- {:.3}, bias {:.3e} ns, {edges} edge trials",
            summary.variance_ratio,
            summary.variance_se_ns2 / summary.crb_ns2,
            summary.bias_ns
        ));
        benchmarks.push(Benchmark {
            visibility: v,
            truth_ns: truth.time_delay_ns(),
            search_lo_ns: truth.time_delay_ns() - quarter,
            search_hi_ns: truth.time_delay_ns() + quarter,
            pairs_per_trial: e.pairs_per_trial,
            skipped_trials: skipped,
            information_relative_to_first: first_var / summary.variance_ns2,
            v_squared_relative_to_first: (v / first_v).powi(2),
            summary,
        });
    }
    let text = toml::to_string(&Report { benchmark: benchmarks }).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(Outcome {
        files: vec![
            table.into_file("estimate_trials.csv"),
            OutputFile::new("estimate_summary.toml", text.into_bytes()),
        ],
        report,
        seed: Some(seed),
        ..Default::default()
    })
}
