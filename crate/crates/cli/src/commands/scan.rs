//! Coincidence counts along a path-delay scan.

use hom_core::montecarlo::{linear_delays, scan_delay};
use hom_core::{beat_period, coincidence_probability};

use super::{counts_cells, counts_columns, simulation_config, Outcome};
use crate::config::Resolved;
use crate::error::CliError;
use crate::output::{fmt_f, Table};

pub fn run(r: &Resolved) -> Result<Outcome, CliError> {
    let spec = r.source()?;
    let seed = r.seed()?;
    let scan = r.scan()?;
    let base = simulation_config(r, spec, seed)?;
    if scan.points < 2 {
        return Err(CliError::Config(format!(
            "scan.points: need at least 2, got {}",
            scan.points
        )));
    }
    let stop = match (scan.stop_um, scan.periods) {
        (Some(stop), _) => stop,
        (None, Some(periods)) => {
            let period = beat_period(&spec).um().ok_or_else(|| {
                CliError::Config("scan.stop_um is required for a degenerate source (no beat period)".into())
            })?;
            scan.start_um + periods * period
        }
        (None, None) => return Err(CliError::Config("scan: set stop_um or periods".into())),
    };
    let delays = linear_delays(scan.start_um, stop, scan.points);
    let result = scan_delay(&base, &delays)?;

    let mut cols = vec!["index", "path_delay_um", "time_delay_ns", "seed"];
    cols.extend(counts_columns());
    cols.push("model_p_c");
    let mut t = Table::new(&cols);
    t.comment(format!(
        "base seed {seed}; {} s per point, window +-{} ns, pairing {:?}, mode {:?}",
        base.duration_s, base.coincidence_window_ns, base.pairing, base.mode
    ));
    if let Some(p) = beat_period(&spec).um() {
        t.comment(format!("configured beat period {p} um"));
    }
    for (i, p) in result.points.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            fmt_f(p.delay.path_delay_um()),
            fmt_f(p.delay.time_delay_ns()),
            p.seed.to_string(),
        ];
        row.extend(counts_cells(&p.counts));
        row.push(fmt_f(coincidence_probability(p.delay, &spec).p_coincidence));
        t.row(&row);
    }
    let total: u64 = result.points.iter().map(|p| p.counts.coincidences).sum();
    Ok(Outcome {
        report: vec![format!(
            "{} delay points from {} to {} um, {total} cross-port coincidences",
            result.points.len(),
            scan.start_um,
            stop
        )],
        files: vec![t.into_file("scan.csv")],
        seed: Some(seed),
        ..Default::default()
    })
}
