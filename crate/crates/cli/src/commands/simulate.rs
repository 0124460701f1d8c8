//! One acquisition at a fixed delay: the tag stream and its counts.

use hom_core::montecarlo::tags::{write_binary, write_csv};
use hom_core::montecarlo::{count_coincidences, simulate_stream};
use hom_core::{coincidence_probability, pair_bandwidth};

use super::{counts_cells, counts_columns, simulation_config, Outcome};
use crate::config::{Resolved, TagFormat};
use crate::error::CliError;
use crate::output::{fmt_f, OutputFile, Table};

pub fn run(r: &Resolved) -> Result<Outcome, CliError> {
    let spec = r.source()?;
    let seed = r.seed()?;
    let sim = r.simulation()?;
    let cfg = simulation_config(r, spec, seed)?;
    let stream = simulate_stream(&cfg)?;
    let counts = count_coincidences(&stream, cfg.coincidence_window_ns, cfg.pairing)?;

    let mut bytes = Vec::new();
    let name = match sim.tag_format {
        TagFormat::Binary => {
            write_binary(&mut bytes, &stream.tags).map_err(|e| CliError::Runtime(e.to_string()))?;
            "tags.homt"
        }
        TagFormat::Csv => {
            write_csv(&mut bytes, &stream.tags).map_err(|e| CliError::Runtime(e.to_string()))?;
            "tags.csv"
        }
    };

    let mut cols = vec!["path_delay_um", "time_delay_ns", "duration_s", "window_ns"];
    cols.extend(counts_columns());
    cols.push("model_p_c");
    let mut t = Table::new(&cols);
    t.comment(format!(
        "seed {seed}, {} tags, pairing {:?}",
        stream.tags.len(),
        cfg.pairing
    ))
    .comment(format!("pair bandwidth {} MHz", pair_bandwidth(&spec.wavepacket())));
    let mut row = vec![
        fmt_f(cfg.delay.path_delay_um()),
        fmt_f(cfg.delay.time_delay_ns()),
        fmt_f(cfg.duration_s),
        fmt_f(cfg.coincidence_window_ns),
    ];
    row.extend(counts_cells(&counts));
    row.push(fmt_f(coincidence_probability(cfg.delay, &spec).p_coincidence));
    t.row(&row);

    let report = vec![format!(
        "{} tags, {} cross-port and {} same-port coincidences, {:.3} accidentals expected",
        stream.tags.len(),
        counts.coincidences,
        counts.same_port,
        counts.accidental_estimate
    )];
    Ok(Outcome {
        files: vec![OutputFile::new(name, bytes), t.into_file("counts.csv")],
        report,
        seed: Some(seed),
        ..Default::default()
    })
}
