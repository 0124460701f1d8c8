//! Theory curves: coincidence probability and Fisher information versus
//! delay for several detunings, and the visibility-robustness table.

use hom_core::{
    coincidence_probability, fisher_information, fisher_ratio_curve, DelaySetting, Detuning, SourceSpec,
    WavePacketParams,
};

use super::Outcome;
use crate::config::{DetuningConvention, Figure1Section, Resolved};
use crate::error::CliError;
use crate::output::{fmt_f, Table};

fn source(f: &Figure1Section, detuning: Detuning, visibility: f64) -> Result<SourceSpec, CliError> {
    let wp = WavePacketParams::symmetric(f.gamma_per_ns)
        .map_err(|e| CliError::Config(format!("figure1.gamma_per_ns: {e}")))?;
    SourceSpec::from_pump_and_detuning(f.pump_nm, detuning, visibility, wp, 0.0, 0.0)
        .map_err(|e| CliError::Config(format!("figure1: {e}")))
}

fn validate(f: &Figure1Section) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Config(msg));
    if f.points < 2 {
        return bad(format!("figure1.points: need at least 2, got {}", f.points));
    }
    if !(f.delay_span_ns.is_finite() && f.delay_span_ns > 0.0) {
        return bad(format!("figure1.delay_span_ns: {} is not positive", f.delay_span_ns));
    }
    if f.detunings_thz.is_empty() {
        return bad("figure1.detunings_thz: empty".into());
    }
    if !(0.0..=1.0).contains(&f.visibility) {
        return bad(format!("figure1.visibility: {} is outside [0, 1]", f.visibility));
    }
    if f.ratio_points < 2 || !(f.ratio_v_min > 0.0 && f.ratio_v_min < f.ratio_v_max && f.ratio_v_max <= 1.0) {
        return bad(format!(
            "figure1.ratio_v_min/ratio_v_max/ratio_points: need 0 < {} < {} <= 1 and at least 2 points",
            f.ratio_v_min, f.ratio_v_max
        ));
    }
    Ok(())
}

fn label(thz: f64) -> String {
    format!("{thz}")
}

pub fn run(r: &Resolved) -> Result<Outcome, CliError> {
    let f = r.figure1()?;
    validate(&f)?;
    let specs = f
        .detunings_thz
        .iter()
        .map(|&d| source(&f, Detuning::from_thz(d), f.visibility))
        .collect::<Result<Vec<_>, _>>()?;

    // symmetric grid with Δt = 0 exactly on the middle point for odd counts
    let m = (f.points - 1) as f64;
    let delays: Vec<f64> = (0..f.points)
        .map(|j| f.delay_span_ns * (2.0 * j as f64 - m) / m)
        .collect();

    let mut cols_a = vec!["delay_ns".to_string()];
    let mut cols_b = vec!["delay_ns".to_string()];
    for &d in &f.detunings_thz {
        cols_a.push(format!("p_c_df{}", label(d)));
        cols_b.push(format!("fisher_df{}", label(d)));
    }
    for &d in &f.detunings_thz {
        cols_b.push(format!("defined_df{}", label(d)));
    }
    let mut a = Table::new(&cols_a);
    a.comment("coincidence probability versus time delay")
        .comment(format!(
            "decay rate {} /ns, pump {} nm, visibility {}",
            f.gamma_per_ns, f.pump_nm, f.visibility
        ))
        .comment("columns df<x>: frequency detuning x THz");
    let mut b = Table::new(&cols_b);
    b.comment("Fisher information per detected pair (ns^-2) versus time delay")
        .comment("defined = 0 marks 0/0 points, where the value is reported as 0");

    let mut undefined = 0usize;
    for &t in &delays {
        let delay = DelaySetting::from_time_ns(t);
        let mut ra = vec![fmt_f(t)];
        let mut rb = vec![fmt_f(t)];
        let mut flags = Vec::new();
        for s in &specs {
            ra.push(fmt_f(coincidence_probability(delay, s).p_coincidence));
            let fp = fisher_information(delay, s);
            rb.push(fmt_f(fp.fisher));
            flags.push(if fp.defined { "1" } else { "0" }.to_string());
            undefined += usize::from(!fp.defined);
        }
        rb.extend(flags);
        a.row(&ra);
        b.row(&rb);
    }

    let ratio_detuning = match f.convention {
        DetuningConvention::RadPerPs => Detuning::from_rad_per_ns(f.ratio_detuning * 1e3),
        DetuningConvention::Cycles => Detuning::from_thz(f.ratio_detuning),
    };
    let entangled = source(&f, ratio_detuning, 1.0)?;
    let degenerate = source(&f, Detuning::from_thz(0.0), 1.0)?;
    let step = (f.ratio_v_max - f.ratio_v_min) / (f.ratio_points - 1) as f64;
    let vs: Vec<f64> = (0..f.ratio_points)
        .map(|i| {
            if i + 1 == f.ratio_points {
                f.ratio_v_max
            } else {
                f.ratio_v_min + step * i as f64
            }
        })
        .collect();
    let rows = fisher_ratio_curve(&vs, &entangled, &degenerate).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut c = Table::new(&["visibility", "ratio_entangled", "ratio_degenerate", "v_squared"]);
    c.comment("maximal Fisher information at visibility V over its value at V = 1")
        .comment(format!(
            "entangled: detuning {} rad/ns ({} THz); degenerate: {} / {} nm",
            ratio_detuning.rad_per_ns,
            ratio_detuning.thz,
            degenerate.lambda_s_nm(),
            degenerate.lambda_i_nm()
        ));
    let mut report = Vec::new();
    for row in &rows {
        c.row(&[
            fmt_f(row.visibility),
            fmt_f(row.ratio_entangled),
            fmt_f(row.ratio_degenerate),
            fmt_f(row.visibility * row.visibility),
        ]);
    }
    if let Some(row) = rows.first() {
        report.push(format!(
            "V = {}: entangled ratio {:.4} (V^2 = {:.4}), degenerate ratio {:.4}",
            row.visibility,
            row.ratio_entangled,
            row.visibility * row.visibility,
            row.ratio_degenerate
        ));
    }
    report.push(format!(
        "{} delay points, {undefined} undefined Fisher values",
        delays.len()
    ));

    Ok(Outcome {
        files: vec![
            a.into_file("fig1a_coincidence.csv"),
            b.into_file("fig1b_fisher.csv"),
            c.into_file("fig1c_ratio.csv"),
        ],
        report,
        ..Default::default()
    })
}
