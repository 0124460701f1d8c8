//! Fringe or G2 fit of a table written by `scan` or `g2`.

use std::path::{Path, PathBuf};

use hom_core::estimation::{fit_fringe_data, fit_g2, EnvelopeMode, FringeData, FringeFit, G2Fit};
use hom_core::montecarlo::G2Histogram;
use hom_core::{beat_period, pair_bandwidth};
use serde::Serialize;

use super::Outcome;
use crate::config::{FitKind, FitSection, Resolved};
use crate::error::CliError;
use crate::output::{fmt_f, sha256_hex, FileDigest, OutputFile, Table};

/// Columns of a numeric CSV with `#` comments, by header name.
struct Columns {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    path: String,
}

impl Columns {
    fn parse(bytes: &[u8], path: &str) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Runtime(format!("{path}: {msg}"));
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
        let header = rdr
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let row = rec
                .iter()
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("data row {}: `{c}` is not a number", i + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self {
            header,
            rows,
            path: path.to_string(),
        })
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let i = self
            .index(name)
            .ok_or_else(|| CliError::Runtime(format!("{}: missing column `{name}`", self.path)))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn resolve_input(input: &str, base: Option<&Path>) -> PathBuf {
    let p = PathBuf::from(input);
    if p.is_relative() && !p.exists() {
        if let Some(b) = base {
            let alt = b.join(&p);
            if alt.exists() {
                return alt;
            }
        }
    }
    p
}

/// Net coincidences with raw-count weights when both columns exist,
/// otherwise plain Poisson weights on `counts`.
fn fringe_data(cols: &Columns) -> Result<FringeData, CliError> {
    let x = cols.column("path_delay_um")?;
    if cols.index("net_coincidences").is_some() {
        let net = cols.column("net_coincidences")?;
        let raw = cols.column("coincidences")?;
        Ok(FringeData {
            path_delay_um: x,
            counts: net,
            sigma: raw.iter().map(|c| c.max(1.0).sqrt()).collect(),
        })
    } else {
        Ok(FringeData::poisson(x, cols.column("counts")?))
    }
}

fn histogram(cols: &Columns) -> Result<G2Histogram, CliError> {
    let lo = cols.column("bin_lo_ns")?;
    let hi = cols.column("bin_hi_ns")?;
    let counts = cols.column("counts")?;
    if lo.is_empty() {
        return Err(CliError::Runtime(format!("{}: no bins", cols.path)));
    }
    let w = hi[0] - lo[0];
    for i in 0..lo.len() {
        let expect = lo[0] + i as f64 * w;
        if (lo[i] - expect).abs() > 1e-6 * w || (hi[i] - lo[i] - w).abs() > 1e-6 * w {
            return Err(CliError::Runtime(format!(
                "{}: bins are not uniform at row {}",
                cols.path,
                i + 1
            )));
        }
        if counts[i] < 0.0 || counts[i].fract() != 0.0 {
            return Err(CliError::Runtime(format!(
                "{}: row {}: counts must be whole numbers",
                cols.path,
                i + 1
            )));
        }
    }
    Ok(G2Histogram {
        bin_width_ns: w,
        start_ns: lo[0],
        counts: counts.iter().map(|&c| c as u64).collect(),
    })
}

#[derive(Serialize)]
struct FringeReport<'a> {
    kind: &'a str,
    input: &'a str,
    reduced_chi_square: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    configured_period_um: Option<f64>,
    result: FringeFit,
}

#[derive(Serialize)]
struct G2Report<'a> {
    kind: &'a str,
    input: &'a str,
    reduced_chi_square: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    configured_pair_bandwidth_mhz: Option<f64>,
    result: G2Fit,
}

fn fit_fringe_with(data: &FringeData, fit: &FitSection) -> Result<FringeFit, CliError> {
    match fit.envelope_scale_um {
        None => Ok(fit_fringe_data(data, None, fit.envelope)?),
        Some(scale) => {
            // unenveloped start, then the envelope at the given scale
            let mut start = fit_fringe_data(data, None, EnvelopeMode::Frozen)?;
            start.envelope_scale_um = Some(scale);
            Ok(fit_fringe_data(data, Some(&start), fit.envelope)?)
        }
    }
}

fn residual_table(rows: &[[f64; 4]], x_name: &str) -> Table {
    let mut t = Table::new(&[x_name, "observed", "model", "normalized_residual"]);
    for r in rows {
        t.row(&r.map(fmt_f));
    }
    t
}

pub fn run(r: &Resolved, input_base: Option<&Path>) -> Result<Outcome, CliError> {
    let fit = r.fit()?;
    let kind = fit
        .kind
        .ok_or_else(|| CliError::Config("fit.kind is required (--kind fringe|g2)".into()))?;
    let input = fit
        .input
        .clone()
        .ok_or_else(|| CliError::Config("fit.input is required (--input PATH)".into()))?;
    let path = resolve_input(&input, input_base);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let digest = FileDigest {
        path: input.clone(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    };
    let cols = Columns::parse(&bytes, &input)?;
    let configured = r.source().ok();

    let (report, residuals, summary) = match kind {
        FitKind::Fringe => {
            let data = fringe_data(&cols)?;
            let f = fit_fringe_with(&data, &fit)?;
            let summary = format!(
                "period {:.5} +- {:.5} um, visibility {:.4} +- {:.4}, chi2/dof {:.3}{}{}",
                f.period_um,
                f.errors.period_um,
                f.visibility,
                f.errors.visibility,
                f.chi_square / f.dof as f64,
                if f.visibility_clamped {
                    ", visibility clamped at 1"
                } else {
                    ""
                },
                if f.low_significance { ", low significance" } else { "" },
            );
            let rep = FringeReport {
                kind: "fringe",
                input: &input,
                reduced_chi_square: f.chi_square / f.dof as f64,
                configured_period_um: configured.and_then(|s| beat_period(&s).um()),
                result: f,
            };
            let text = toml::to_string(&rep).map_err(|e| CliError::Runtime(e.to_string()))?;
            (text, residual_table(&f.residuals(&data), "path_delay_um"), summary)
        }
        FitKind::G2 => {
            let h = histogram(&cols)?;
            let g = fit_g2(&h, None)?;
            let summary = format!(
                "pair bandwidth {:.4} +- {:.4} MHz, rates {:.5}/{:.5} per ns, asymmetry {:.2e} +- {:.2e}, chi2/dof {:.3}",
                g.pair_bandwidth_mhz,
                g.errors.pair_bandwidth_mhz,
                g.gamma_s,
                g.gamma_i,
                g.asymmetry,
                g.asymmetry_err,
                g.chi_square / g.dof as f64
            );
            let rep = G2Report {
                kind: "g2",
                input: &input,
                reduced_chi_square: g.chi_square / g.dof as f64,
                configured_pair_bandwidth_mhz: configured.map(|s| pair_bandwidth(&s.wavepacket())),
                result: g,
            };
            let text = toml::to_string(&rep).map_err(|e| CliError::Runtime(e.to_string()))?;
            (text, residual_table(&g.residuals(&h), "bin_center_ns"), summary)
        }
    };
    Ok(Outcome {
        files: vec![
            OutputFile::new("fit_report.toml", report.into_bytes()),
            residuals.into_file("fit_residuals.csv"),
        ],
        inputs: vec![digest],
        report: vec![summary],
        seed: None,
    })
}
