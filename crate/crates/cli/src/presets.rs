//! Named parameter sets. Every value a preset sets carries a note saying
//! where the number comes from: quoted measurements, values derived from
//! them, or choices made for the simulation.

use hom_core::{beat_period, Detuning, SourceSpec, WavePacketParams, C_UM_PER_NS};

use crate::config::ConfigOverlay;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PresetEntry {
    /// `section.key`
    pub key: &'static str,
    /// TOML literal.
    pub value: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub entries: Vec<PresetEntry>,
}

impl Preset {
    pub fn overlay(&self) -> ConfigOverlay {
        let mut sections: Vec<(&str, Vec<String>)> = Vec::new();
        for e in &self.entries {
            let (section, key) = e.key.split_once('.').expect("keys are section.key");
            let line = format!("{key} = {}", e.value);
            match sections.iter_mut().find(|(s, _)| *s == section) {
                Some((_, lines)) => lines.push(line),
                None => sections.push((section, vec![line])),
            }
        }
        let text: String = sections
            .iter()
            .map(|(s, lines)| format!("[{s}]\n{}\n", lines.join("\n")))
            .collect();
        ConfigOverlay::parse(&text, self.name).expect("built-in presets parse")
    }

    pub fn note(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.note.as_str())
    }
}

fn lit(x: f64) -> String {
    // shortest representation that reads back to the same f64
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn entry(key: &'static str, value: impl Into<String>, note: impl Into<String>) -> PresetEntry {
    PresetEntry {
        key,
        value: value.into(),
        note: note.into(),
    }
}

fn num(key: &'static str, x: f64, note: impl Into<String>) -> PresetEntry {
    entry(key, lit(x), note)
}

const PUMP_NM: f64 = 532.0;

/// Critically coupled source: quoted wavelengths, decay rates and
/// brightness.
fn critical_source(visibility: f64, visibility_note: &str) -> Vec<PresetEntry> {
    vec![
        num("source.lambda_s_nm", 909.6, "quoted signal wavelength 909.6 nm"),
        num("source.lambda_i_nm", 1281.6, "quoted idler wavelength 1281.6 nm"),
        num("source.visibility", visibility, visibility_note),
        num(
            "source.gamma_s_per_ns",
            1.0 / 18.84,
            "quoted signal decay rate 1/18.84 ns^-1",
        ),
        num(
            "source.gamma_i_per_ns",
            1.0 / 17.53,
            "quoted idler decay rate 1/17.53 ns^-1",
        ),
        num(
            "source.pair_rate_per_s",
            1.1e6,
            "quoted detected pair rate 1.1e6 /s (per mW pump)",
        ),
        num(
            "source.background_rate_per_s",
            500.0,
            "chosen: dark-count rate per detector, not quoted",
        ),
    ]
}

fn fringe_scan() -> Vec<PresetEntry> {
    vec![
        num("simulation.window_ns", 50.0, "quoted coincidence window +-50 ns"),
        num(
            "simulation.duration_s",
            0.01,
            "chosen: 1.1e4 pairs per delay point at the quoted rate",
        ),
        entry(
            "simulation.pairing",
            "\"all-pairs\"",
            "chosen: the accidental estimate is exact for all-pairs counting",
        ),
        num("scan.start_um", 0.0, "chosen: scan starts at zero path delay"),
        num("scan.periods", 2.0, "chosen: two beat periods"),
        entry("scan.points", "41", "chosen: 41 delay points"),
    ]
}

fn estimate_defaults() -> Vec<PresetEntry> {
    vec![
        entry("estimate.trials", "1000", "chosen: benchmark trial count"),
        entry(
            "estimate.pairs_per_trial",
            "10",
            "chosen: small samples show the approach to the bound",
        ),
        num(
            "estimate.trial_duration_s",
            1.0,
            "chosen: sparse pairs, negligible accidentals",
        ),
    ]
}

fn g2_entries(pairs: u64, bin_ns: f64, span_ns: f64, why: &str) -> Vec<PresetEntry> {
    vec![
        entry("g2.pairs", pairs.to_string(), "chosen: histogram statistics"),
        num("g2.bin_ns", bin_ns, format!("chosen: {why}")),
        num(
            "g2.span_ns",
            span_ns,
            "chosen: about 12 decay lengths of the slower photon",
        ),
    ]
}

fn fig1() -> Preset {
    Preset {
        name: "fig1",
        summary: "theory curves: P_c, Fisher information and visibility robustness",
        entries: vec![
            num(
                "figure1.gamma_per_ns",
                1.0 / 20.0,
                "quoted decay rates 1/20 ns^-1 for both photons",
            ),
            num("figure1.pump_nm", PUMP_NM, "quoted pump wavelength 532 nm"),
            entry(
                "figure1.detunings_thz",
                "[0.0, 10.0, 20.0]",
                "chosen: degenerate plus two detunings; 10 THz is the quoted ratio-curve value",
            ),
            num("figure1.visibility", 1.0, "quoted V = 1 for the P_c and Fisher curves"),
            num(
                "figure1.ratio_detuning",
                10.0,
                "quoted angular detuning 10 THz for the ratio curve",
            ),
            num(
                "figure1.ratio_v_min",
                0.9,
                "chosen: quoted visibility axis starts at 0.90",
            ),
            num("figure1.ratio_v_max", 1.0, "chosen: visibility axis ends at 1"),
            entry("figure1.ratio_points", "11", "chosen: visibility step 0.01"),
        ],
    }
}

fn fig3a() -> Preset {
    let mut entries = critical_source(0.873, "quoted best-fit visibility 87.3%");
    entries.extend(fringe_scan());
    entries.extend(estimate_defaults());
    Preset {
        name: "fig3a",
        summary: "HOM fringe scan of the critically coupled source",
        entries,
    }
}

fn fig3b(name: &'static str, summary: &'static str) -> Preset {
    let mut entries = critical_source(0.873, "quoted best-fit visibility 87.3% (not used by G2)");
    entries.push(num("simulation.window_ns", 50.0, "quoted coincidence window +-50 ns"));
    entries.extend(g2_entries(
        1_000_000,
        0.5,
        200.0,
        "0.5 ns bins, a tenth of the decay time",
    ));
    entries.extend(estimate_defaults());
    Preset { name, summary, entries }
}

/// Symmetric rates from a quoted pair bandwidth.
fn symmetric_rate(mhz: f64) -> f64 {
    WavePacketParams::symmetric_from_pair_bandwidth(mhz)
        .expect("positive bandwidth")
        .gamma_s()
}

fn fig4(name: &'static str, mhz: f64, quoted: bool) -> Preset {
    let gamma = symmetric_rate(mhz);
    let origin = if quoted {
        format!("quoted pair bandwidth {mhz} MHz")
    } else {
        format!("chosen intermediate pair bandwidth {mhz} MHz")
    };
    let mut entries = vec![
        num("source.lambda_s_nm", 909.6, "quoted signal wavelength 909.6 nm"),
        num("source.lambda_i_nm", 1281.6, "quoted idler wavelength 1281.6 nm"),
        num(
            "source.visibility",
            0.873,
            "quoted best-fit visibility 87.3% (not used by G2)",
        ),
        num(
            "source.gamma_s_per_ns",
            gamma,
            format!("derived: {origin}, symmetric-rate inversion"),
        ),
        num(
            "source.gamma_i_per_ns",
            gamma,
            format!("derived: {origin}, symmetric-rate inversion"),
        ),
        num(
            "source.pair_rate_per_s",
            1.1e6,
            "quoted detected pair rate 1.1e6 /s (per mW pump)",
        ),
        num(
            "source.background_rate_per_s",
            500.0,
            "chosen: dark-count rate per detector, not quoted",
        ),
    ];
    entries.extend(g2_entries(
        300_000,
        0.08 / gamma,
        12.0 / gamma,
        "bins of 0.08 decay times",
    ));
    Preset {
        name,
        summary: "G2 of the bandwidth-tuning series",
        entries,
    }
}

/// Overcoupled source: wavelengths that give the quoted beat period
/// under energy conservation with the 532 nm pump.
pub fn fig5b_source() -> SourceSpec {
    let period_um = 3.20;
    let df_thz = C_UM_PER_NS / period_um * 1e-3;
    SourceSpec::from_pump_and_detuning(
        PUMP_NM,
        Detuning::from_thz(df_thz),
        0.726,
        WavePacketParams::symmetric_from_pair_bandwidth(43.53).expect("positive bandwidth"),
        1.1e6,
        500.0,
    )
    .expect("valid source")
}

fn fig5b() -> Preset {
    let s = fig5b_source();
    debug_assert!((beat_period(&s).um().unwrap() - 3.20).abs() < 1e-9);
    let mut entries = vec![
        num(
            "source.lambda_s_nm",
            s.lambda_s_nm(),
            "derived: quoted beat period 3.20 um with the 532 nm pump",
        ),
        num(
            "source.lambda_i_nm",
            s.lambda_i_nm(),
            "derived: quoted beat period 3.20 um with the 532 nm pump",
        ),
        num("source.visibility", 0.726, "quoted visibility 72.6%"),
        num(
            "source.gamma_s_per_ns",
            s.wavepacket().gamma_s(),
            "derived: quoted pair bandwidth 43.53 MHz, symmetric-rate inversion",
        ),
        num(
            "source.gamma_i_per_ns",
            s.wavepacket().gamma_i(),
            "derived: quoted pair bandwidth 43.53 MHz, symmetric-rate inversion",
        ),
        num(
            "source.pair_rate_per_s",
            1.1e6,
            "chosen: brightness of the critically coupled source (not quoted here)",
        ),
        num(
            "source.background_rate_per_s",
            500.0,
            "chosen: dark-count rate per detector, not quoted",
        ),
    ];
    entries.extend(fringe_scan());
    entries.extend(estimate_defaults());
    Preset {
        name: "fig5b",
        summary: "HOM fringe scan of the overcoupled source",
        entries,
    }
}

pub const NAMES: [&str; 11] = [
    "fig1",
    "fig3a",
    "fig3b",
    "fig3b-cw",
    "fig3b-ccw",
    "fig4-4.78",
    "fig4-10",
    "fig4-20",
    "fig4-30",
    "fig4-40.17",
    "fig5b",
];

/// The bandwidth-tuning series, narrowest first.
pub const FIG4_SERIES: [&str; 5] = ["fig4-4.78", "fig4-10", "fig4-20", "fig4-30", "fig4-40.17"];

pub fn all() -> Vec<Preset> {
    NAMES.iter().map(|n| find(n).expect("listed")).collect()
}

pub fn find(name: &str) -> Result<Preset, CliError> {
    Ok(match name {
        "fig1" => fig1(),
        "fig3a" => fig3a(),
        "fig3b" => fig3b("fig3b", "G2 of the critically coupled source"),
        "fig3b-cw" => fig3b("fig3b-cw", "G2 of the clockwise-pumped mode (same quoted rates)"),
        "fig3b-ccw" => fig3b(
            "fig3b-ccw",
            "G2 of the counter-clockwise-pumped mode (same quoted rates)",
        ),
        "fig4-4.78" => fig4("fig4-4.78", 4.78, true),
        "fig4-10" => fig4("fig4-10", 10.0, false),
        "fig4-20" => fig4("fig4-20", 20.0, false),
        "fig4-30" => fig4("fig4-30", 30.0, false),
        "fig4-40.17" => fig4("fig4-40.17", 40.17, true),
        "fig5b" => fig5b(),
        other => {
            return Err(CliError::Config(format!(
                "unknown preset `{other}` (available: {})",
                NAMES.join(", ")
            )))
        }
    })
}
