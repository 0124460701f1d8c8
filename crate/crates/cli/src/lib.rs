//! `homsim`: simulate and analyse two-photon interference with
//! frequency-entangled photon pairs.
//!
//! Every run resolves a layered configuration, writes its data files and
//! a `<command>.manifest.toml` into the output directory. `replay`
//! re-runs a manifest and checks that the outputs are byte-identical.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hom_core::estimation::EnvelopeMode;
use hom_core::montecarlo::{Pairing, SamplingMode};

use crate::commands::Outcome;
use crate::config::{ConfigOverlay, DetuningConvention, FitKind, Origin, Resolved, TagFormat};
use crate::error::{CliError, EXIT_CONFIG, EXIT_OK};
use crate::output::{sha256_hex, write_all, RunManifest};

pub const TOOL: &str = "homsim";

#[derive(Debug, Parser)]
#[command(
    name = "homsim",
    version,
    about = "Two-photon interference with frequency-entangled pairs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coincidence probability, Fisher information and visibility robustness curves.
    Figure1(RunArgs),
    /// One acquisition at a fixed delay: tag file and counts.
    Simulate(RunArgs),
    /// Coincidence counts along a path-delay scan.
    Scan(RunArgs),
    /// Signal-idler cross-correlation histogram.
    G2(RunArgs),
    /// Fringe or G2 fit of a table written by `scan` or `g2`.
    Fit(FitArgs),
    /// Maximum-likelihood delay estimates against the Cramer-Rao bound.
    Estimate(RunArgs),
    /// Re-run a manifest and compare output digests.
    Replay(ReplayArgs),
    /// List presets, or show one with the origin of every value.
    Presets { name: Option<String> },
    /// Print the resolved configuration and where each key came from.
    ShowConfig(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Aggregate,
    TimeResolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    Greedy,
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnvelopeArg {
    Frozen,
    Free,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Named parameter set, applied on top of the defaults.
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML file, applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed (below 2^63).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,
    /// Coincidence window half-width.
    #[arg(long)]
    pub window_ns: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Path delay for `simulate`.
    #[arg(long)]
    pub delay_um: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Exact pair count: histogram pairs for `g2`, acquisition pairs otherwise. Accepts `1e6`.
    #[arg(long, value_parser = parse_count)]
    pub pairs: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub pairs_per_trial: Option<u64>,
    /// How `figure1.ratio_detuning` is read.
    #[arg(long, value_enum)]
    pub angular_detuning_convention: Option<DetuningConvention>,
    #[arg(long, value_enum)]
    pub tag_format: Option<TagFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub kind: Option<FitKind>,
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long, value_enum)]
    pub envelope: Option<EnvelopeArg>,
    #[arg(long)]
    pub envelope_scale_um: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to `replay/` next to the manifest.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Integer counts, also in float notation such as `1e6`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 => Ok(x as u64),
        _ => Err(format!("`{s}` is not a non-negative whole number")),
    }
}

/// The command-line layer and the flag that set each key.
fn flag_overlay(
    command: &str,
    a: &RunArgs,
    fit: Option<&FitArgs>,
) -> (ConfigOverlay, BTreeMap<&'static str, &'static str>) {
    let mut o = ConfigOverlay::default();
    let mut f = BTreeMap::new();
    macro_rules! set {
        ($value:expr, $target:expr, $key:literal, $flag:literal) => {
            if let Some(v) = $value {
                $target = Some(v);
                f.insert($key, $flag);
            }
        };
    }
    set!(a.seed, o.simulation.seed, "simulation.seed", "--seed");
    set!(
        a.mode.map(|m| match m {
            ModeArg::Aggregate => SamplingMode::Aggregate,
            ModeArg::TimeResolved => SamplingMode::TimeResolved,
        }),
        o.simulation.mode,
        "simulation.mode",
        "--mode"
    );
    set!(
        a.pairing.map(|p| match p {
            PairingArg::Greedy => Pairing::Greedy,
            PairingArg::AllPairs => Pairing::AllPairs,
        }),
        o.simulation.pairing,
        "simulation.pairing",
        "--pairing"
    );
    set!(
        a.window_ns,
        o.simulation.window_ns,
        "simulation.window_ns",
        "--window-ns"
    );
    set!(
        a.duration_s,
        o.simulation.duration_s,
        "simulation.duration_s",
        "--duration-s"
    );
    set!(a.delay_um, o.simulation.delay_um, "simulation.delay_um", "--delay-um");
    set!(
        a.tag_format,
        o.simulation.tag_format,
        "simulation.tag_format",
        "--tag-format"
    );
    if command == "g2" {
        set!(a.pairs, o.g2.pairs, "g2.pairs", "--pairs");
    } else {
        set!(a.pairs, o.simulation.pairs, "simulation.pairs", "--pairs");
    }
    set!(a.trials, o.estimate.trials, "estimate.trials", "--trials");
    set!(
        a.pairs_per_trial,
        o.estimate.pairs_per_trial,
        "estimate.pairs_per_trial",
        "--pairs-per-trial"
    );
    set!(
        a.angular_detuning_convention,
        o.figure1.convention,
        "figure1.convention",
        "--angular-detuning-convention"
    );
    if let Some(fa) = fit {
        set!(fa.kind, o.fit.kind, "fit.kind", "--kind");
        set!(fa.input.clone(), o.fit.input, "fit.input", "--input");
        set!(
            fa.envelope.map(|e| match e {
                EnvelopeArg::Frozen => EnvelopeMode::Frozen,
                EnvelopeArg::Free => EnvelopeMode::Free,
            }),
            o.fit.envelope,
            "fit.envelope",
            "--envelope"
        );
        set!(
            fa.envelope_scale_um,
            o.fit.envelope_scale_um,
            "fit.envelope_scale_um",
            "--envelope-scale-um"
        );
    }
    (o, f)
}

/// defaults < preset < config file < flags.
pub fn resolve(command: &str, a: &RunArgs, fit: Option<&FitArgs>) -> Result<Resolved, CliError> {
    let preset = a.preset.as_deref().map(presets::find).transpose()?;
    let file = a.config.as_deref().map(ConfigOverlay::load).transpose()?;
    let (flags, flag_names) = flag_overlay(command, a, fit);

    type Layer<'a> = (ConfigOverlay, Box<dyn Fn(&str) -> String + 'a>);
    let mut layers: Vec<Layer> = Vec::new();
    if let Some(p) = &preset {
        layers.push((
            p.overlay(),
            Box::new(move |k: &str| format!("preset {}: {}", p.name, p.note(k).unwrap_or(""))),
        ));
    }
    if let (Some(overlay), Some(path)) = (file, a.config.as_deref()) {
        layers.push((overlay, Box::new(move |_: &str| format!("config {}", path.display()))));
    }
    layers.push((
        flags,
        Box::new(move |k: &str| format!("flag {}", flag_names.get(k).unwrap_or(&"?"))),
    ));
    let refs: Vec<(ConfigOverlay, Origin)> = layers.iter().map(|(o, f)| (o.clone(), f.as_ref() as Origin)).collect();
    let r = Resolved::build(&refs);

    if let Some(seed) = r.layers.simulation.seed {
        if seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("seed {seed} must be below 2^63")));
        }
    }
    let needs_source = !matches!(command, "figure1" | "fit" | "show-config");
    let missing = r.layers.missing_source_keys();
    if needs_source && !missing.is_empty() {
        return Err(CliError::Config(format!(
            "missing {} (use --preset or --config)",
            missing.join(", ")
        )));
    }
    Ok(r)
}

/// Runs `command`, writes its files and manifest into `out_dir`.
pub fn execute(
    command: &str,
    r: &Resolved,
    out_dir: &Path,
    input_base: Option<&Path>,
) -> Result<(RunManifest, Outcome), CliError> {
    let start = Instant::now();
    let outcome = commands::run(command, r, input_base)?;
    let outputs = write_all(out_dir, &outcome.files)?;
    let manifest = RunManifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: outcome.seed,
        wall_clock_s: start.elapsed().as_secs_f64(),
        inputs: outcome.inputs.clone(),
        outputs,
        provenance: r.provenance.clone(),
        config: r.layers.clone(),
    };
    let path = out_dir.join(RunManifest::file_name(command));
    std::fs::write(&path, manifest.to_toml()).map_err(|e| CliError::io(&path, e))?;
    Ok((manifest, outcome))
}

/// Re-runs a manifest into `out_dir` and compares every output digest.
pub fn replay(manifest_path: &Path, out_dir: Option<&Path>) -> Result<RunManifest, CliError> {
    let m = RunManifest::load(manifest_path)?;
    if !commands::COMMANDS.contains(&m.command.as_str()) {
        return Err(CliError::Config(format!(
            "manifest command `{}` cannot be replayed",
            m.command
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let out = out_dir.map(Path::to_path_buf).unwrap_or_else(|| base.join("replay"));
    for input in &m.inputs {
        let mut p = PathBuf::from(&input.path);
        if p.is_relative() && !p.exists() {
            p = base.join(&p);
        }
        let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(CliError::Runtime(format!("input {} changed since the run", input.path)));
        }
    }
    let mut r = Resolved::build(&[(m.config.clone(), &|_| "manifest".to_string())]);
    r.provenance = m.provenance.clone();
    let (again, _) = execute(&m.command, &r, &out, Some(base))?;
    let mut problems = Vec::new();
    for want in &m.outputs {
        match again.outputs.iter().find(|g| g.path == want.path) {
            Some(got) if got.sha256 == want.sha256 && got.bytes == want.bytes => {}
            Some(got) => problems.push(format!("{}: sha256 {} != {}", want.path, got.sha256, want.sha256)),
            None => problems.push(format!("{}: not produced", want.path)),
        }
    }
    for got in &again.outputs {
        if !m.outputs.iter().any(|w| w.path == got.path) {
            problems.push(format!("{}: not in the manifest", got.path));
        }
    }
    if problems.is_empty() {
        Ok(again)
    } else {
        Err(CliError::Runtime(format!("replay mismatch: {}", problems.join("; "))))
    }
}

fn show_presets(name: Option<&str>) -> Result<(), CliError> {
    match name {
        None => {
            for p in presets::all() {
                println!("{:<12} {}", p.name, p.summary);
            }
        }
        Some(n) => {
            let p = presets::find(n)?;
            println!("# {}: {}", p.name, p.summary);
            for e in &p.entries {
                println!("{} = {}  # {}", e.key, e.value, e.note);
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (name, args, fit) = match &cli.command {
        Command::Figure1(a) => ("figure1", a, None),
        Command::Simulate(a) => ("simulate", a, None),
        Command::Scan(a) => ("scan", a, None),
        Command::G2(a) => ("g2", a, None),
        Command::Estimate(a) => ("estimate", a, None),
        Command::Fit(f) => ("fit", &f.run, Some(f)),
        Command::ShowConfig(a) => {
            let r = resolve("show-config", a, None)?;
            print!("{}", r.to_toml());
            println!();
            for (k, v) in &r.provenance {
                println!("# {k}: {v}");
            }
            return Ok(());
        }
        Command::Presets { name } => return show_presets(name.as_deref()),
        Command::Replay(a) => {
            let m = replay(&a.manifest, a.out_dir.as_deref())?;
            println!("replay of `{}` matches: {} files identical", m.command, m.outputs.len());
            return Ok(());
        }
    };
    let r = resolve(name, args, fit)?;
    let (m, outcome) = execute(name, &r, &args.out_dir, None)?;
    for line in &outcome.report {
        println!("{line}");
    }
    println!(
        "wrote {} files and {} to {}",
        m.outputs.len(),
        RunManifest::file_name(name),
        args.out_dir.display()
    );
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{TOOL}: {e}");
            e.exit_code()
        }
    }
}
