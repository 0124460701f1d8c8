//! The eleven acceptance criteria, one PASS/FAIL line each.
//!
//! Everything runs inside one test so that every line is printed before
//! the verdict; the test fails if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use hom_cli::config::{ConfigOverlay, FitKind, Resolved};
use hom_cli::{execute, presets, replay, resolve, FitArgs, RunArgs};
use hom_core::montecarlo::{sample_time_difference, splitmix64};
use hom_core::{
    beat_period, coincidence, coincidence_density, detuning, fisher_ratio_curve, max_fisher, overlap, pair_bandwidth,
    quality_factor, single_photon_bandwidth, wavepacket_amplitude, DelaySetting, Detuning, SourceSpec,
    WavePacketParams,
};
use hom_oracle::{derivative, integrate_with_breaks, ks_critical_1pct, ks_statistic};

struct Verdicts {
    lines: Vec<(usize, bool, String)>,
}

impl Verdicts {
    fn record(&mut self, n: usize, budget: Duration, f: impl FnOnce() -> (bool, String)) {
        let t0 = Instant::now();
        let (ok, detail) = f();
        let took = t0.elapsed();
        let in_time = took <= budget;
        let pass = ok && in_time;
        let line = format!(
            "criterion {n:>2}: {} ({detail}; {:.1} s of {} s{})",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
        println!("{line}");
        self.lines.push((n, pass, line));
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn run_args(preset: &str, seed: u64, out: &Path) -> RunArgs {
    RunArgs {
        preset: Some(preset.into()),
        seed: Some(seed),
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

fn fit_report(input: &Path, kind: FitKind, out: &Path) -> toml::Table {
    let args = FitArgs {
        run: RunArgs {
            out_dir: out.to_path_buf(),
            ..Default::default()
        },
        kind: Some(kind),
        input: Some(input.display().to_string()),
        envelope: None,
        envelope_scale_um: None,
    };
    let r = resolve("fit", &args.run, Some(&args)).unwrap();
    execute("fit", &r, out, None).unwrap();
    std::fs::read_to_string(out.join("fit_report.toml"))
        .unwrap()
        .parse()
        .unwrap()
}

fn get(t: &toml::Table, path: &str) -> f64 {
    let mut v: &toml::Value = &t[path.split('.').next().unwrap()];
    for part in path.split('.').skip(1) {
        v = &v[part];
    }
    v.as_float().unwrap_or_else(|| v.as_integer().unwrap() as f64)
}

/// Fringe scan from a preset through the CLI, then the fringe fit of its
/// CSV; also returns the configured beat period.
fn fringe_closure(preset: &str, seed: u64, dir: &Path) -> (toml::Table, f64) {
    let args = run_args(preset, seed, dir);
    let r = resolve("scan", &args, None).unwrap();
    execute("scan", &r, dir, None).unwrap();
    let truth = beat_period(&r.source().unwrap()).um().unwrap();
    (fit_report(&dir.join("scan.csv"), FitKind::Fringe, dir), truth)
}

fn estimate_summary(extra: &str, seed: u64, dir: &Path) -> Vec<toml::Table> {
    let preset = presets::find("fig3a").unwrap();
    let layer = ConfigOverlay::parse(extra, "acceptance").unwrap();
    let mut r = Resolved::build(&[
        (preset.overlay(), &|_| "preset".into()),
        (layer, &|_| "acceptance".into()),
    ]);
    r.layers.simulation.seed = Some(seed);
    execute("estimate", &r, dir, None).unwrap();
    let t: toml::Table = std::fs::read_to_string(dir.join("estimate_summary.toml"))
        .unwrap()
        .parse()
        .unwrap();
    t["benchmark"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_table().unwrap().clone())
        .collect()
}

fn symmetric_source(detuning: Detuning, v: f64, gamma: f64) -> SourceSpec {
    SourceSpec::from_pump_and_detuning(
        532.0,
        detuning,
        v,
        WavePacketParams::symmetric(gamma).unwrap(),
        0.0,
        0.0,
    )
    .unwrap()
}

#[test]
fn acceptance_criteria() {
    let secs = Duration::from_secs;
    let mut v = Verdicts { lines: Vec::new() };
    let work = tempfile::tempdir().unwrap();

    v.record(1, secs(1), || {
        let wp = WavePacketParams::new(1.0 / 18.84, 1.0 / 17.53).unwrap();
        let bw = pair_bandwidth(&wp);
        let (bs, bi) = (
            single_photon_bandwidth(1.0 / 18.84),
            single_photon_bandwidth(1.0 / 17.53),
        );
        let ok = within(bw, 5.63, 0.01) && within(bs, 8.45, 0.01) && within(bi, 9.08, 0.01);
        (ok, format!("pair {bw:.4} MHz, single {bs:.4} / {bi:.4} MHz"))
    });

    v.record(2, secs(1), || {
        let s = SourceSpec::new(909.6, 1281.6, 1.0, WavePacketParams::symmetric(0.05).unwrap(), 0.0, 0.0).unwrap();
        let d = detuning(&s).thz.abs();
        let p = beat_period(&s).um().unwrap();
        (
            within(d, 95.66, 0.02) && within(p, 3.13, 0.01),
            format!("detuning {d:.4} THz, period {p:.4} um"),
        )
    });

    v.record(3, secs(1), || {
        let q = quality_factor(532.0, 99.1).unwrap();
        (within(q, 5.7e6, 0.1e6), format!("Q = {q:.4e}"))
    });

    v.record(4, secs(60), || {
        let vs: Vec<f64> = (0..=5).map(|i| 0.90 + 0.02 * i as f64).chain([0.98]).collect();
        let ent = symmetric_source(Detuning::from_rad_per_ns(1e4), 1.0, 1.0 / 20.0);
        let deg = symmetric_source(Detuning::from_thz(0.0), 1.0, 1.0 / 20.0);
        let rows = fisher_ratio_curve(&vs, &ent, &deg).unwrap();
        let worst = rows
            .iter()
            .map(|r| (r.ratio_entangled - r.visibility.powi(2)).abs())
            .fold(0.0, f64::max);
        let d98 = rows.last().unwrap().ratio_degenerate;
        let ok = within(d98, 0.50, 0.02) && worst <= 1e-3;
        (
            ok,
            format!(
                "degenerate ratio at V=0.98 = {d98:.4} (want 0.50 +- 0.02); entangled max |ratio - V^2| = {worst:.1e}"
            ),
        )
    });

    v.record(5, secs(60), || {
        let dw = 1e4;
        let f1 = max_fisher(&symmetric_source(Detuning::from_rad_per_ns(dw), 1.0, 1.0 / 20.0))
            .unwrap()
            .fisher;
        let f2 = max_fisher(&symmetric_source(Detuning::from_rad_per_ns(2.0 * dw), 1.0, 1.0 / 20.0))
            .unwrap()
            .fisher;
        let ratio = f2 / f1;
        (
            within(ratio, 4.0, 0.2),
            format!("max FI ratio {ratio:.4} for doubled detuning"),
        )
    });

    v.record(6, secs(120), || {
        let dir = work.path().join("c6");
        let (t, truth) = fringe_closure("fig3a", 7, &dir);
        let (p, sp) = (get(&t, "result.period_um"), get(&t, "result.errors.period_um"));
        let (vis, sv) = (get(&t, "result.visibility"), get(&t, "result.errors.visibility"));
        let ok = (p - truth).abs() <= 3.0 * sp && (vis - 0.873).abs() <= 3.0 * sv;
        (
            ok,
            format!(
                "period {p:.5} +- {sp:.5} um ({:.1} sigma from configured {truth:.5}, {:.1} sigma from 3.13), \
                 visibility {vis:.4} +- {sv:.4} ({:.1} sigma)",
                (p - truth) / sp,
                (p - 3.13) / sp,
                (vis - 0.873) / sv
            ),
        )
    });

    v.record(7, secs(120), || {
        let dir = work.path().join("c7");
        let mut args = run_args("fig3b", 5, &dir);
        args.pairs = Some(1_000_000);
        let r = resolve("g2", &args, None).unwrap();
        execute("g2", &r, &dir, None).unwrap();
        let t = fit_report(&dir.join("g2.csv"), FitKind::G2, &dir);
        let (gs, gi) = (get(&t, "result.gamma_s"), get(&t, "result.gamma_i"));
        let (bw, sbw) = (
            get(&t, "result.pair_bandwidth_mhz"),
            get(&t, "result.errors.pair_bandwidth_mhz"),
        );
        let (es, ei) = ((gs * 18.84 - 1.0).abs(), (gi * 17.53 - 1.0).abs());
        let ok = es <= 0.05 && ei <= 0.05 && (bw - 5.63).abs() <= 3.0 * sbw;
        (
            ok,
            format!(
                "rates off by {:.2}% / {:.2}%, bandwidth {bw:.4} +- {sbw:.4} MHz ({:.1} sigma from 5.63)",
                100.0 * es,
                100.0 * ei,
                (bw - 5.63) / sbw
            ),
        )
    });

    v.record(8, secs(120), || {
        let dir = work.path().join("c8");
        let (t, _) = fringe_closure("fig5b", 8, &dir);
        let (p, sp) = (get(&t, "result.period_um"), get(&t, "result.errors.period_um"));
        let (vis, sv) = (get(&t, "result.visibility"), get(&t, "result.errors.visibility"));
        let ok = (p - 3.20).abs() <= 3.0 * sp && (vis - 0.726).abs() <= 3.0 * sv;
        (
            ok,
            format!(
                "period {p:.5} +- {sp:.5} um ({:.1} sigma), visibility {vis:.4} +- {sv:.4} ({:.1} sigma)",
                (p - 3.20) / sp,
                (vis - 0.726) / sv
            ),
        )
    });

    v.record(9, secs(300), || {
        let bound = estimate_summary(
            "[source]\nvisibility = 1.0\nbackground_rate_per_s = 0.0\n[estimate]\ntrials = 1000\npairs_per_trial = 10\n",
            2024,
            &work.path().join("c9a"),
        );
        let ratio = get(&bound[0], "variance_ratio");
        let sweep = estimate_summary(
            "[source]\nbackground_rate_per_s = 0.0\n[estimate]\ntrials = 1000\npairs_per_trial = 100\nvisibilities = [1.0, 0.9, 0.8]\n",
            2025,
            &work.path().join("c9b"),
        );
        let dev: Vec<f64> = sweep
            .iter()
            .skip(1)
            .map(|b| get(b, "information_relative_to_first") / get(b, "v_squared_relative_to_first") - 1.0)
            .collect();
        let ok = (1.0..=1.3).contains(&ratio) && dev.iter().all(|d| d.abs() <= 0.10);
        (
            ok,
            format!(
                "variance/CRB {ratio:.3} at V=1, n=10; information ratio vs V^2 off by {:+.1}% (V=0.9), {:+.1}% (V=0.8)",
                100.0 * dev[0],
                100.0 * dev[1]
            ),
        )
    });

    v.record(10, secs(60), || {
        let wp = WavePacketParams::new(1.0 / 18.84, 1.0 / 17.53).unwrap();
        let span = 40.0 * 18.84;
        let amp = |t: f64| wavepacket_amplitude(t, &wp).unwrap();
        let overlap_err = [0.0, 0.5, 3.0, 11.0, 40.0]
            .iter()
            .map(|&dt| {
                let q = integrate_with_breaks(|t| amp(t + dt) * amp(t - dt), -span, span, &[-dt, dt], 1e-13);
                (overlap(dt, &wp).unwrap() - q).abs()
            })
            .fold(0.0, f64::max);

        let s = SourceSpec::new(909.6, 1281.6, 0.873, wp, 0.0, 0.0).unwrap();
        let fringe = 1.0 / s.delta_omega().abs();
        let slope_err = (1..40)
            .map(|i| {
                let dt = fringe * 0.173 * i as f64;
                let an = coincidence(dt, &s).slope;
                let fd = derivative(|x| coincidence(x, &s).p, dt, fringe * 1e-3);
                ((an - fd) / an).abs()
            })
            .fold(0.0, f64::max);

        let n = 100_000;
        let (gs, gi) = (wp.gamma_s(), wp.gamma_i());
        let xs: Vec<f64> = (0..n as u64)
            .map(|i| {
                let u = ((splitmix64(0x5eed ^ i) >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
                sample_time_difference(u, &wp)
            })
            .collect();
        let a2 = 2.0 * gs * gi / (gs + gi);
        let cdf = |x: f64| {
            if x < 0.0 {
                a2 / (2.0 * gi) * (2.0 * gi * x).exp()
            } else {
                1.0 - a2 / (2.0 * gs) * (-2.0 * gs * x).exp()
            }
        };
        let ks = ks_statistic(&xs, cdf);
        let crit = ks_critical_1pct(n);

        let density_err = [0.0, 1e-6, 2.5, 17.0]
            .iter()
            .map(|&dt| {
                let d = DelaySetting::from_time_ns(dt);
                let g = integrate_with_breaks(|t| coincidence_density(t, d, &s), -span, span, &[-dt, dt], 1e-12);
                (g - coincidence(dt, &s).p).abs()
            })
            .fold(0.0, f64::max);

        let ok = overlap_err <= 1e-9 && slope_err <= 1e-6 && ks < crit && density_err <= 1e-8;
        (
            ok,
            format!(
                "overlap {overlap_err:.1e}, slope {slope_err:.1e} rel, KS {ks:.4} < {crit:.4}, density {density_err:.1e}"
            ),
        )
    });

    v.record(11, secs(60), || {
        let dir = work.path().join("c11");
        let mut checked = Vec::new();
        let mut failed = Vec::new();
        let mut small = |cmd: &str, preset: &str, extra: &str| {
            let out = dir.join(cmd);
            let mut r = Resolved::build(&[
                (presets::find(preset).unwrap().overlay(), &|_| "preset".into()),
                (ConfigOverlay::parse(extra, "acceptance").unwrap(), &|_| {
                    "acceptance".into()
                }),
            ]);
            r.layers.simulation.seed = Some(31);
            execute(cmd, &r, &out, None).unwrap();
            match replay(&out.join(format!("{cmd}.manifest.toml")), None) {
                Ok(_) => checked.push(cmd.to_string()),
                Err(e) => failed.push(format!("{cmd}: {e}")),
            }
        };
        small("simulate", "fig3a", "[simulation]\nduration_s = 0.002\n");
        small(
            "scan",
            "fig3a",
            "[simulation]\nduration_s = 0.001\n[scan]\npoints = 9\n",
        );
        small("g2", "fig3b", "[g2]\npairs = 20000\n");
        small("estimate", "fig3a", "[estimate]\ntrials = 50\n");
        small("figure1", "fig1", "[figure1]\npoints = 101\nratio_points = 2\n");
        let ok = failed.is_empty();
        (
            ok,
            format!(
                "replayed byte-identical: {}{}",
                checked.join(", "),
                if ok {
                    String::new()
                } else {
                    format!("; mismatches: {}", failed.join("; "))
                }
            ),
        )
    });

    let failed: Vec<usize> = v.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!(
        "acceptance: {} of {} criteria pass",
        v.lines.len() - failed.len(),
        v.lines.len()
    );
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
