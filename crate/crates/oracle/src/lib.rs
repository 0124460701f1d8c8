//! Reference numerics for the test suites.
//!
//! Nothing here shares code with `hom-core`: the integrals, derivatives and
//! distribution tests are computed from first principles so that they can
//! act as independent checks of the closed forms used in the library.

/// Gauss–Kronrod 7/15 nodes on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (est, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < 1e-14 * (a.abs() + b.abs()) {
        return est;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 60)
}

/// Same as [`integrate`], splitting the interval at `breaks` (kinks or
/// cusps of the integrand). Breaks outside `(a, b)` are ignored.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut edges = vec![a];
    edges.extend(pts);
    edges.push(b);
    let pieces = (edges.len() - 1) as f64;
    edges.windows(2).map(|w| adapt(&f, w[0], w[1], tol / pieces, 60)).sum()
}

/// Central difference with two-level Richardson extrapolation.
pub fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d1 = d(h);
    let d2 = d(0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Two-sided Kolmogorov–Smirnov statistic of a sample against a
/// continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            let lo = c - i as f64 / n;
            let hi = (i + 1) as f64 / n - c;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_62 / (n as f64).sqrt()
}

/// Maximum of `f` over a uniform grid of `n` points on `[a, b]`, refined by
/// repeated local grid zooming. Returns `(argmax, max)`.
pub fn grid_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> (f64, f64) {
    let mut lo = a;
    let mut hi = b;
    let mut best = (a, f64::NEG_INFINITY);
    for _ in 0..12 {
        let step = (hi - lo) / (n - 1) as f64;
        for i in 0..n {
            let x = lo + step * i as f64;
            let v = f(x);
            if v.is_finite() && v > best.1 {
                best = (x, v);
            }
        }
        lo = (best.0 - 2.0 * step).max(a);
        hi = (best.0 + 2.0 * step).min(b);
    }
    best
}
