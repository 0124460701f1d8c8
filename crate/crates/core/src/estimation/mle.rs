//! Maximum-likelihood delay estimation from cross-port / same-port
//! tallies, and the Cramér–Rao bound `1/(n·F)`.

use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::interference::{coincidence, fisher_information};
use crate::model::{beat_period, DelaySetting, SourceSpec};
use crate::montecarlo::CoincidenceCounts;

/// `k` cross-port events out of `n` detected pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub k: u64,
    pub n: u64,
}

impl Tally {
    pub fn new(k: u64, n: u64) -> Self {
        Self { k, n }
    }

    pub fn from_counts(c: &CoincidenceCounts) -> Self {
        Self {
            k: c.coincidences,
            n: c.detected_pairs(),
        }
    }

    /// Sum over repetitions.
    pub fn total<'a, I: IntoIterator<Item = &'a CoincidenceCounts>>(reps: I) -> Self {
        reps.into_iter().fold(Tally::default(), |acc, c| {
            let t = Tally::from_counts(c);
            Tally::new(acc.k + t.k, acc.n + t.n)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub delta_t_ns: f64,
    /// From the observed information at the estimate.
    pub standard_error_ns: f64,
    /// `1/(n·F(Δt̂))`, ns².
    pub crb_ns2: f64,
    /// `crb / standard_error²`.
    pub efficiency: f64,
    pub tally: Tally,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ns2", rename_all = "kebab-case")]
pub enum Crb {
    Finite(f64),
    /// `F = 0`: the data carry no information about the delay here.
    Unbounded,
}

impl Crb {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Crb::Finite(v) => Some(v),
            Crb::Unbounded => None,
        }
    }
}

/// Cramér–Rao bound for `n_pairs` detected pairs at `delay`.
pub fn crb(delay: DelaySetting, spec: &SourceSpec, n_pairs: u64) -> Result<Crb, EstimationError> {
    if n_pairs == 0 {
        return Err(EstimationError::NoData);
    }
    let f = fisher_information(delay, spec);
    if !f.defined {
        return Err(EstimationError::UndefinedFisher {
            delta_t_ns: delay.time_delay_ns(),
        });
    }
    if f.fisher <= 0.0 {
        return Ok(Crb::Unbounded);
    }
    Ok(Crb::Finite(1.0 / (n_pairs as f64 * f.fisher)))
}

/// Binomial log-likelihood `k·ln P_c + (n − k)·ln(1 − P_c)` at `Δt`.
pub fn log_likelihood(delta_t_ns: f64, tally: Tally, spec: &SourceSpec) -> f64 {
    let c = coincidence(delta_t_ns, spec);
    let term = |count: u64, p: f64| if count == 0 { 0.0 } else { count as f64 * p.ln() };
    term(tally.k, c.p) + term(tally.n - tally.k, c.q)
}

/// `d/dΔt` of [`log_likelihood`]: `P_c'·(k/P_c − (n − k)/(1 − P_c))`.
pub fn score(delta_t_ns: f64, tally: Tally, spec: &SourceSpec) -> f64 {
    let c = coincidence(delta_t_ns, spec);
    let (k, m) = (tally.k as f64, (tally.n - tally.k) as f64);
    let mut s = 0.0;
    if tally.k > 0 {
        s += k / c.p;
    }
    if tally.n > tally.k {
        s -= m / c.q;
    }
    c.slope * s
}

/// Same sign as the score wherever `0 < P_c < 1`, without the division.
fn score_sign(delta_t_ns: f64, tally: Tally, spec: &SourceSpec) -> f64 {
    let c = coincidence(delta_t_ns, spec);
    c.slope * (tally.k as f64 - tally.n as f64 * c.p)
}

const GRID: usize = 256;

/// Maximizes the binomial likelihood over `[lo, hi]`, which must lie
/// within one beat period. A grid search brackets the global maximum and
/// bisection on the score finds it to round-off. A maximum on an interval
/// endpoint is reported as [`EstimationError::EdgeMaximum`], carrying
/// that endpoint.
pub fn estimate_delay_mle(
    tally: Tally,
    spec: &SourceSpec,
    lo: DelaySetting,
    hi: DelaySetting,
) -> Result<DelayEstimate, EstimationError> {
    let (a, b) = (lo.time_delay_ns(), hi.time_delay_ns());
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(EstimationError::InvalidInterval { lo_ns: a, hi_ns: b });
    }
    if let Some(period) = beat_period(spec).ns() {
        if b - a > period * (1.0 + 1e-12) {
            return Err(EstimationError::InvalidInterval { lo_ns: a, hi_ns: b });
        }
    }
    if tally.n == 0 || tally.k > tally.n {
        return Err(EstimationError::NoData);
    }

    let x = |i: usize| a + (b - a) * i as f64 / GRID as f64;
    let (best, _) =
        (0..=GRID)
            .map(|i| (i, log_likelihood(x(i), tally, spec)))
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, l)| if l > acc.1 { (i, l) } else { acc },
            );

    // search the neighbouring cells for a + → − crossing of the score
    let mut candidates = Vec::new();
    for (l, r) in [(best.saturating_sub(1), best), (best, (best + 1).min(GRID))] {
        if l == r {
            continue;
        }
        let (xl, xr) = (x(l), x(r));
        let (sl, sr) = (score_sign(xl, tally, spec), score_sign(xr, tally, spec));
        if sl >= 0.0 && sr <= 0.0 && (sl > 0.0 || sr < 0.0) {
            candidates.push(bisect(|t| score_sign(t, tally, spec), xl, xr));
        }
    }
    let estimate = candidates
        .into_iter()
        .chain([x(best)])
        .map(|t| (t, log_likelihood(t, tally, spec)))
        .fold(
            (f64::NAN, f64::NEG_INFINITY),
            |acc, c| if c.1 > acc.1 { c } else { acc },
        )
        .0;

    let tol = 1e-9 * (b - a);
    let at_edge = |t: f64| (t - a).abs() <= tol || (t - b).abs() <= tol;
    if at_edge(estimate) && score_points_outward(estimate, a, b, tally, spec) {
        return Err(EstimationError::EdgeMaximum {
            estimate: DelaySetting::from_time_ns(estimate),
        });
    }

    let c = coincidence(estimate, spec);
    let (k, m) = (tally.k as f64, (tally.n - tally.k) as f64);
    let info = c.slope * c.slope * (k / (c.p * c.p) + m / (c.q * c.q));
    let f = fisher_information(DelaySetting::from_time_ns(estimate), spec);
    if !f.defined || f.fisher <= 0.0 || !info.is_finite() || info <= 0.0 {
        return Err(EstimationError::UndefinedFisher { delta_t_ns: estimate });
    }
    let crb_ns2 = 1.0 / (tally.n as f64 * f.fisher);
    let se2 = 1.0 / info;
    Ok(DelayEstimate {
        delta_t_ns: estimate,
        standard_error_ns: se2.sqrt(),
        crb_ns2,
        efficiency: crb_ns2 / se2,
        tally,
    })
}

fn score_points_outward(t: f64, a: f64, b: f64, tally: Tally, spec: &SourceSpec) -> bool {
    let s = score_sign(t, tally, spec);
    let near_a = (t - a).abs() < (t - b).abs();
    // at the lower edge the likelihood keeps rising leftwards when s ≤ 0
    if near_a {
        s <= 0.0
    } else {
        s >= 0.0
    }
}

/// Root of a function positive at `lo` and negative at `hi`.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Spread of repeated estimates compared with the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub trials: usize,
    pub mean_ns: f64,
    pub bias_ns: f64,
    pub variance_ns2: f64,
    /// Standard error of `variance_ns2` from the fourth central moment.
    pub variance_se_ns2: f64,
    /// Bound evaluated at the true delay.
    pub crb_ns2: f64,
    /// `variance / crb`.
    pub variance_ratio: f64,
    /// `crb / variance`.
    pub efficiency: f64,
    /// Trials whose maximum was on the search-interval edge (counted at
    /// that edge).
    pub edge_trials: usize,
}

/// Summarizes estimates against the truth and the bound at the truth.
pub fn summarize(estimates: &[f64], truth_ns: f64, crb_ns2: f64, edge_trials: usize) -> BenchmarkSummary {
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let m2 = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = estimates.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let variance = m2 * n / (n - 1.0);
    let variance_se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    BenchmarkSummary {
        trials: estimates.len(),
        mean_ns: mean,
        bias_ns: mean - truth_ns,
        variance_ns2: variance,
        variance_se_ns2: variance_se,
        crb_ns2,
        variance_ratio: variance / crb_ns2,
        efficiency: crb_ns2 / variance,
        edge_trials,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::quadrature_point;
    use crate::model::WavePacketParams;
    use hom_oracle::derivative;

    fn spec(v: f64) -> SourceSpec {
        SourceSpec::new(
            909.6,
            1281.6,
            v,
            WavePacketParams::new(1.0 / 18.84, 1.0 / 17.53).unwrap(),
            1e4,
            0.0,
        )
        .unwrap()
    }

    fn half_period(s: &SourceSpec) -> (DelaySetting, DelaySetting, f64) {
        let t0 = quadrature_point(s).unwrap().time_delay_ns();
        let quarter = beat_period(s).ns().unwrap() / 4.0;
        (
            DelaySetting::from_time_ns(t0 - quarter),
            DelaySetting::from_time_ns(t0 + quarter),
            t0,
        )
    }

    #[test]
    fn exact_frequencies_return_truth() {
        let s = spec(0.95);
        let (lo, hi, t0) = half_period(&s);
        for shift in [0.0, 0.2, -0.35] {
            let truth = t0 + shift * (hi.time_delay_ns() - t0);
            let p = coincidence(truth, &s).p;
            // k/n = P_c exactly requires a rational P_c; use a huge n and
            // compare at the optimizer's resolution
            let n = 1u64 << 52;
            let k = (p * n as f64).round() as u64;
            let est = estimate_delay_mle(Tally::new(k, n), &s, lo, hi).unwrap();
            let width = hi.time_delay_ns() - lo.time_delay_ns();
            assert!((est.delta_t_ns - truth).abs() < 1e-9 * width, "{shift}");
        }
    }

    #[test]
    fn score_matches_finite_difference() {
        let s = spec(0.9);
        let (lo, hi, _) = half_period(&s);
        let tally = Tally::new(37, 100);
        for i in 1..20 {
            let t = lo.time_delay_ns() + (hi.time_delay_ns() - lo.time_delay_ns()) * i as f64 / 20.0;
            let h = 1e-4 * beat_period(&s).ns().unwrap();
            let fd = derivative(|x| log_likelihood(x, tally, &s), t, h);
            let an = score(t, tally, &s);
            assert!((an - fd).abs() <= 1e-6 * an.abs().max(1e-3), "{t}: {an} vs {fd}");
        }
    }

    #[test]
    fn crb_scaling_and_unbounded() {
        let s = spec(0.9);
        let q = quadrature_point(&s).unwrap();
        let a = crb(q, &s, 100).unwrap().value().unwrap();
        let b = crb(q, &s, 200).unwrap().value().unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        // zero delay with V < 1: P_c is stationary and 0 < P_c < 1
        assert_eq!(crb(DelaySetting::ZERO, &s, 100).unwrap(), Crb::Unbounded);
        // perfect dip: F undefined
        assert!(matches!(
            crb(DelaySetting::ZERO, &spec(1.0), 10),
            Err(EstimationError::UndefinedFisher { .. })
        ));
        assert!(matches!(crb(q, &s, 0), Err(EstimationError::NoData)));
    }

    #[test]
    fn interior_estimate_has_unit_efficiency() {
        let s = spec(0.9);
        let (lo, hi, _) = half_period(&s);
        let e = estimate_delay_mle(Tally::new(55, 100), &s, lo, hi).unwrap();
        assert!(e.standard_error_ns > 0.0);
        assert!((e.efficiency - 1.0).abs() < 1e-9);
    }

    #[test]
    fn edge_maximum_reported() {
        let s = spec(0.9);
        let (lo, hi, _) = half_period(&s);
        // k/n = 0 is below the fringe minimum 0.05
        match estimate_delay_mle(Tally::new(0, 50), &s, lo, hi) {
            Err(EstimationError::EdgeMaximum { estimate }) => {
                let d = (estimate.time_delay_ns() - lo.time_delay_ns()).abs();
                assert!(d < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn intervals_checked() {
        let s = spec(0.9);
        let p = beat_period(&s).ns().unwrap();
        let t = Tally::new(5, 10);
        assert!(matches!(
            estimate_delay_mle(t, &s, DelaySetting::ZERO, DelaySetting::from_time_ns(1.5 * p)),
            Err(EstimationError::InvalidInterval { .. })
        ));
        assert!(matches!(
            estimate_delay_mle(t, &s, DelaySetting::from_time_ns(p), DelaySetting::ZERO),
            Err(EstimationError::InvalidInterval { .. })
        ));
    }

    #[test]
    fn summary_statistics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let s = summarize(&xs, 2.0, 1.0, 0);
        assert!((s.mean_ns - 2.5).abs() < 1e-15);
        assert!((s.variance_ns2 - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.bias_ns - 0.5).abs() < 1e-15);
    }
}
