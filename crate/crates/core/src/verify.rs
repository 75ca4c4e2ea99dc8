//! Monte Carlo statistics for the verification suite: ensemble summaries,
//! Kolmogorov–Smirnov tests, expectation and refinement checks, and the
//! retry policy for stochastic tests.

use serde::{Deserialize, Serialize};

use crate::distributions::retry_seed;
use crate::error::{Error, Result};

/// Running mean and variance (Welford), mergeable across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: RunningStats) -> RunningStats {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        RunningStats {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance; 0 for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut stats = RunningStats::default();
        for x in iter {
            stats.push(x);
        }
        stats
    }
}

/// Mean and standard error of an ensemble quantity at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Per-time means and standard errors of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub points: Vec<TimeSummary>,
}

impl EnsembleSummary {
    /// `rows[i][j]` is the value of path `i` at `times[j]`.
    pub fn from_rows(times: &[f64], rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Contract(format!("an ensemble summary needs at least 2 paths, got {}", rows.len())));
        }
        if rows.iter().any(|r| r.len() != times.len()) {
            return Err(Error::Contract("every path needs one value per time".into()));
        }
        let points = times
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let stats: RunningStats = rows.iter().map(|r| r[j]).collect();
                TimeSummary {
                    t,
                    mean: stats.mean(),
                    stderr: stats.stderr(),
                    n: stats.n(),
                }
            })
            .collect();
        Ok(EnsembleSummary {
            n_paths: rows.len(),
            points,
        })
    }
}

/// Outcome of one statistical check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub seed: u64,
    pub n: usize,
    pub retries: u32,
    /// Free-form numbers behind the statistic.
    pub detail: String,
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ_{j>=1} (-1)^{j-1} e^{-2 j² λ²}`,
/// first 100 terms.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        total += sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sign = -sign;
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS distance `d` at effective sample size `n`.
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let root = n.sqrt();
    kolmogorov_tail((root + 0.12 + 0.11 / root) * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `sup_x |F_n(x) - F(x)|` of the empirical CDF of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// One-sample KS test against a continuous `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("KS test needs finite samples".into()));
    }
    let statistic = ks_statistic(samples, cdf);
    Ok(KsResult {
        statistic,
        p_value: ks_p_value(statistic, samples.len() as f64),
        n: samples.len(),
    })
}

/// One-sample KS test against the unit exponential law.
pub fn ks_test_exponential(samples: &[f64]) -> Result<KsResult> {
    if samples.len() < 50 {
        return Err(Error::Contract(format!("KS test needs at least 50 samples, got {}", samples.len())));
    }
    if let Some(x) = samples.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Contract(format!("exponential KS test got nonpositive sample {x}")));
    }
    ks_test(samples, |x| 1.0 - (-x).exp())
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("two-sample KS test needs nonempty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
        n: a.len() + b.len(),
    })
}

/// KS check as a report: passes iff the p-value exceeds `alpha`.
pub fn ks_report(name: &str, result: KsResult, alpha: f64, seed: u64) -> TestReport {
    TestReport {
        name: name.to_string(),
        statistic: result.p_value,
        threshold: alpha,
        pass: result.p_value > alpha,
        seed,
        n: result.n,
        retries: 0,
        detail: format!("D = {:.6}", result.statistic),
    }
}

/// Passes iff `|mean(t) - target(t)| <= 3 stderr(t)` at every point. The
/// statistic is the largest such ratio.
pub fn martingale_expectation_test<T: Fn(f64) -> f64>(
    name: &str,
    summary: &EnsembleSummary,
    target: T,
    seed: u64,
) -> Result<TestReport> {
    if summary.points.len() < 2 {
        return Err(Error::Contract(format!("{name}: need at least 2 times, got {}", summary.points.len())));
    }
    Ok(band_test(name, summary, target, seed))
}

/// As [`martingale_expectation_test`] without the two-time minimum.
pub fn band_test<T: Fn(f64) -> f64>(name: &str, summary: &EnsembleSummary, target: T, seed: u64) -> TestReport {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for p in &summary.points {
        let gap = (p.mean - target(p.t)).abs();
        let ratio = if gap == 0.0 {
            0.0
        } else if p.stderr == 0.0 {
            f64::INFINITY
        } else {
            gap / p.stderr
        };
        worst = worst.max(ratio);
        detail.push(format!("t={}: mean {:.5} target {:.5} stderr {:.5}", p.t, p.mean, target(p.t), p.stderr));
    }
    TestReport {
        name: name.to_string(),
        statistic: worst,
        threshold: 3.0,
        pass: worst <= 3.0,
        seed,
        n: summary.n_paths,
        retries: 0,
        detail: detail.join("; "),
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `errors[i]` holds samples of an error metric at the `i`-th, finer and
/// finer, resolution. Passes iff the medians strictly decrease, where a run of
/// exact zeros counts as decreasing.
pub fn refinement_report(name: &str, errors: &[Vec<f64>], seed: u64) -> Result<TestReport> {
    if errors.len() < 3 {
        return Err(Error::Contract(format!("{name}: need a ladder of at least 3 resolutions")));
    }
    let medians: Vec<f64> = errors.iter().map(|e| median(e)).collect();
    let pass = medians.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    let worst_ratio = medians
        .windows(2)
        .map(|w| if w[0] == 0.0 && w[1] == 0.0 { 0.0 } else { w[1] / w[0] })
        .fold(0.0, f64::max);
    Ok(TestReport {
        name: name.to_string(),
        statistic: worst_ratio,
        threshold: 1.0,
        pass,
        seed,
        n: errors.iter().map(Vec::len).min().unwrap_or(0),
        retries: 0,
        detail: format!("medians {medians:?}"),
    })
}

/// Number of fresh-seed reruns a failing stochastic test may use.
pub const MAX_RETRIES: u32 = 3;

/// Runs `test` with `seed`, and on failure with up to [`MAX_RETRIES`] seeds
/// derived from it. Returns the first passing report, or the last one.
pub fn with_retries<F>(seed: u64, test: F) -> Result<TestReport>
where
    F: Fn(u64) -> Result<TestReport>,
{
    let mut report = test(seed)?;
    let mut attempt = 0;
    while !report.pass && attempt < MAX_RETRIES {
        attempt += 1;
        report = test(retry_seed(seed, attempt))?;
    }
    report.retries = attempt;
    Ok(report)
}
