//! Small statistics helpers shared by the experiments.
//!
//! All reductions sum in index order so results are bit-for-bit reproducible
//! regardless of how the samples were produced.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_slice(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, count };
        }
        let n = count as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, stderr: (var / n).sqrt(), count }
    }

    /// Proportion estimate with the binomial CLT error bar.
    pub fn proportion(hits: usize, count: usize) -> Self {
        let p = if count == 0 { f64::NAN } else { hits as f64 / count as f64 };
        let stderr = (p * (1.0 - p) / count as f64).sqrt();
        Self { mean: p, stderr, count }
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &MeanEstimate) -> MeanEstimate {
        MeanEstimate {
            mean: self.mean - other.mean,
            stderr: self.stderr.hypot(other.stderr),
            count: self.count.min(other.count),
        }
    }
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Large-sample critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Outcome of a two-sample KS test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

pub fn ks_test(a: &[f64], b: &[f64], alpha: f64) -> KsTest {
    let statistic = ks_statistic(a, b);
    let critical = ks_critical(a.len(), b.len(), alpha);
    KsTest { statistic, critical, pass: statistic <= critical }
}

/// Ordinary least-squares line with a Student-t interval on the slope.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

impl LinearFit {
    pub fn fit(x: &[f64], y: &[f64]) -> Option<Self> {
        let n = x.len();
        if n < 2 || n != y.len() {
            return None;
        }
        let nf = n as f64;
        let mx = x.iter().sum::<f64>() / nf;
        let my = y.iter().sum::<f64>() / nf;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        if sxx <= 0.0 {
            return None;
        }
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let slope_stderr = if n > 2 {
            let rss: f64 = x
                .iter()
                .zip(y)
                .map(|(a, b)| (b - intercept - slope * a).powi(2))
                .sum();
            (rss / (nf - 2.0) / sxx).sqrt()
        } else {
            f64::INFINITY
        };
        Some(Self { slope, intercept, slope_stderr, points: n })
    }

    /// Two-sided confidence interval for the slope at the given level.
    pub fn slope_interval(&self, level: f64) -> (f64, f64) {
        if self.points <= 2 || !self.slope_stderr.is_finite() {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let dof = (self.points - 2) as f64;
        let t = StudentsT::new(0.0, 1.0, dof)
            .map(|d| d.inverse_cdf(0.5 + level / 2.0))
            .unwrap_or(f64::INFINITY);
        (self.slope - t * self.slope_stderr, self.slope + t * self.slope_stderr)
    }
}
