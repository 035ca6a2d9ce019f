//! Summation and error-bar helpers shared by every estimator.

use serde::{Deserialize, Serialize};

/// Number of non-overlapping batches used for batch-means error bars.
pub const DEFAULT_BATCHES: usize = 50;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(xs);
    acc.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Sample variance with the n - 1 denominator.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

/// Estimate with a one-sigma error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    /// Number of combined standard errors separating two estimates.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        if s == 0.0 {
            if self.value == other.value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - other.value).abs() / s
        }
    }

    pub fn agrees_with(&self, other: &Estimate, sigmas: f64) -> bool {
        self.z_score(other) <= sigmas
    }
}

/// Means of `batches` contiguous, equally sized blocks. A remainder shorter
/// than one block is dropped, so the blocks all carry equal weight.
pub fn batch_means(series: &[f64], batches: usize) -> Vec<f64> {
    let batches = batches.max(1).min(series.len().max(1));
    let size = series.len() / batches;
    if size == 0 {
        return Vec::new();
    }
    (0..batches)
        .map(|b| mean(&series[b * size..(b + 1) * size]))
        .collect()
}

/// Mean and standard error from a set of batch means (or any i.i.d. sample).
pub fn estimate_from_batches(means: &[f64]) -> Estimate {
    let m = mean(means);
    let se = if means.len() > 1 {
        (variance(means) / means.len() as f64).sqrt()
    } else {
        0.0
    };
    Estimate::new(m, se)
}

/// Batch-means estimate of the ergodic average of `series`.
pub fn batch_estimate(series: &[f64], batches: usize) -> Estimate {
    if series.is_empty() {
        return Estimate::new(0.0, 0.0);
    }
    let means = batch_means(series, batches);
    let mut est = estimate_from_batches(&means);
    // the dropped remainder still contributes to the point estimate
    est.value = mean(series);
    est
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    if sxx == 0.0 {
        return None;
    }
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss = compensated_sum(
            x.iter()
                .zip(y)
                .map(|(a, b)| (b - intercept - slope * a).powi(2)),
        );
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn batch_means_of_constant_series_has_zero_error() {
        let est = batch_estimate(&vec![3.5; 1000], 50);
        assert_eq!(est.value, 3.5);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn batch_means_drop_short_remainder() {
        let xs: Vec<f64> = (0..103).map(|i| i as f64).collect();
        let means = batch_means(&xs, 10);
        assert_eq!(means.len(), 10);
        assert_relative_eq!(means[0], 4.5);
        assert_relative_eq!(means[9], 94.5);
    }

    #[test]
    fn exact_line_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 - 2.0 * v).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(fit.slope, -2.0, epsilon = 1e-14);
        assert_relative_eq!(fit.intercept, 0.5, epsilon = 1e-14);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn z_score_of_identical_exact_values_is_zero() {
        let a = Estimate::new(1.0, 0.0);
        assert_eq!(a.z_score(&a), 0.0);
        assert!(a.z_score(&Estimate::new(2.0, 0.0)).is_infinite());
    }
}
