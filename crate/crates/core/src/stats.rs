//! Mean and standard-error estimators for autocorrelated orbit samples.

use serde::{Deserialize, Serialize};

/// Number of batches used by [`batch_means`].
pub const DEFAULT_BATCHES: usize = 20;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// Standard error of `self - other`, treating the two as independent.
    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean with the standard error of independent samples.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return Estimate { value: m, stderr: f64::NAN };
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate { value: m, stderr: (var / n as f64).sqrt() }
}

/// Batch-means estimate: the series is cut into `batches` contiguous blocks
/// and the block averages are treated as independent samples. The value is
/// the plain mean of the full series.
pub fn batch_means(xs: &[f64], batches: usize) -> Estimate {
    let n = xs.len();
    let batches = batches.min(n).max(1);
    let value = mean(xs);
    if batches < 2 {
        return Estimate { value, stderr: f64::NAN };
    }
    let size = n / batches;
    let block: Vec<f64> = (0..batches)
        .map(|b| mean(&xs[b * size..(b + 1) * size]))
        .collect();
    let bm = mean(&block);
    let var = block.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Estimate { value, stderr: (var / batches as f64).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_zero_error() {
        let e = batch_means(&[2.0; 400], DEFAULT_BATCHES);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn iid_stderr_matches_formula() {
        let xs: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let e = mean_stderr(&xs);
        assert!((e.value - 1.5).abs() < 1e-15);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
