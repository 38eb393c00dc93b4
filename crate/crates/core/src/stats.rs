//! Streaming ensemble statistics and small numerical helpers.
//!
//! Reductions are pairwise and in fixed sample order, so a run with any
//! worker count produces bitwise-identical results.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation in the given order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Streaming mean/variance/stderr for a vector-valued observable.
///
/// `merge` uses the parallel-variance combination rule and is associative
/// up to floating tolerance; [`EnsembleAccumulator::from_samples`] is the
/// deterministic fixed-order path used by the Monte Carlo engine.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleAccumulator {
    pub observable: String,
    pub seed: u64,
    pub count: u64,
    pub failures: u64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean, per component.
    pub m2: Vec<f64>,
}

impl EnsembleAccumulator {
    pub fn new(observable: &str, seed: u64, width: usize) -> Self {
        EnsembleAccumulator {
            observable: observable.to_string(),
            seed,
            count: 0,
            failures: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    /// Welford update with one sample.
    pub fn update(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for (i, &x) in values.iter().enumerate() {
            let d = x - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x - self.mean[i]);
        }
    }

    pub fn record_failure(&mut self) {
        self.failures += 1;
    }

    /// Order-insensitive combination (up to floating tolerance).
    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        assert_eq!(self.mean.len(), other.mean.len());
        if other.count == 0 {
            self.failures += other.failures;
            return;
        }
        if self.count == 0 {
            let failures = self.failures;
            *self = other.clone();
            self.failures += failures;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
            self.mean[i] += delta * nb / n;
        }
        self.count += other.count;
        self.failures += other.failures;
    }

    /// Deterministic construction from per-sample values in index order.
    /// Mean and M2 are computed by two pairwise passes.
    pub fn from_samples(
        observable: &str,
        seed: u64,
        width: usize,
        samples: &[Option<Vec<f64>>],
    ) -> Self {
        let ok: Vec<&Vec<f64>> = samples.iter().filter_map(|s| s.as_ref()).collect();
        let failures = (samples.len() - ok.len()) as u64;
        let count = ok.len() as u64;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        if count > 0 {
            let mut col = vec![0.0; ok.len()];
            for i in 0..width {
                for (j, s) in ok.iter().enumerate() {
                    col[j] = s[i];
                }
                mean[i] = pairwise_sum(&col) / count as f64;
                for (j, s) in ok.iter().enumerate() {
                    let d = s[i] - mean[i];
                    col[j] = d * d;
                }
                m2[i] = pairwise_sum(&col);
            }
        }
        EnsembleAccumulator {
            observable: observable.to_string(),
            seed,
            count,
            failures,
            mean,
            m2,
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![f64::NAN; self.mean.len()];
        }
        self.m2
            .iter()
            .map(|&m| m / (self.count as f64 - 1.0))
            .collect()
    }

    /// stderr = sqrt(var / count) per component.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Weighted least-squares line fit `y ≈ a + b x` with weights `w = 1/σ²`.
/// Returns (intercept, slope, slope standard error).
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || x.len() != w.len() {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
    let swy: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
    let xbar = swx / sw;
    let ybar = swy / sw;
    let sxx: f64 = w
        .iter()
        .zip(x)
        .map(|(wi, xi)| wi * (xi - xbar) * (xi - xbar))
        .sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(wi, (xi, yi))| wi * (xi - xbar) * (yi - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_se = (1.0 / sxx).sqrt();
    Some((intercept, slope, slope_se))
}
