use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-8;

/// Running per-dimension standardization `(x − mean)/√(var + 1e-8)`.
///
/// Statistics are updated by Welford's method with population variance.
/// A frozen normalizer never changes and is a pure function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the running mean.
    pub m2: Vec<f64>,
    pub count: u64,
    pub frozen: bool,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            count: 0,
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| m / self.count as f64).collect()
    }

    pub fn update(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *mean;
            *mean += d / n;
            *m2 += d * (v - *mean);
        }
    }

    /// Folds `x` into the statistics (unless frozen), then standardizes it.
    pub fn normalize(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                what: "observation",
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.update(x);
        Ok(self.apply(x))
    }

    /// Standardizes without touching the statistics.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(self.variance()))
            .map(|(v, (m, var))| (v - m) / (var + EPS).sqrt())
            .collect()
    }
}
