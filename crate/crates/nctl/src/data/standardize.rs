//! Per-feature standardization to zero mean and unit variance.

use serde::{Deserialize, Serialize};

/// Fixed per-feature statistics. Features with zero variance map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics of `rows` (population variance).
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut acc = Running::new(dim);
        for r in rows {
            acc.push(r);
        }
        acc.snapshot()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    /// Inverse of [`Standardizer::transform`] for features with nonzero variance.
    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Welford accumulator used for online standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Running {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Running {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn snapshot(&self) -> Standardizer {
        let n = self.n.max(1) as f64;
        Standardizer {
            mean: self.mean.clone(),
            std: self.m2.iter().map(|s| (s / n).sqrt()).collect(),
        }
    }

    /// Fold `x` into the statistics, then standardize it with them.
    pub fn push_transform(&mut self, x: &[f64]) -> Vec<f64> {
        self.push(x);
        let n = self.n as f64;
        x.iter()
            .zip(self.mean.iter().zip(&self.m2))
            .map(|(v, (m, s))| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    (v - m) / sd
                } else {
                    0.0
                }
            })
            .collect()
    }
}
