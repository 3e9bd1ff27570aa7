//! Per-step metric logs and their summaries.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NctlError, Result};

/// Probabilities are clamped to `[LOSS_CLIP, 1 - LOSS_CLIP]` before taking logs.
pub const LOSS_CLIP: f64 = 1e-6;

pub fn log_loss(p: f64, label: bool) -> f64 {
    let p = p.clamp(LOSS_CLIP, 1.0 - LOSS_CLIP);
    if label {
        -p.ln()
    } else {
        -(-p).ln_1p()
    }
}

/// Predicted label at threshold 0.5 (ties go to 0).
pub fn decide(p: f64) -> bool {
    p > 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub task: usize,
    pub logloss: f64,
    pub correct: bool,
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricLog {
    pub window: usize,
    pub records: Vec<StepRecord>,
}

impl MetricLog {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, r: StepRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.logloss).collect()
    }

    pub fn mean_logloss(&self) -> f64 {
        mean(&self.losses())
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.records.len().max(1) as f64;
        self.records.iter().filter(|r| r.correct).count() as f64 / n
    }

    /// Trailing moving average of the log loss over `window` steps.
    pub fn windowed_logloss(&self) -> Vec<f64> {
        moving_average(&self.losses(), self.window)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for r in &self.records {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| NctlError::io(path, e))
    }

    pub fn summary(&self, protocol: &str, seed: u64) -> RunSummary {
        RunSummary {
            protocol: protocol.to_string(),
            seed,
            steps: self.records.len(),
            window: self.window,
            mean_logloss: self.mean_logloss(),
            accuracy: self.accuracy(),
            wall_ms: self.records.iter().map(|r| r.ms).sum(),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> NctlError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => NctlError::io(path, io),
        other => NctlError::Format {
            path: path.to_path_buf(),
            detail: format!("{other:?}"),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub protocol: String,
    pub seed: u64,
    pub steps: usize,
    pub window: usize,
    pub mean_logloss: f64,
    pub accuracy: f64,
    pub wall_ms: f64,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

pub fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(v.len());
    let mut sum = 0.0;
    for i in 0..v.len() {
        sum += v[i];
        if i >= w {
            sum -= v[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Element-wise mean of equally long curves.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..n)
        .map(|i| mean(&curves.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    let mut f = std::fs::File::create(path).map_err(|e| NctlError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| NctlError::io(path, e))?;
    f.write_all(b"\n").map_err(|e| NctlError::io(path, e))
}
