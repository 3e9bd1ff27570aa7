//! Saliency maps: effective input weights of the MAP network, exported as
//! PGM images and CSV.

use std::fmt::Write as _;
use std::path::Path;

use nctl_core::{EffectiveWeights, GlnNetwork};

use crate::data::Standardizer;
use crate::error::{NctlError, Result};

pub const IMAGE_SIDE: usize = 28;

/// `(rows, cols)` for a saliency vector of length `dim`.
pub fn image_shape(dim: usize) -> Result<(usize, usize)> {
    if dim == IMAGE_SIDE * IMAGE_SIDE {
        Ok((IMAGE_SIDE, IMAGE_SIDE))
    } else {
        Err(NctlError::UnsupportedShape(format!(
            "{dim}-dimensional inputs cannot be drawn as a {IMAGE_SIDE}x{IMAGE_SIDE} image"
        )))
    }
}

/// Effective weights averaged over `inputs` (the origin when empty).
pub fn mean_saliency(net: &GlnNetwork, inputs: &[Vec<f64>]) -> Result<EffectiveWeights> {
    let dim = net.config().input_dim;
    if inputs.is_empty() {
        return Ok(net.effective_weights(&vec![0.0; dim])?);
    }
    let mut acc = EffectiveWeights {
        weights: vec![0.0; dim],
        bias: 0.0,
    };
    for z in inputs {
        let e = net.effective_weights(z)?;
        for (a, w) in acc.weights.iter_mut().zip(&e.weights) {
            *a += w;
        }
        acc.bias += e.bias;
    }
    let n = inputs.len() as f64;
    acc.weights.iter_mut().for_each(|w| *w /= n);
    acc.bias /= n;
    Ok(acc)
}

/// Re-express a map over standardized features as one over raw features:
/// `w·(x − μ)/σ + b = (w/σ)·x + (b − Σ wμ/σ)`. Constant features get weight 0.
pub fn to_raw_space(e: &EffectiveWeights, std: &Standardizer) -> EffectiveWeights {
    let mut bias = e.bias;
    let weights = e
        .weights
        .iter()
        .zip(std.mean.iter().zip(&std.std))
        .map(|(w, (m, s))| {
            if *s > 0.0 {
                bias -= w * m / s;
                w / s
            } else {
                0.0
            }
        })
        .collect();
    EffectiveWeights { weights, bias }
}

/// Binary PGM (P5) with values min-max scaled to 0..=255.
pub fn pgm_bytes(values: &[f64], rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if range > 0.0 {
            ((v - lo) / range * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(path: &Path, values: &[f64]) -> Result<()> {
    let (rows, cols) = image_shape(values.len())?;
    std::fs::write(path, pgm_bytes(values, rows, cols)).map_err(|e| NctlError::io(path, e))
}

/// `index,weight` rows followed by a `bias,<value>` row.
pub fn write_csv(path: &Path, e: &EffectiveWeights) -> Result<()> {
    let mut s = String::from("index,weight\n");
    for (i, w) in e.weights.iter().enumerate() {
        let _ = writeln!(s, "{i},{w:e}");
    }
    let _ = writeln!(s, "bias,{:e}", e.bias);
    std::fs::write(path, s).map_err(|e| NctlError::io(path, e))
}

/// Pearson correlation; 0 when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
