//! IDX container files as used by MNIST and Fashion-MNIST. Gzip-compressed
//! files are recognised by their leading bytes.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{NctlError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images with their labels; pixels are kept as raw bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl ImageSet {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let dim = rows * cols;
        if dim == 0 || pixels.len() != dim * labels.len() {
            return Err(NctlError::CountMismatch(
                pixels.len().checked_div(dim).unwrap_or(0),
                labels.len(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn pixels(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Pixels scaled to [0, 1].
    pub fn scaled(&self, i: usize) -> Vec<f64> {
        self.pixels(i)
            .iter()
            .map(|&p| f64::from(p) / 255.0)
            .collect()
    }

    /// Indices of every item with label `class`, in file order.
    pub fn indices_of(&self, class: u8) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class)
            .collect()
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| NctlError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| NctlError::Format {
                path: path.to_path_buf(),
                detail: format!("gzip: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parse an IDX byte buffer with the given magic; returns (dimensions, payload).
pub fn parse_idx<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let truncated = |detail: &str| NctlError::Truncated {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    let word = |i: usize| -> Option<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    };
    let found = word(0).ok_or_else(|| truncated("no header"))?;
    if found != magic {
        return Err(NctlError::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    let ndim = (magic & 0xff) as usize;
    let dims: Vec<usize> = (1..=ndim)
        .map(|i| word(i).map(|w| w as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| truncated("incomplete dimension list"))?;
    let header = 4 * (ndim + 1);
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(truncated(&format!(
            "{} of {expected} data bytes",
            payload.len()
        )));
    }
    Ok((dims, &payload[..expected]))
}

pub fn load_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_maybe_gz(path)?;
    let (dims, data) = parse_idx(&bytes, IMAGES_MAGIC, path)?;
    Ok((dims[1], dims[2], data.to_vec()))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_maybe_gz(path)?;
    let (_, data) = parse_idx(&bytes, LABELS_MAGIC, path)?;
    Ok(data.to_vec())
}

/// Load an image file and its label file.
pub fn load_idx(images: &Path, labels: &Path) -> Result<ImageSet> {
    let (rows, cols, pixels) = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    let n = pixels.len() / (rows * cols).max(1);
    if n != labels.len() {
        return Err(NctlError::CountMismatch(n, labels.len()));
    }
    ImageSet::new(rows, cols, pixels, labels)
}

/// Train and test splits of an MNIST-format dataset.
#[derive(Clone, Debug)]
pub struct ImageSplits {
    pub train: ImageSet,
    pub test: ImageSet,
}

/// `<dir>/<split>-images-idx3-ubyte[.gz]`, preferring the uncompressed name.
pub fn split_path(dir: &Path, split: &str, kind: &str) -> PathBuf {
    let idx = if kind == "images" { "idx3" } else { "idx1" };
    let plain = dir.join(format!("{split}-{kind}-{idx}-ubyte"));
    if plain.exists() {
        plain
    } else {
        plain.with_file_name(format!("{split}-{kind}-{idx}-ubyte.gz"))
    }
}

pub fn load_splits(dir: &Path) -> Result<ImageSplits> {
    let load = |split: &str| {
        load_idx(
            &split_path(dir, split, "images"),
            &split_path(dir, split, "labels"),
        )
    };
    Ok(ImageSplits {
        train: load("train")?,
        test: load("t10k")?,
    })
}
