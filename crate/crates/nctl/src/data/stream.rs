//! Task streams: an ordered list of examples with hidden task metadata.
//!
//! Features are produced on demand from a [`FeatureSource`] so that long
//! streams over large image sets stay small in memory.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::idx::ImageSet;
use super::standardize::Standardizer;

/// Evaluator-side record of one stream position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMeta {
    /// Row of the underlying dataset.
    pub source: usize,
    /// Original class of the row.
    pub class: u8,
    /// Binary target. Multi-class streams leave it `false`; `class` is the label.
    pub label: bool,
    /// Task identity; recurring tasks share an id.
    pub task: usize,
    pub step_in_task: usize,
}

/// What a learner sees.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: bool,
}

pub trait FeatureSource: Send + Sync {
    fn dim(&self) -> usize;
    fn features(&self, item: &ItemMeta) -> Vec<f64>;
}

/// Standardized image pixels.
#[derive(Clone)]
pub struct ImageSource {
    pub set: Arc<ImageSet>,
    pub standardizer: Arc<Standardizer>,
}

impl FeatureSource for ImageSource {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn features(&self, item: &ItemMeta) -> Vec<f64> {
        self.standardizer.transform(&self.set.scaled(item.source))
    }
}

/// Standardized pixels rearranged by the permutation of the item's task:
/// output pixel `i` is input pixel `perms[task][i]`.
pub struct PermutedSource {
    pub images: ImageSource,
    pub perms: Vec<Vec<usize>>,
}

impl FeatureSource for PermutedSource {
    fn dim(&self) -> usize {
        self.images.dim()
    }

    fn features(&self, item: &ItemMeta) -> Vec<f64> {
        let f = self.images.features(item);
        self.perms[item.task].iter().map(|&j| f[j]).collect()
    }
}

/// Precomputed feature rows, indexed by `source`.
pub struct TableSource {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureSource for TableSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, item: &ItemMeta) -> Vec<f64> {
        self.rows[item.source].clone()
    }
}

/// How a stream was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub protocol: String,
    pub seed: u64,
    pub params: serde_json::Value,
}

/// One contiguous task segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub start: usize,
    pub len: usize,
    pub task: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub spec: StreamSpec,
    pub len: usize,
    pub boundaries: Vec<Boundary>,
}

#[derive(Clone)]
pub struct TaskStream {
    spec: StreamSpec,
    items: Vec<ItemMeta>,
    source: Arc<dyn FeatureSource>,
}

impl std::fmt::Debug for TaskStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaskStream")
            .field("spec", &self.spec)
            .field("len", &self.items.len())
            .finish()
    }
}

impl TaskStream {
    pub fn new(spec: StreamSpec, items: Vec<ItemMeta>, source: Arc<dyn FeatureSource>) -> Self {
        Self {
            spec,
            items,
            source,
        }
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn source(&self) -> &Arc<dyn FeatureSource> {
        &self.source
    }

    /// Learner-facing view: features and label only.
    pub fn examples(&self) -> impl Iterator<Item = Example> + '_ {
        self.items.iter().map(|m| self.example(m))
    }

    /// Evaluator view with the hidden metadata.
    pub fn tagged(&self) -> impl Iterator<Item = (ItemMeta, Example)> + '_ {
        self.items.iter().map(|m| (*m, self.example(m)))
    }

    pub fn meta(&self) -> &[ItemMeta] {
        &self.items
    }

    pub fn example(&self, m: &ItemMeta) -> Example {
        Example {
            features: self.source.features(m),
            label: m.label,
        }
    }

    pub fn boundaries(&self) -> Vec<Boundary> {
        let mut out: Vec<Boundary> = Vec::new();
        for (i, m) in self.items.iter().enumerate() {
            match out.last_mut() {
                Some(b) if m.step_in_task != 0 && m.task == b.task => b.len += 1,
                _ => out.push(Boundary {
                    start: i,
                    len: 1,
                    task: m.task,
                }),
            }
        }
        out
    }

    pub fn manifest(&self) -> StreamManifest {
        StreamManifest {
            spec: self.spec.clone(),
            len: self.len(),
            boundaries: self.boundaries(),
        }
    }

    /// The first `n` items.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            spec: self.spec.clone(),
            items: self.items[..n.min(self.items.len())].to_vec(),
            source: self.source.clone(),
        }
    }
}
