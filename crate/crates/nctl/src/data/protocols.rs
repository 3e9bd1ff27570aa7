//! Stream generators for the continual-learning protocols.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::electricity::ElectricityData;
use super::idx::ImageSet;
use super::standardize::{Running, Standardizer};
use super::stream::{
    FeatureSource, ImageSource, ItemMeta, PermutedSource, StreamSpec, TableSource, TaskStream,
};

pub const DURATION_BASE: usize = 100;
pub const DURATION_P: f64 = 0.01;

/// The 45 unordered digit pairs `(a, b)` with `a < b`, in lexicographic order.
pub fn digit_pairs() -> Vec<(u8, u8)> {
    (0..10u8)
        .flat_map(|a| (a + 1..10).map(move |b| (a, b)))
        .collect()
}

pub fn pair_index(a: u8, b: u8) -> Option<usize> {
    let (a, b) = (a.min(b), a.max(b));
    digit_pairs().iter().position(|&p| p == (a, b))
}

/// The five Split tasks: 0v1, 2v3, 4v5, 6v7, 8v9.
pub fn split_pairs() -> [(u8, u8); 5] {
    [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
}

/// Support of the geometric part of a task duration `100 + X`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricSupport {
    /// `X ∈ {0, 1, ...}`, mean duration 199.
    #[default]
    Zero,
    /// `X ∈ {1, 2, ...}`, mean duration 200.
    One,
}

pub fn sample_duration<R: Rng + ?Sized>(rng: &mut R, support: GeometricSupport) -> usize {
    let x = Geometric::new(DURATION_P).unwrap().sample(rng) as usize;
    DURATION_BASE
        + match support {
            GeometricSupport::Zero => x,
            GeometricSupport::One => x + 1,
        }
}

/// A child seed for component `tag` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.next_u64()
}

/// Row indices of every class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassIndex(pub Vec<Vec<usize>>);

impl ClassIndex {
    pub fn new(set: &ImageSet) -> Self {
        Self((0..10).map(|c| set.indices_of(c)).collect())
    }
}

/// One task of a pair-based stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSegment {
    /// Index into [`digit_pairs`].
    pub pair: usize,
    pub len: usize,
    /// Seed for drawing this segment's examples.
    pub sample_seed: u64,
}

/// Examples drawn uniformly, with replacement, from the union of the two
/// digit classes of the segment's pair. The smaller digit is label 0.
pub fn segment_items(index: &ClassIndex, seg: &TaskSegment) -> Vec<ItemMeta> {
    let (a, b) = digit_pairs()[seg.pair];
    let (ia, ib) = (&index.0[a as usize], &index.0[b as usize]);
    let mut rng = ChaCha8Rng::seed_from_u64(seg.sample_seed);
    (0..seg.len)
        .map(|step| {
            let k = rng.random_range(0..ia.len() + ib.len());
            let (source, class) = if k < ia.len() {
                (ia[k], a)
            } else {
                (ib[k - ia.len()], b)
            };
            ItemMeta {
                source,
                class,
                label: class == b,
                task: seg.pair,
                step_in_task: step,
            }
        })
        .collect()
}

pub fn stream_from_segments(
    source: Arc<dyn FeatureSource>,
    index: &ClassIndex,
    segments: &[TaskSegment],
    spec: StreamSpec,
) -> TaskStream {
    let items = segments
        .iter()
        .flat_map(|s| segment_items(index, s))
        .collect();
    TaskStream::new(spec, items, source)
}

/// Free Split plan: `n_tasks` pairs drawn uniformly with replacement, each
/// lasting `100 + X` steps.
pub fn free_split_plan(seed: u64, n_tasks: usize, support: GeometricSupport) -> Vec<TaskSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    (0..n_tasks)
        .map(|i| TaskSegment {
            pair: rng.random_range(0..45),
            len: sample_duration(&mut rng, support),
            sample_seed: derive_seed(seed, 1 + i as u64),
        })
        .collect()
}

pub fn free_split_stream(
    source: Arc<dyn FeatureSource>,
    index: &ClassIndex,
    seed: u64,
    n_tasks: usize,
    support: GeometricSupport,
) -> TaskStream {
    let plan = free_split_plan(seed, n_tasks, support);
    let spec = StreamSpec {
        protocol: "free-split".into(),
        seed,
        params: json!({ "n_tasks": n_tasks, "support": support }),
    };
    stream_from_segments(source, index, &plan, spec)
}

/// Items of one Split task in `set`, in file order; the larger digit is label 1.
pub fn split_task_items(set: &ImageSet, task: usize) -> Vec<ItemMeta> {
    let (a, b) = split_pairs()[task];
    let pair = pair_index(a, b).unwrap();
    (0..set.len())
        .filter(|&i| set.label(i) == a || set.label(i) == b)
        .enumerate()
        .map(|(step, i)| ItemMeta {
            source: i,
            class: set.label(i),
            label: set.label(i) == b,
            task: pair,
            step_in_task: step,
        })
        .collect()
}

/// The five Split tasks in order, each a single shuffled pass over every
/// training example of its two digits.
pub fn split_stream(
    source: Arc<dyn FeatureSource>,
    set: &ImageSet,
    seed: u64,
    name: &str,
) -> TaskStream {
    let mut items = Vec::new();
    for task in 0..5 {
        let mut t = split_task_items(set, task);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, task as u64));
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.shuffle(&mut rng);
        let mut shuffled: Vec<ItemMeta> = order.iter().map(|&i| t[i]).collect();
        for (step, m) in shuffled.iter_mut().enumerate() {
            m.step_in_task = step;
        }
        t = shuffled;
        items.extend(t);
    }
    let spec = StreamSpec {
        protocol: name.into(),
        seed,
        params: json!({ "pairs": split_pairs() }),
    };
    TaskStream::new(spec, items, source)
}

/// Pixel permutations: the first is the identity, the rest uniform random.
pub fn permutations(seed: u64, n_tasks: usize, dim: usize) -> Vec<Vec<usize>> {
    (0..n_tasks)
        .map(|t| {
            let mut p: Vec<usize> = (0..dim).collect();
            if t > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + t as u64));
                p.shuffle(&mut rng);
            }
            p
        })
        .collect()
}

/// Permuted tasks over `images`; each task is a shuffled pass over at most
/// `per_task` training rows. Targets are the ten digit classes.
pub fn permuted_stream(
    images: ImageSource,
    seed: u64,
    n_tasks: usize,
    per_task: Option<usize>,
) -> TaskStream {
    let n = images.set.len();
    let perms = permutations(seed, n_tasks, images.set.dim());
    let mut items = Vec::new();
    for task in 0..n_tasks {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, task as u64));
        order.shuffle(&mut rng);
        order.truncate(per_task.unwrap_or(n));
        items.extend(order.iter().enumerate().map(|(step, &i)| ItemMeta {
            source: i,
            class: images.set.label(i),
            label: false,
            task,
            step_in_task: step,
        }));
    }
    let spec = StreamSpec {
        protocol: "permuted-mnist".into(),
        seed,
        params: json!({ "n_tasks": n_tasks, "per_task": per_task }),
    };
    TaskStream::new(spec, items, Arc::new(PermutedSource { images, perms }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    /// Statistics of the whole file, fixed up front.
    Precomputed,
    /// Statistics of the examples seen so far, including the current one.
    #[default]
    Running,
}

/// The Electricity stream in temporal order, a single task.
pub fn electricity_stream(data: &ElectricityData, mode: StandardizeMode) -> TaskStream {
    let rows: Vec<Vec<f64>> = match mode {
        StandardizeMode::Precomputed => {
            let s = Standardizer::fit(5, data.features.iter().map(|r| r.as_slice()));
            data.features.iter().map(|r| s.transform(r)).collect()
        }
        StandardizeMode::Running => {
            let mut acc = Running::new(5);
            data.features
                .iter()
                .map(|r| acc.push_transform(r))
                .collect()
        }
    };
    let items = data
        .labels
        .iter()
        .enumerate()
        .map(|(i, &label)| ItemMeta {
            source: i,
            class: u8::from(label),
            label,
            task: 0,
            step_in_task: i,
        })
        .collect();
    let spec = StreamSpec {
        protocol: "electricity".into(),
        seed: 0,
        params: json!({ "standardize": mode }),
    };
    TaskStream::new(spec, items, Arc::new(TableSource { dim: 5, rows }))
}
