//! Backward- and forward-transfer protocols on Free Split streams, and the
//! comparison against the task-aware GLN oracles.

use std::sync::Arc;

use nctl_core::NctlNetwork;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::learner::NctlLearner;
use super::metrics::{mean, mean_curve, mean_stderr, MetricLog};
use super::oracle::{oracle_run, OracleSpec, OracleVariant};
use super::prequential::prequential_run;
use super::run_seeds;
use crate::config::ModelConfig;
use crate::data::protocols::{derive_seed, free_split_plan, sample_duration, stream_from_segments};
use crate::data::{
    ClassIndex, FeatureSource, GeometricSupport, PreparedImages, StreamSpec, TaskSegment,
    TaskStream,
};
use crate::error::Result;

/// Training rows of an image dataset, ready for pair-based streams.
#[derive(Clone)]
pub struct PairData {
    pub source: Arc<dyn FeatureSource>,
    pub index: ClassIndex,
}

impl PairData {
    pub fn from_images(images: &PreparedImages) -> Self {
        Self {
            source: Arc::new(images.train_source()),
            index: ClassIndex::new(&images.train),
        }
    }

    pub fn stream(&self, segments: &[TaskSegment], spec: StreamSpec) -> TaskStream {
        stream_from_segments(self.source.clone(), &self.index, segments, spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub seeds: Vec<u64>,
    pub counts: Vec<usize>,
    pub target_steps: usize,
    pub support: GeometricSupport,
    pub window: usize,
    pub jobs: usize,
}

/// Per-count results. `per_seed[i][s]` is the target-task loss curve of
/// count `counts[i]` and seed `seeds[s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCurves {
    pub counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Vec<Vec<f64>>>,
}

impl TransferCurves {
    /// Seed-averaged per-step target loss for `counts[i]`.
    pub fn mean_curve(&self, i: usize) -> Vec<f64> {
        mean_curve(&self.per_seed[i])
    }

    /// Mean and stderr over seeds of the summed target loss.
    pub fn cumulative(&self, i: usize) -> (f64, f64) {
        let totals: Vec<f64> = self.per_seed[i].iter().map(|c| c.iter().sum()).collect();
        mean_stderr(&totals)
    }

    /// Mean over seeds and over target steps `from..to`.
    pub fn mean_over(&self, i: usize, from: usize, to: usize) -> f64 {
        let c = self.mean_curve(i);
        mean(&c[from.min(c.len())..to.min(c.len())])
    }
}

/// Initial task, `n` distractor tasks (never the initial pair), then the
/// initial task again for `target_steps`. Distractor lists are nested in
/// `n`, and the initial segment depends only on the seed.
pub fn backward_plan(
    seed: u64,
    n: usize,
    target_steps: usize,
    support: GeometricSupport,
) -> Vec<TaskSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 10));
    let initial = rng.random_range(0..45);
    let mut plan = vec![TaskSegment {
        pair: initial,
        len: sample_duration(&mut rng, support),
        sample_seed: derive_seed(seed, 11),
    }];
    let mut drng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 12));
    for i in 0..n {
        let pair = loop {
            let p = drng.random_range(0..45);
            if p != initial {
                break p;
            }
        };
        plan.push(TaskSegment {
            pair,
            len: sample_duration(&mut drng, support),
            sample_seed: derive_seed(seed, 100 + i as u64),
        });
    }
    plan.push(TaskSegment {
        pair: initial,
        len: target_steps,
        sample_seed: derive_seed(seed, 13),
    });
    plan
}

/// `n` source tasks, a prefix of 15 distinct pairs different from the
/// held-out target, then the target for `target_steps`.
pub fn forward_plan(
    seed: u64,
    n: usize,
    target_steps: usize,
    support: GeometricSupport,
) -> Vec<TaskSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 20));
    let target = rng.random_range(0..45);
    let others: Vec<usize> = (0..45).filter(|&p| p != target).collect();
    let sources: Vec<usize> = sample(&mut rng, others.len(), 15)
        .into_iter()
        .map(|i| others[i])
        .collect();
    let mut plan: Vec<TaskSegment> = sources
        .iter()
        .enumerate()
        .map(|(i, &pair)| TaskSegment {
            pair,
            len: sample_duration(&mut rng, support),
            sample_seed: derive_seed(seed, 200 + i as u64),
        })
        .collect();
    plan.truncate(n);
    plan.push(TaskSegment {
        pair: target,
        len: target_steps,
        sample_seed: derive_seed(seed, 21),
    });
    plan
}

fn run_plan(
    data: &PairData,
    model: &ModelConfig,
    seed: u64,
    plan: &[TaskSegment],
    window: usize,
) -> Result<MetricLog> {
    let spec = StreamSpec {
        protocol: "transfer".into(),
        seed,
        params: json!({ "plan": plan }),
    };
    let stream = data.stream(plan, spec);
    let net = NctlNetwork::new(model.nctl(stream.dim(), stream.len() as u64, seed)?)?;
    prequential_run(&mut NctlLearner::new(net), &stream, window)
}

fn transfer(
    data: &PairData,
    model: &ModelConfig,
    settings: &TransferSettings,
    plan: fn(u64, usize, usize, GeometricSupport) -> Vec<TaskSegment>,
) -> Result<TransferCurves> {
    let per_seed = settings
        .counts
        .iter()
        .map(|&n| {
            run_seeds(&settings.seeds, settings.jobs, |seed| {
                let p = plan(seed, n, settings.target_steps, settings.support);
                let log = run_plan(data, model, seed, &p, settings.window)?;
                let losses = log.losses();
                Ok(losses[losses.len() - settings.target_steps..].to_vec())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferCurves {
        counts: settings.counts.clone(),
        seeds: settings.seeds.clone(),
        per_seed,
    })
}

pub fn backward_transfer(
    data: &PairData,
    model: &ModelConfig,
    settings: &TransferSettings,
) -> Result<TransferCurves> {
    transfer(data, model, settings, backward_plan)
}

pub fn forward_transfer(
    data: &PairData,
    model: &ModelConfig,
    settings: &TransferSettings,
) -> Result<TransferCurves> {
    transfer(data, model, settings, forward_plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub seeds: Vec<u64>,
    pub nctl: Vec<f64>,
    pub oracle1: Vec<f64>,
    pub oracle2: Vec<f64>,
}

impl OracleComparison {
    pub fn means(&self) -> [(f64, f64); 3] {
        [
            mean_stderr(&self.nctl),
            mean_stderr(&self.oracle1),
            mean_stderr(&self.oracle2),
        ]
    }
}

/// Mean stream log loss of NCTL and both oracles on Free Split streams of
/// `n_tasks` tasks, one stream per seed.
pub fn compare_with_oracles(
    data: &PairData,
    model: &ModelConfig,
    seeds: &[u64],
    n_tasks: usize,
    support: GeometricSupport,
    jobs: usize,
) -> Result<OracleComparison> {
    let rows = run_seeds(seeds, jobs, |seed| {
        let plan = free_split_plan(seed, n_tasks, support);
        let spec = StreamSpec {
            protocol: "free-split".into(),
            seed,
            params: json!({ "n_tasks": n_tasks, "support": support }),
        };
        let stream = data.stream(&plan, spec);
        let nctl_cfg = model.nctl(stream.dim(), stream.len() as u64, seed)?;
        let gln = nctl_cfg.gln.clone();
        let net = NctlNetwork::new(nctl_cfg)?;
        let nctl = prequential_run(&mut NctlLearner::new(net), &stream, 10)?.mean_logloss();
        let o1 = oracle_run(
            &OracleSpec {
                variant: OracleVariant::Oracle1,
                gln: gln.clone(),
            },
            &stream,
            10,
        )?
        .mean_logloss();
        let o2 = oracle_run(
            &OracleSpec {
                variant: OracleVariant::Oracle2,
                gln,
            },
            &stream,
            10,
        )?
        .mean_logloss();
        Ok((nctl, o1, o2))
    })?;
    Ok(OracleComparison {
        seeds: seeds.to_vec(),
        nctl: rows.iter().map(|r| r.0).collect(),
        oracle1: rows.iter().map(|r| r.1).collect(),
        oracle2: rows.iter().map(|r| r.2).collect(),
    })
}
