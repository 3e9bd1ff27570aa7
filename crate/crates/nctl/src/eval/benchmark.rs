//! Accuracy benchmarks: Split MNIST / Fashion-MNIST, Permuted MNIST with a
//! one-vs-all head, and prequential Electricity.

use std::sync::Arc;
use std::time::Instant;

use nctl_core::{NctlConfig, NctlNetwork};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learner::NctlLearner;
use super::metrics::{decide, log_loss, mean, MetricLog, StepRecord};
use super::prequential::prequential_run;
use crate::config::{ModelConfig, PermutedConfig, SplitConfig};
use crate::data::protocols::{
    derive_seed, electricity_stream, permutations, permuted_stream, split_pairs, split_stream,
    split_task_items,
};
use crate::data::stream::PermutedSource;
use crate::data::{
    ElectricityData, Example, FeatureSource, ItemMeta, PreparedImages, StandardizeMode,
};
use crate::error::{NctlError, Result};

/// Accuracies on every task's test split at one point of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    /// Index (0..5) of the task being trained when the evaluation ran.
    pub train_task: usize,
    pub accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub seed: u64,
    pub grid: Vec<EvalPoint>,
    pub final_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    #[serde(skip)]
    pub train: MetricLog,
    #[serde(skip)]
    pub network: Option<NctlNetwork>,
}

fn examples(source: &dyn FeatureSource, items: &[ItemMeta]) -> Vec<Example> {
    items
        .iter()
        .map(|m| Example {
            features: source.features(m),
            label: m.label,
        })
        .collect()
}

fn shuffled_prefix(mut items: Vec<ItemMeta>, n: usize, seed: u64) -> Vec<ItemMeta> {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    items.truncate(n);
    items
}

/// Accuracy of a copy of `net` that first learns `adapt`; `net` is untouched.
pub fn adapted_accuracy(net: &NctlNetwork, adapt: &[Example], test: &[Example]) -> Result<f64> {
    let mut copy = net.clone();
    for ex in adapt {
        copy.learn(&ex.features, ex.label)?;
    }
    let mut correct = 0usize;
    for ex in test {
        if decide(copy.predict(&ex.features)?.output()) == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len().max(1) as f64)
}

/// Adaptation and test examples for each of the five Split tasks.
pub struct SplitEvalSets {
    pub adapt: Vec<Vec<Example>>,
    pub test: Vec<Vec<Example>>,
}

impl SplitEvalSets {
    pub fn new(
        images: &PreparedImages,
        seed: u64,
        adaptation: usize,
        eval_limit: Option<usize>,
    ) -> Self {
        let train = images.train_source();
        let test = images.test_source();
        let adapt = (0..5)
            .map(|t| {
                let items = shuffled_prefix(
                    split_task_items(&images.train, t),
                    adaptation,
                    derive_seed(seed, 300 + t as u64),
                );
                examples(&train, &items)
            })
            .collect();
        let test = (0..5)
            .map(|t| {
                let mut items = split_task_items(&images.test, t);
                if let Some(n) = eval_limit {
                    items = shuffled_prefix(items, n, derive_seed(seed, 400 + t as u64));
                }
                examples(&test, &items)
            })
            .collect();
        Self { adapt, test }
    }

    pub fn evaluate(&self, net: &NctlNetwork) -> Result<Vec<f64>> {
        (0..5)
            .map(|t| adapted_accuracy(net, &self.adapt[t], &self.test[t]))
            .collect()
    }
}

/// One pass over the five Split tasks with periodic evaluation.
pub fn split_protocol(
    images: &PreparedImages,
    model: &ModelConfig,
    seed: u64,
    settings: &SplitConfig,
    window: usize,
    name: &str,
) -> Result<SplitResult> {
    let stream = split_stream(Arc::new(images.train_source()), &images.train, seed, name);
    let evals = SplitEvalSets::new(images, seed, settings.adaptation, settings.eval_limit);
    let steps = (stream.len() + settings.adaptation) as u64;
    let mut net = NctlNetwork::new(model.nctl(stream.dim(), steps, seed)?)?;
    let pairs: Vec<usize> = split_pairs()
        .iter()
        .map(|&(a, b)| crate::data::protocols::pair_index(a, b).unwrap())
        .collect();
    let mut log = MetricLog::new(window);
    let mut grid = Vec::new();
    let n = stream.len();
    for (t, (meta, ex)) in stream.tagged().enumerate() {
        let start = Instant::now();
        let p = net.learn(&ex.features, ex.label)?;
        log.push(StepRecord {
            step: t as u64,
            task: meta.task,
            logloss: log_loss(p, ex.label),
            correct: decide(p) == ex.label,
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        let due = settings.eval_every.is_some_and(|k| (t + 1) % k == 0) || t + 1 == n;
        if due {
            grid.push(EvalPoint {
                step: t + 1,
                train_task: pairs.iter().position(|&p| p == meta.task).unwrap_or(0),
                accuracies: evals.evaluate(&net)?,
            });
        }
    }
    let final_accuracies = grid
        .last()
        .map(|g| g.accuracies.clone())
        .unwrap_or_default();
    Ok(SplitResult {
        seed,
        mean_accuracy: mean(&final_accuracies),
        final_accuracies,
        grid,
        train: log,
        network: Some(net),
    })
}

/// Ten binary networks, one per class; the prediction is the class whose
/// network is most confident, ties going to the lowest class.
#[derive(Clone, Debug, PartialEq)]
pub struct OneVsAll {
    pub nets: Vec<NctlNetwork>,
}

pub fn argmax_lowest(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

impl OneVsAll {
    pub fn new(nets: Vec<NctlNetwork>) -> Result<Self> {
        if nets.len() != 10 {
            return Err(NctlError::Config(format!(
                "one-vs-all needs 10 networks, got {}",
                nets.len()
            )));
        }
        let strip = |c: &NctlConfig| {
            let mut c = c.clone();
            c.gln.seed = 0;
            c
        };
        let first = strip(nets[0].config());
        if nets.iter().any(|n| strip(n.config()) != first) {
            return Err(NctlError::Config(
                "one-vs-all networks must share one configuration".into(),
            ));
        }
        Ok(Self { nets })
    }

    /// Ten networks from `config`, seeded `seed, seed + 1, ...`.
    pub fn from_config(config: &NctlConfig) -> Result<Self> {
        let nets = (0..10)
            .map(|i| {
                let mut c = config.clone();
                c.gln.seed = config.gln.seed.wrapping_add(i);
                NctlNetwork::new(c)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(nets)
    }

    pub fn probabilities(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.nets
            .iter()
            .map(|n| Ok(n.predict(z)?.output()))
            .collect()
    }

    pub fn predict_class(&self, z: &[f64]) -> Result<u8> {
        Ok(argmax_lowest(&self.probabilities(z)?) as u8)
    }

    /// Train network `i` on target `class == i`; returns the probabilities
    /// predicted beforehand.
    pub fn learn(&mut self, z: &[f64], class: u8) -> Result<Vec<f64>> {
        self.nets
            .iter_mut()
            .enumerate()
            .map(|(i, n)| Ok(n.learn(z, usize::from(class) == i)?))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutedResult {
    pub seed: u64,
    pub final_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub train_accuracy: f64,
    /// Per step: mean binary log loss over the ten heads, and whether the
    /// argmax class was right.
    #[serde(skip)]
    pub train: MetricLog,
    #[serde(skip)]
    pub head: Option<OneVsAll>,
}

/// Sequential training over permuted tasks with a one-vs-all head, then
/// per-task test accuracy (each after `adaptation` examples on a copy).
pub fn permuted_protocol(
    images: &PreparedImages,
    model: &ModelConfig,
    seed: u64,
    settings: &PermutedConfig,
    adaptation: usize,
    eval_limit: Option<usize>,
    window: usize,
) -> Result<PermutedResult> {
    let stream = permuted_stream(
        images.train_source(),
        seed,
        settings.n_tasks,
        settings.per_task,
    );
    let steps = (stream.len() + adaptation) as u64;
    let mut head = OneVsAll::from_config(&model.nctl(stream.dim(), steps, seed)?)?;
    let mut log = MetricLog::new(window);
    for (t, m) in stream.meta().iter().enumerate() {
        let start = Instant::now();
        let z = stream.source().features(m);
        let probs = head.learn(&z, m.class)?;
        let loss = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| log_loss(p, i == usize::from(m.class)))
            .sum::<f64>()
            / probs.len() as f64;
        log.push(StepRecord {
            step: t as u64,
            task: m.task,
            logloss: loss,
            correct: argmax_lowest(&probs) == usize::from(m.class),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let perms = permutations(seed, settings.n_tasks, images.test.dim());
    let test_src = PermutedSource {
        images: images.test_source(),
        perms: perms.clone(),
    };
    let train_src = PermutedSource {
        images: images.train_source(),
        perms,
    };
    let mut finals = Vec::with_capacity(settings.n_tasks);
    for task in 0..settings.n_tasks {
        let all = |n: usize| -> Vec<ItemMeta> {
            (0..n)
                .map(|i| ItemMeta {
                    source: i,
                    class: 0,
                    label: false,
                    task,
                    step_in_task: i,
                })
                .collect()
        };
        let adapt = shuffled_prefix(
            all(images.train.len()),
            adaptation,
            derive_seed(seed, 500 + task as u64),
        );
        let mut tests = all(images.test.len());
        if let Some(n) = eval_limit {
            tests = shuffled_prefix(tests, n, derive_seed(seed, 600 + task as u64));
        }
        let mut copy = head.clone();
        for m in &adapt {
            copy.learn(&train_src.features(m), images.train.label(m.source))?;
        }
        let mut ok = 0usize;
        for m in &tests {
            if copy.predict_class(&test_src.features(m))? == images.test.label(m.source) {
                ok += 1;
            }
        }
        finals.push(ok as f64 / tests.len().max(1) as f64);
    }
    Ok(PermutedResult {
        seed,
        mean_accuracy: mean(&finals),
        final_accuracies: finals,
        train_accuracy: log.accuracy(),
        train: log,
        head: Some(head),
    })
}

/// Prequential NCTL run over the Electricity stream; returns the log and
/// the trained network.
pub fn electricity_protocol(
    data: &ElectricityData,
    model: &ModelConfig,
    seed: u64,
    mode: StandardizeMode,
    window: usize,
) -> Result<(MetricLog, NctlNetwork)> {
    let stream = electricity_stream(data, mode);
    let net = NctlNetwork::new(model.nctl(stream.dim(), stream.len() as u64, seed)?)?;
    let mut learner = NctlLearner::new(net);
    let log = prequential_run(&mut learner, &stream, window)?;
    Ok((log, learner.net))
}
