//! Experiment configuration: TOML files layered over per-protocol defaults,
//! with command-line overrides applied last.

use std::path::{Path, PathBuf};

use nctl_core::{FmnConfig, GgmParams, GlnConfig, LayerSpec, NctlConfig};
use serde::{Deserialize, Serialize};

use crate::data::{GeometricSupport, StandardizeMode};
use crate::error::{NctlError, Result};

/// Network hyperparameters shared by NCTL and the GLN baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<usize>,
    /// Hyperplanes per neuron (the context space has `2^context_bits` cells).
    pub context_bits: u32,
    pub learning_rate: f64,
    pub weight_bound: f64,
    pub prob_clip: f64,
    pub bias: bool,
    /// Tree depth; when absent, the smallest depth covering the stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmn_depth: Option<u32>,
    pub pool_capacity: usize,
    #[serde(with = "nctl_core::serde_f64")]
    pub admission_threshold: f64,
    pub bypass_fmn: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: vec![50, 25, 1],
            context_bits: 4,
            learning_rate: 0.001,
            weight_bound: nctl_core::mixer::DEFAULT_WEIGHT_BOUND,
            prob_clip: nctl_core::mixer::DEFAULT_PROB_CLIP,
            bias: true,
            fmn_depth: None,
            pool_capacity: nctl_core::fmn::DEFAULT_POOL_CAPACITY,
            admission_threshold: nctl_core::fmn::DEFAULT_ADMISSION_THRESHOLD,
            bypass_fmn: false,
        }
    }
}

/// Smallest `d ≥ 1` with `2^d ≥ steps`.
pub fn depth_for(steps: u64) -> u32 {
    steps.max(2).next_power_of_two().trailing_zeros()
}

impl ModelConfig {
    /// 50-25-1, `C = 2^4`, learning rate 0.001.
    pub fn split() -> Self {
        Self::default()
    }

    /// 10-5-1, `C = 2^6`.
    pub fn permuted() -> Self {
        Self {
            layers: vec![10, 5, 1],
            context_bits: 6,
            ..Self::default()
        }
    }

    pub fn electricity() -> Self {
        Self {
            learning_rate: 0.1,
            ..Self::default()
        }
    }

    /// A small network for the many-seed Free Split protocols.
    pub fn free_split() -> Self {
        Self {
            layers: vec![16, 8, 1],
            context_bits: 4,
            learning_rate: 0.02,
            pool_capacity: 16,
            ..Self::default()
        }
    }

    pub fn depth(&self, steps: u64) -> u32 {
        self.fmn_depth.unwrap_or_else(|| depth_for(steps))
    }

    pub fn gln(&self, input_dim: usize, seed: u64) -> Result<GlnConfig> {
        let params = GgmParams {
            learning_rate: self.learning_rate,
            weight_bound: self.weight_bound,
            prob_clip: self.prob_clip,
        };
        let cfg = GlnConfig {
            input_dim,
            layers: LayerSpec::new(self.layers.clone())?,
            context_bits: vec![self.context_bits; self.layers.len()],
            params,
            bias: self.bias,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration for a network that will see at most `steps` labels.
    pub fn nctl(&self, input_dim: usize, steps: u64, seed: u64) -> Result<NctlConfig> {
        let cfg = NctlConfig {
            gln: self.gln(input_dim, seed)?,
            fmn: FmnConfig {
                depth: self.depth(steps),
                capacity: self.pool_capacity,
                admission_threshold: self.admission_threshold,
            },
            bypass_fmn: self.bypass_fmn,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSplitConfig {
    pub n_tasks: usize,
    pub support: GeometricSupport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// Distractor counts (backward) or source counts (forward).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    /// Steps of the re-presented or held-out target task.
    pub target_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Evaluate every this many training steps; absent means only at the end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    /// Examples of the evaluation task fed to a throwaway copy before testing.
    pub adaptation: usize,
    /// Cap on test examples per task; absent means the full split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutedConfig {
    pub n_tasks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_task: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectricityConfig {
    pub standardize: StandardizeMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    /// Moving-average window for reported log loss.
    pub window: usize,
    pub model: ModelConfig,
    pub free_split: FreeSplitConfig,
    pub transfer: TransferConfig,
    pub split: SplitConfig,
    pub permuted: PermutedConfig,
    pub electricity: ElectricityConfig,
}

pub const PROTOCOLS: [&str; 7] = [
    "split-mnist",
    "permuted-mnist",
    "split-fashion",
    "electricity",
    "free-split",
    "backward",
    "forward",
];

impl ExperimentConfig {
    pub fn defaults(protocol: &str) -> Result<Self> {
        let model = match protocol {
            "split-mnist" | "split-fashion" => ModelConfig::split(),
            "permuted-mnist" => ModelConfig::permuted(),
            "electricity" => ModelConfig::electricity(),
            "free-split" | "backward" | "forward" => ModelConfig::free_split(),
            other => return Err(NctlError::Config(format!("unknown protocol {other:?}"))),
        };
        let counts = match protocol {
            "backward" => Some(vec![0, 5, 15]),
            "forward" => Some(vec![1, 5, 15]),
            _ => None,
        };
        Ok(Self {
            protocol: protocol.to_string(),
            data_dir: None,
            output_dir: PathBuf::from("runs").join(protocol),
            seeds: vec![0],
            jobs: 1,
            window: 10,
            model,
            free_split: FreeSplitConfig {
                n_tasks: 20,
                support: GeometricSupport::Zero,
            },
            transfer: TransferConfig {
                counts,
                target_steps: 200,
            },
            split: SplitConfig {
                eval_every: (protocol == "split-fashion").then_some(500),
                adaptation: 50,
                eval_limit: None,
            },
            permuted: PermutedConfig {
                n_tasks: 10,
                per_task: None,
            },
            electricity: ElectricityConfig {
                standardize: StandardizeMode::Running,
            },
        })
    }

    /// Defaults for `protocol`, overlaid with the TOML text `file`.
    pub fn from_toml(protocol: &str, file: &str) -> Result<Self> {
        let base = toml::Value::try_from(Self::defaults(protocol)?)
            .map_err(|e| NctlError::Config(e.to_string()))?;
        let overlay: toml::Value =
            toml::from_str(file).map_err(|e| NctlError::Config(e.to_string()))?;
        if let Some(p) = overlay.get("protocol").and_then(|v| v.as_str()) {
            if p != protocol {
                return Err(NctlError::Config(format!(
                    "config file is for protocol {p:?}, not {protocol:?}"
                )));
            }
        }
        let merged = merge(base, overlay);
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| NctlError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(protocol: &str, path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| NctlError::io(p, e))?;
                Self::from_toml(protocol, &text)
            }
            None => Self::defaults(protocol),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(NctlError::Config("at least one seed is required".into()));
        }
        if self.window == 0 {
            return Err(NctlError::Config("window must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(NctlError::Config("jobs must be positive".into()));
        }
        if self.free_split.n_tasks == 0 || self.permuted.n_tasks == 0 {
            return Err(NctlError::Config("task counts must be positive".into()));
        }
        self.model.gln(1, 0)?;
        FmnConfig {
            depth: self.model.fmn_depth.unwrap_or(1),
            capacity: self.model.pool_capacity,
            admission_threshold: self.model.admission_threshold,
        }
        .validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

fn merge(base: toml::Value, overlay: toml::Value) -> toml::Value {
    match (base, overlay) {
        (toml::Value::Table(mut b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, o) => o,
    }
}
