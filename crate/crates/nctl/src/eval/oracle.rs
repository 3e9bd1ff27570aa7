//! GLN baselines that are told where tasks change (Oracle 1) or also which
//! task is starting (Oracle 2).

use std::collections::HashMap;
use std::time::Instant;

use nctl_core::{GlnConfig, GlnNetwork};
use serde::{Deserialize, Serialize};

use super::learner::{GlnLearner, OnlineLearner};
use super::metrics::{decide, log_loss, MetricLog, StepRecord};
use crate::data::TaskStream;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleVariant {
    /// A fresh GLN at every task boundary.
    Oracle1,
    /// One GLN per task identity, restored when the task recurs.
    Oracle2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub variant: OracleVariant,
    pub gln: GlnConfig,
}

pub struct OracleLearner {
    spec: OracleSpec,
    current: GlnLearner,
    current_task: Option<usize>,
    registry: HashMap<usize, GlnNetwork>,
}

impl OracleLearner {
    pub fn new(spec: OracleSpec) -> Result<Self> {
        let current = GlnLearner::fresh(spec.gln.clone())?;
        Ok(Self {
            spec,
            current,
            current_task: None,
            registry: HashMap::new(),
        })
    }

    /// A task boundary. Oracle 1 ignores `task`.
    pub fn begin_task(&mut self, task: usize) -> Result<()> {
        match self.spec.variant {
            OracleVariant::Oracle1 => {
                self.current = GlnLearner::fresh(self.spec.gln.clone())?;
            }
            OracleVariant::Oracle2 => {
                if let Some(prev) = self.current_task {
                    self.registry.insert(prev, self.current.net.clone());
                }
                self.current = match self.registry.remove(&task) {
                    Some(net) => GlnLearner::new(net),
                    None => GlnLearner::fresh(self.spec.gln.clone())?,
                };
                self.current_task = Some(task);
            }
        }
        Ok(())
    }
}

impl OnlineLearner for OracleLearner {
    fn predict(&mut self, features: &[f64]) -> Result<f64> {
        self.current.predict(features)
    }

    fn observe(&mut self, label: bool) -> Result<()> {
        self.current.observe(label)
    }
}

/// Prequential run of an oracle, signalling every task boundary of `stream`.
pub fn oracle_run(spec: &OracleSpec, stream: &TaskStream, window: usize) -> Result<MetricLog> {
    let mut oracle = OracleLearner::new(spec.clone())?;
    let mut log = MetricLog::new(window);
    for (t, (meta, ex)) in stream.tagged().enumerate() {
        let start = Instant::now();
        if meta.step_in_task == 0 {
            oracle.begin_task(meta.task)?;
        }
        let p = oracle.predict(&ex.features)?;
        oracle.observe(ex.label)?;
        log.push(StepRecord {
            step: t as u64,
            task: meta.task,
            logloss: log_loss(p, ex.label),
            correct: decide(p) == ex.label,
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(log)
}
