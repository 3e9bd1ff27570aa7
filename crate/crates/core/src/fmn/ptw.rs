//! Partition Tree Weighting over a single base model, maintained
//! incrementally in `O(d)` time and space per symbol.

use alloc::vec;
use alloc::vec::Vec;

use super::BaseModel;
use crate::math::{expf, ln, log_add_exp, log_prob_of, LN_HALF};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Run<M> {
    start: u64,
    model: M,
    log_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ptw<M> {
    depth: u32,
    observed: u64,
    base: M,
    runs: Vec<Run<M>>,
    left: Vec<f64>,
    log_prob: f64,
}

impl<M: BaseModel> Ptw<M> {
    pub fn new(base: M, depth: u32) -> Result<Self> {
        if depth > super::MAX_DEPTH {
            return Err(Error::InvalidConfig(alloc::format!(
                "depth above {}",
                super::MAX_DEPTH
            )));
        }
        Ok(Self {
            depth,
            observed: 0,
            runs: vec![Run {
                start: 0,
                model: base.clone(),
                log_prob: 0.0,
            }],
            base,
            left: vec![0.0; depth as usize + 1],
            log_prob: 0.0,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    fn check_capacity(&self) -> Result<()> {
        let capacity = 1u64 << self.depth;
        if self.observed >= capacity {
            return Err(Error::CapacityExceeded {
                depth: self.depth,
                capacity,
            });
        }
        Ok(())
    }

    /// Root value given each run's node value; fills `out[j]` for level `j`.
    fn tree(&self, values: &[f64], out: &mut [f64]) -> f64 {
        let d = self.depth;
        let run_at = |j: u32| {
            let shift = d - j;
            let start = (self.observed >> shift) << shift;
            self.runs
                .iter()
                .position(|r| r.start == start)
                .expect("live run for every level")
        };
        let mut w = values[run_at(d)];
        out[d as usize] = w;
        for j in (0..d).rev() {
            w = log_add_exp(
                LN_HALF + values[run_at(j)],
                LN_HALF + self.left[j as usize] + w,
            );
            out[j as usize] = w;
        }
        w
    }

    fn root_after(&self, probs: &[f64], target: bool) -> f64 {
        let values: Vec<f64> = self
            .runs
            .iter()
            .zip(probs)
            .map(|(r, &p)| r.log_prob + log_prob_of(p, target))
            .collect();
        let mut scratch = vec![0.0; self.depth as usize + 1];
        self.tree(&values, &mut scratch)
    }

    pub fn predict(&self, input: &M::Input) -> Result<f64> {
        self.check_capacity()?;
        let probs: Vec<f64> = self.runs.iter().map(|r| r.model.predict(input)).collect();
        Ok(expf(self.root_after(&probs, true) - self.log_prob))
    }

    /// Observe `target`; returns the log-probability assigned to it.
    pub fn observe(&mut self, input: &M::Input, target: bool) -> Result<f64> {
        self.check_capacity()?;
        let d = self.depth;
        let probs: Vec<f64> = self.runs.iter().map(|r| r.model.predict(input)).collect();
        let p_target = expf(self.root_after(&probs, target) - self.log_prob);

        let t1 = self.observed + 1;
        let lowest_closing = d - t1.trailing_zeros().min(d);
        for (r, &p) in self.runs.iter_mut().zip(&probs) {
            r.log_prob += log_prob_of(p, target);
            r.model.learn(input, target, p);
        }
        let values: Vec<f64> = self.runs.iter().map(|r| r.log_prob).collect();
        let mut nodes = vec![0.0; d as usize + 1];
        self.log_prob = self.tree(&values, &mut nodes);

        let lc = lowest_closing as usize;
        if lc > 0 {
            self.left[lc - 1] = nodes[lc];
            let shift = d - (lowest_closing - 1);
            let keep = (self.observed >> shift) << shift;
            self.runs.retain(|r| r.start <= keep);
        } else {
            self.runs.clear();
        }
        for l in &mut self.left[lc..] {
            *l = 0.0;
        }
        self.observed = t1;
        if self.observed < 1u64 << d {
            self.runs.push(Run {
                start: self.observed,
                model: self.base.clone(),
                log_prob: 0.0,
            });
        }
        Ok(ln(p_target))
    }
}
