//! The predict-then-observe interface every evaluated model implements.

use nctl_core::{GlnConfig, GlnNetwork, NctlNetwork, NctlPrediction};

use crate::error::{NctlError, Result};

pub trait OnlineLearner: Send {
    /// Probability that the label of `features` is 1. The inputs are held
    /// until the matching [`OnlineLearner::observe`].
    fn predict(&mut self, features: &[f64]) -> Result<f64>;

    /// Learn the label of the most recently predicted example.
    fn observe(&mut self, label: bool) -> Result<()>;

    /// Most labels this learner can take, if bounded.
    fn capacity(&self) -> Option<u64> {
        None
    }
}

const NO_PREDICTION: &str = "observe without a preceding predict";

#[derive(Clone, Debug)]
pub struct NctlLearner {
    pub net: NctlNetwork,
    pending: Option<NctlPrediction>,
}

impl NctlLearner {
    pub fn new(net: NctlNetwork) -> Self {
        Self { net, pending: None }
    }
}

impl OnlineLearner for NctlLearner {
    fn predict(&mut self, features: &[f64]) -> Result<f64> {
        let p = self.net.predict(features)?;
        let out = p.output();
        self.pending = Some(p);
        Ok(out)
    }

    fn observe(&mut self, label: bool) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or(NctlError::Protocol(NO_PREDICTION))?;
        self.net.observe(p, label)?;
        Ok(())
    }

    fn capacity(&self) -> Option<u64> {
        (!self.net.config().bypass_fmn).then(|| self.net.config().fmn.stream_capacity())
    }
}

#[derive(Clone, Debug)]
pub struct GlnLearner {
    pub net: GlnNetwork,
    pending: Option<Vec<f64>>,
}

impl GlnLearner {
    pub fn new(net: GlnNetwork) -> Self {
        Self { net, pending: None }
    }

    pub fn fresh(config: GlnConfig) -> Result<Self> {
        Ok(Self::new(GlnNetwork::new(config)?))
    }
}

impl OnlineLearner for GlnLearner {
    fn predict(&mut self, features: &[f64]) -> Result<f64> {
        let p = self.net.predict(features)?.output;
        self.pending = Some(features.to_vec());
        Ok(p)
    }

    fn observe(&mut self, label: bool) -> Result<()> {
        let z = self
            .pending
            .take()
            .ok_or(NctlError::Protocol(NO_PREDICTION))?;
        self.net.update(&z, label)?;
        Ok(())
    }
}

/// Always predicts the same probability.
#[derive(Clone, Copy, Debug)]
pub struct ConstantLearner {
    pub p: f64,
    pending: bool,
}

impl ConstantLearner {
    pub fn new(p: f64) -> Self {
        Self { p, pending: false }
    }
}

impl OnlineLearner for ConstantLearner {
    fn predict(&mut self, _: &[f64]) -> Result<f64> {
        self.pending = true;
        Ok(self.p)
    }

    fn observe(&mut self, _: bool) -> Result<()> {
        if !std::mem::take(&mut self.pending) {
            return Err(NctlError::Protocol(NO_PREDICTION));
        }
        Ok(())
    }
}
