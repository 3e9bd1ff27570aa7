//! Online continual learning with gated geometric mixing networks whose
//! neurons are wrapped in Forget-Me-Not processes.
//!
//! The crate is `no_std` (it needs `alloc`). It contains the learning
//! machinery only:
//!
//! - [`mixer`]: geometric mixing, halfspace gating and the gated geometric
//!   mixer neuron with its online gradient step.
//! - [`gln`]: layered networks of mixer neurons and the multilinear
//!   effective-weight collapse used for saliency maps.
//! - [`fmn`]: Partition Tree Weighting and the Forget-Me-Not process over an
//!   arbitrary adaptive base model, plus batch reference recursions.
//! - [`nctl`]: networks in which every neuron's mixer output stream is the
//!   base measure of a private Forget-Me-Not process.
//!
//! Dataset loading, evaluation protocols and file formats live in the
//! companion `nctl` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub mod fmn;
pub mod gln;
pub mod math;
pub mod mixer;
pub mod nctl;
pub mod serde_f64;
pub mod state;

pub use error::Error;
pub use fmn::{BaseModel, Fmn, FmnConfig, Forecast, KtModel, ModelPool, Ptw};
pub use gln::{Activations, EffectiveWeights, GlnConfig, GlnNetwork, LayerSpec};
pub use mixer::{GgmInput, GgmModel, GgmNeuron, GgmParams, GgmWeights, HalfspaceGate, ProbVector};
pub use nctl::{
    local_ensemble_average, local_ensemble_sample, NctlConfig, NctlNetwork, NctlPrediction,
};

pub type Result<T> = core::result::Result<T, Error>;
