//! NCTL networks: a GLN in which every neuron's weight matrix is the base
//! model of a private Forget-Me-Not process. The process sees the neuron's
//! output stream and mixes over segmentations of time and over snapshots of
//! earlier weights, so each neuron can return to a previously useful
//! solution when the data distribution changes back.
//!
//! Gates are fixed at initialization and shared by every weight copy of a
//! neuron. With `bypass_fmn` set, each neuron keeps a single weight matrix
//! and the network computes exactly what a [`GlnNetwork`] with the same
//! configuration computes.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fmn::{BaseModel, Fmn, FmnConfig, FmnStats, Forecast};
use crate::gln::{
    base_predictions, initial_neurons, input_logits, layer_logits, Activations, EffectiveWeights,
    GlnConfig, GlnNetwork,
};
use crate::mixer::{GgmInput, GgmModel, GgmNeuron, GgmWeights, HalfspaceGate};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NctlConfig {
    pub gln: GlnConfig,
    pub fmn: FmnConfig,
    /// Skip the node processes; the network is then a plain GLN.
    #[serde(default)]
    pub bypass_fmn: bool,
}

impl NctlConfig {
    pub fn validate(&self) -> Result<()> {
        self.gln.validate()?;
        self.fmn.validate()
    }
}

/// What a neuron mixes with: a node process or a single weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeUnit {
    Fmn(Fmn<GgmModel>),
    Direct(GgmModel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NctlNeuron {
    pub(crate) gate: HalfspaceGate,
    pub(crate) unit: NodeUnit,
}

impl NctlNeuron {
    pub fn gate(&self) -> &HalfspaceGate {
        &self.gate
    }

    pub fn unit(&self) -> &NodeUnit {
        &self.unit
    }

    pub fn fmn(&self) -> Option<&Fmn<GgmModel>> {
        match &self.unit {
            NodeUnit::Fmn(f) => Some(f),
            NodeUnit::Direct(_) => None,
        }
    }

    /// Weights of the highest-posterior copy in the neuron's current segment.
    pub fn map_model(&self) -> &GgmModel {
        match &self.unit {
            NodeUnit::Fmn(f) => f.map_model(),
            NodeUnit::Direct(m) => m,
        }
    }

    fn map_neuron(&self, config: &GlnConfig) -> GgmNeuron {
        GgmNeuron {
            gate: self.gate.clone(),
            weights: self.map_model().weights.clone(),
            params: config.params,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Pending {
    Forecast(Forecast),
    Direct(f64),
}

#[derive(Clone, Debug, PartialEq)]
struct NeuronCache {
    input: GgmInput,
    pending: Pending,
}

/// A forward pass, to be handed back to [`NctlNetwork::observe`] with the
/// label. It pins the step it was computed at.
#[derive(Clone, Debug, PartialEq)]
pub struct NctlPrediction {
    step: u64,
    activations: Activations,
    cache: Vec<Vec<NeuronCache>>,
}

impl NctlPrediction {
    /// Probability that the label is 1.
    pub fn output(&self) -> f64 {
        self.activations.output
    }

    pub fn activations(&self) -> &Activations {
        &self.activations
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NctlNetwork {
    pub(crate) config: NctlConfig,
    pub(crate) layers: Vec<Vec<NctlNeuron>>,
    pub(crate) steps: u64,
}

impl NctlNetwork {
    /// Gates and initial weights come from `config.gln.seed` exactly as in
    /// [`GlnNetwork::new`].
    pub fn new(config: NctlConfig) -> Result<Self> {
        config.validate()?;
        let params = config.gln.params;
        let layers = initial_neurons(&config.gln)
            .into_iter()
            .map(|layer| {
                layer
                    .into_iter()
                    .map(|(gate, weights)| {
                        let model = GgmModel::new(weights, &params);
                        let unit = if config.bypass_fmn {
                            NodeUnit::Direct(model)
                        } else {
                            NodeUnit::Fmn(Fmn::new(model, config.fmn)?)
                        };
                        Ok(NctlNeuron { gate, unit })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            layers,
            steps: 0,
        })
    }

    pub fn config(&self) -> &NctlConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Vec<NctlNeuron>] {
        &self.layers
    }

    /// Labels observed so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn neurons(&self) -> impl Iterator<Item = &NctlNeuron> {
        self.layers.iter().flatten()
    }

    pub fn predict(&self, z: &[f64]) -> Result<NctlPrediction> {
        let gln = &self.config.gln;
        if z.len() != gln.input_dim {
            return Err(Error::DimensionMismatch {
                expected: gln.input_dim,
                actual: z.len(),
            });
        }
        let eps = gln.params.prob_clip;
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut cache = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let logits: Arc<[f64]> = if i == 0 {
                input_logits(z, eps, gln.bias).into()
            } else {
                layer_logits(&outputs[i - 1], eps, gln.bias).into()
            };
            let mut out = Vec::with_capacity(layer.len());
            let mut layer_cache = Vec::with_capacity(layer.len());
            for n in layer {
                let input = GgmInput {
                    logits: logits.clone(),
                    context: n.gate.context_of(z)?,
                };
                let pending = match &n.unit {
                    NodeUnit::Fmn(f) => {
                        let forecast = f.forecast(&input)?;
                        out.push(forecast.probability());
                        Pending::Forecast(forecast)
                    }
                    NodeUnit::Direct(m) => {
                        let p = m.weights.predict(input.context, &input.logits);
                        out.push(p);
                        Pending::Direct(p)
                    }
                };
                layer_cache.push(NeuronCache { input, pending });
            }
            outputs.push(out);
            cache.push(layer_cache);
        }
        Ok(NctlPrediction {
            step: self.steps,
            activations: Activations {
                base: base_predictions(z, eps, false),
                output: outputs.last().unwrap()[0],
                layers: outputs,
            },
            cache,
        })
    }

    /// Learn from `target` using the forward pass in `prediction`, which must
    /// come from [`NctlNetwork::predict`] at the current step. Every neuron
    /// updates from that pass. Returns the predicted probability of 1.
    pub fn observe(&mut self, prediction: NctlPrediction, target: bool) -> Result<f64> {
        if prediction.step != self.steps {
            return Err(Error::Protocol("prediction was made at a different step"));
        }
        let shape_ok = prediction.cache.len() == self.layers.len()
            && prediction
                .cache
                .iter()
                .zip(&self.layers)
                .all(|(c, l)| c.len() == l.len());
        if !shape_ok {
            return Err(Error::Protocol("prediction belongs to a different network"));
        }
        for (layer, cache) in self.layers.iter_mut().zip(prediction.cache) {
            for (n, c) in layer.iter_mut().zip(cache) {
                match (&mut n.unit, c.pending) {
                    (NodeUnit::Fmn(f), Pending::Forecast(fc)) => {
                        f.observe_with(fc, &c.input, target)?;
                    }
                    (NodeUnit::Direct(m), Pending::Direct(p)) => m.learn(&c.input, target, p),
                    _ => return Err(Error::Protocol("prediction belongs to a different network")),
                }
            }
        }
        self.steps += 1;
        Ok(prediction.activations.output)
    }

    /// Predict, then learn from `target`. Returns the pre-update prediction.
    pub fn learn(&mut self, z: &[f64], target: bool) -> Result<f64> {
        let p = self.predict(z)?;
        self.observe(p, target)
    }

    /// A GLN built from every neuron's MAP weights and its gate.
    pub fn map_network(&self) -> GlnNetwork {
        let layers = self
            .layers
            .iter()
            .map(|l| l.iter().map(|n| n.map_neuron(&self.config.gln)).collect())
            .collect();
        GlnNetwork::from_neurons(self.config.gln.clone(), layers)
            .expect("neurons were built from this configuration")
    }

    /// Effective weights of the MAP network at `z`.
    pub fn saliency(&self, z: &[f64]) -> Result<EffectiveWeights> {
        self.map_network().effective_weights(z)
    }

    /// Work counters of every node process, layer by layer.
    pub fn fmn_stats(&self) -> Vec<FmnStats> {
        self.neurons()
            .filter_map(|n| n.fmn().map(|f| *f.stats()))
            .collect()
    }
}

fn check_same_topology(nets: &[&NctlNetwork]) -> Result<()> {
    let first = nets
        .first()
        .ok_or_else(|| Error::TopologyMismatch("no networks given".into()))?;
    let g = &first.config.gln;
    for (i, n) in nets.iter().enumerate().skip(1) {
        let h = &n.config.gln;
        if h.input_dim != g.input_dim
            || h.layers != g.layers
            || h.context_bits != g.context_bits
            || h.bias != g.bias
        {
            return Err(Error::TopologyMismatch(format!(
                "network {i} differs in shape from network 0"
            )));
        }
    }
    Ok(())
}

/// Sample a GLN by picking, at every neuron position independently and
/// uniformly, the MAP neuron (gate and weights) of one of `nets`.
pub fn local_ensemble_sample<R: Rng + ?Sized>(
    nets: &[&NctlNetwork],
    rng: &mut R,
) -> Result<GlnNetwork> {
    check_same_topology(nets)?;
    let config = nets[0].config.gln.clone();
    let layers = (0..nets[0].layers.len())
        .map(|i| {
            (0..nets[0].layers[i].len())
                .map(|j| {
                    let k = rng.random_range(0..nets.len());
                    nets[k].layers[i][j].map_neuron(&config)
                })
                .collect()
        })
        .collect();
    GlnNetwork::from_neurons(config, layers)
}

/// Average the MAP weights of `nets` position by position. All networks
/// must share their gates (same seed and shape).
pub fn local_ensemble_average(nets: &[&NctlNetwork]) -> Result<GlnNetwork> {
    check_same_topology(nets)?;
    let config = nets[0].config.gln.clone();
    let scale = 1.0 / nets.len() as f64;
    let mut layers = Vec::with_capacity(nets[0].layers.len());
    for (i, layer) in nets[0].layers.iter().enumerate() {
        let mut out = Vec::with_capacity(layer.len());
        for (j, n0) in layer.iter().enumerate() {
            if nets.iter().any(|n| n.layers[i][j].gate != n0.gate) {
                return Err(Error::TopologyMismatch(format!(
                    "neuron {j} of layer {i} has different gates across networks"
                )));
            }
            let w0 = &n0.map_model().weights;
            let rows = (0..w0.contexts())
                .map(|c| {
                    let mut row = alloc::vec![0.0; w0.fan_in()];
                    for n in nets {
                        for (acc, w) in row
                            .iter_mut()
                            .zip(n.layers[i][j].map_model().weights.row(c))
                        {
                            *acc += scale * w;
                        }
                    }
                    row
                })
                .collect();
            out.push(GgmNeuron {
                gate: n0.gate.clone(),
                weights: GgmWeights::from_rows(rows)?,
                params: config.params,
            });
        }
        layers.push(out);
    }
    GlnNetwork::from_neurons(config, layers)
}
