//! Gated linear networks: layers of GGM neurons sharing one side-information
//! vector. Every neuron predicts the target directly and learns from its own
//! log loss, so an update is a set of independent local steps.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{clip_prob, logit, sigmoid};
use crate::mixer::{GgmNeuron, GgmParams, GgmWeights, HalfspaceGate, MAX_CONTEXT_BITS};
use crate::{Error, Result};

/// Neurons per layer. The top layer holds exactly one neuron.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidConfig(
                "a network needs at least one layer".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig(
                "every layer needs at least one neuron".into(),
            ));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(
                "the top layer must hold exactly one neuron".into(),
            ));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// Architecture and learning hyperparameters of a GLN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlnConfig {
    pub input_dim: usize,
    pub layers: LayerSpec,
    /// Hyperplanes per neuron, one entry per layer.
    pub context_bits: Vec<u32>,
    pub params: GgmParams,
    /// Append the constant probability `σ(1)` to every layer's inputs.
    pub bias: bool,
    pub seed: u64,
}

impl GlnConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig(
                "input dimension must be positive".into(),
            ));
        }
        if self.context_bits.len() != self.layers.len() {
            return Err(Error::InvalidConfig(format!(
                "{} context-bit entries for {} layers",
                self.context_bits.len(),
                self.layers.len()
            )));
        }
        if self.context_bits.iter().any(|&b| b > MAX_CONTEXT_BITS) {
            return Err(Error::InvalidConfig(format!(
                "context bits above {MAX_CONTEXT_BITS}"
            )));
        }
        Ok(())
    }

    /// Inputs seen by each neuron of `layer`, bias included.
    pub fn fan_in(&self, layer: usize) -> usize {
        let prev = if layer == 0 {
            self.input_dim
        } else {
            self.layers.sizes()[layer - 1]
        };
        prev + usize::from(self.bias)
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.sizes().iter().sum()
    }
}

/// Fresh gates and uniform weights for every neuron, drawn from `config.seed`.
/// GLNs and NCTL networks built from equal configurations get equal gates.
pub(crate) fn initial_neurons(config: &GlnConfig) -> Vec<Vec<(HalfspaceGate, GgmWeights)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    config
        .layers
        .sizes()
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            (0..size)
                .map(|_| {
                    let gate =
                        HalfspaceGate::random(config.context_bits[i], config.input_dim, &mut rng);
                    let weights = GgmWeights::uniform(gate.contexts(), config.fan_in(i));
                    (gate, weights)
                })
                .collect()
        })
        .collect()
}

/// Logit of the constant bias input `σ(1)` after clipping.
pub fn bias_logit(eps: f64) -> f64 {
    logit(clip_prob(sigmoid(1.0), eps))
}

/// Layer-0 probabilities `clip(σ(z))`, followed by the bias entry when enabled.
pub fn base_predictions(z: &[f64], eps: f64, bias: bool) -> Vec<f64> {
    let mut p: Vec<f64> = z.iter().map(|&x| clip_prob(sigmoid(x), eps)).collect();
    if bias {
        p.push(clip_prob(sigmoid(1.0), eps));
    }
    p
}

/// Logits of clipped probabilities plus the bias logit.
pub(crate) fn layer_logits(probs: &[f64], eps: f64, bias: bool) -> Vec<f64> {
    let mut l: Vec<f64> = probs.iter().map(|&p| logit(clip_prob(p, eps))).collect();
    if bias {
        l.push(bias_logit(eps));
    }
    l
}

/// Layer-0 logits for side information `z`.
pub(crate) fn input_logits(z: &[f64], eps: f64, bias: bool) -> Vec<f64> {
    let mut l: Vec<f64> = z
        .iter()
        .map(|&x| logit(clip_prob(sigmoid(x), eps)))
        .collect();
    if bias {
        l.push(bias_logit(eps));
    }
    l
}

/// Everything a forward pass produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    /// Clipped base predictions `σ(z)` (bias excluded).
    pub base: Vec<f64>,
    /// Per layer, each neuron's output probability before clipping.
    pub layers: Vec<Vec<f64>>,
    pub output: f64,
}

impl Activations {
    /// True when any base prediction or neuron output sits outside
    /// `(eps, 1 - eps)`, i.e. clipping changed a value fed forward.
    pub fn clipping_active(&self, eps: f64) -> bool {
        let outside = |p: f64| p <= eps || p >= 1.0 - eps;
        self.base.iter().copied().any(outside)
            || self.layers[..self.layers.len().saturating_sub(1)]
                .iter()
                .flatten()
                .copied()
                .any(outside)
    }
}

/// Saliency: the output logit as an affine function of `z` with every
/// context frozen at its value for one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveWeights {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl EffectiveWeights {
    pub fn logit(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn probability(&self, z: &[f64]) -> f64 {
        sigmoid(self.logit(z))
    }
}

/// Contexts, input logits and outputs of one forward pass.
pub(crate) struct Forward {
    pub contexts: Vec<Vec<usize>>,
    pub logits: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlnNetwork {
    config: GlnConfig,
    layers: Vec<Vec<GgmNeuron>>,
}

impl GlnNetwork {
    pub fn new(config: GlnConfig) -> Result<Self> {
        config.validate()?;
        let layers = initial_neurons(&config)
            .into_iter()
            .map(|layer| {
                layer
                    .into_iter()
                    .map(|(gate, weights)| GgmNeuron {
                        gate,
                        weights,
                        params: config.params,
                    })
                    .collect()
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// Assemble a network from explicit neurons; shapes are checked against `config`.
    pub fn from_neurons(config: GlnConfig, layers: Vec<Vec<GgmNeuron>>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.layers.len() {
            return Err(Error::TopologyMismatch(format!(
                "{} layers given, config has {}",
                layers.len(),
                config.layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.len() != config.layers.sizes()[i] {
                return Err(Error::TopologyMismatch(format!(
                    "layer {i} has the wrong width"
                )));
            }
            for n in layer {
                if n.fan_in() != config.fan_in(i) || n.gate.dim() != config.input_dim {
                    return Err(Error::TopologyMismatch(format!(
                        "neuron shape in layer {i}"
                    )));
                }
                if n.gate.contexts() != n.weights.contexts() {
                    return Err(Error::TopologyMismatch("gate/weight context count".into()));
                }
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &GlnConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Vec<GgmNeuron>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vec<GgmNeuron>] {
        &mut self.layers
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                actual: z.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward(&self, z: &[f64]) -> Result<Forward> {
        self.check_input(z)?;
        let eps = self.config.params.prob_clip;
        let bias = self.config.bias;
        let mut logits = Vec::with_capacity(self.layers.len());
        let mut contexts = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 {
                input_logits(z, eps, bias)
            } else {
                layer_logits(&outputs[i - 1], eps, bias)
            };
            let mut ctx = Vec::with_capacity(layer.len());
            let mut out = Vec::with_capacity(layer.len());
            for n in layer {
                let c = n.gate.context_of(z)?;
                out.push(n.weights.predict(c, &input));
                ctx.push(c);
            }
            logits.push(input);
            contexts.push(ctx);
            outputs.push(out);
        }
        Ok(Forward {
            contexts,
            logits,
            outputs,
        })
    }

    pub fn predict(&self, z: &[f64]) -> Result<Activations> {
        let f = self.forward(z)?;
        let eps = self.config.params.prob_clip;
        Ok(Activations {
            base: base_predictions(z, eps, false),
            output: f.outputs.last().unwrap()[0],
            layers: f.outputs,
        })
    }

    /// Update every neuron once, all from the same pre-update forward pass.
    /// Returns the pre-update output probability.
    pub fn update(&mut self, z: &[f64], target: bool) -> Result<f64> {
        let f = self.forward(z)?;
        let params = self.config.params;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (j, n) in layer.iter_mut().enumerate() {
                n.weights.apply_gradient(
                    f.contexts[i][j],
                    &f.logits[i],
                    f.outputs[i][j],
                    target,
                    params.learning_rate,
                    params.weight_bound,
                );
            }
        }
        Ok(f.outputs.last().unwrap()[0])
    }

    /// Collapse the network at `z` into one affine map of `z`.
    ///
    /// Exact whenever no intermediate probability is clipped.
    pub fn effective_weights(&self, z: &[f64]) -> Result<EffectiveWeights> {
        self.check_input(z)?;
        let k0 = self.config.input_dim;
        let beta = bias_logit(self.config.params.prob_clip);
        let bias = self.config.bias;
        // per neuron of the previous layer: (coefficients over z, constant)
        let mut prev: Vec<(Vec<f64>, f64)> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut cur = Vec::with_capacity(layer.len());
            for n in layer {
                let row = n.weights.row(n.gate.context_of(z)?);
                let (mut coef, mut konst) = if i == 0 {
                    (row[..k0].to_vec(), 0.0)
                } else {
                    let mut coef = alloc::vec![0.0; k0];
                    let mut konst = 0.0;
                    for (w, (c, b)) in row.iter().zip(&prev) {
                        for (acc, x) in coef.iter_mut().zip(c) {
                            *acc += w * x;
                        }
                        konst += w * b;
                    }
                    (coef, konst)
                };
                if bias {
                    konst += row[row.len() - 1] * beta;
                }
                coef.shrink_to_fit();
                cur.push((coef, konst));
            }
            prev = cur;
        }
        let (weights, bias) = prev.pop().unwrap();
        Ok(EffectiveWeights { weights, bias })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_prob_of;
    use crate::mixer::ProbVector;
    use alloc::vec;
    use rand::Rng;

    fn config(input_dim: usize, layers: Vec<usize>, bits: u32, lr: f64, bias: bool) -> GlnConfig {
        let n = layers.len();
        GlnConfig {
            input_dim,
            layers: LayerSpec::new(layers).unwrap(),
            context_bits: vec![bits; n],
            params: GgmParams::new(lr),
            bias,
            seed: 3,
        }
    }

    fn set_all_weights(net: &mut GlnNetwork, value: f64) {
        for layer in net.layers_mut() {
            for n in layer.iter_mut() {
                let rows = vec![vec![value; n.fan_in()]; n.weights.contexts()];
                n.weights = GgmWeights::from_rows(rows).unwrap();
            }
        }
    }

    #[test]
    fn layer_spec_validation() {
        assert!(LayerSpec::new(vec![]).is_err());
        assert!(LayerSpec::new(vec![3, 0, 1]).is_err());
        assert!(LayerSpec::new(vec![3, 2]).is_err());
        assert!(LayerSpec::new(vec![50, 25, 1]).is_ok());
    }

    #[test]
    fn base_prediction_examples() {
        assert_eq!(base_predictions(&[0.0, 0.0], 0.01, false), vec![0.5, 0.5]);
        let p = base_predictions(&[4f64.ln(), 50.0], 0.01, false);
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert_eq!(p[1], 0.99);
        let p = base_predictions(&[0.0], 0.01, true);
        assert!((p[1] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn single_neuron_logit_cancellation() {
        let mut net = GlnNetwork::new(config(1, vec![1], 0, 0.1, true)).unwrap();
        net.layers_mut()[0][0].weights = GgmWeights::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let out = net.predict(&[0.3]).unwrap().output;
        assert!((out - sigmoid(0.3)).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_predict_half() {
        let mut net = GlnNetwork::new(config(4, vec![3, 2, 1], 2, 0.1, true)).unwrap();
        set_all_weights(&mut net, 0.0);
        assert_eq!(net.predict(&[0.3, -1.0, 2.0, 0.1]).unwrap().output, 0.5);
        let ew = net.effective_weights(&[0.3, -1.0, 2.0, 0.1]).unwrap();
        assert_eq!(ew.weights, vec![0.0; 4]);
        assert_eq!(ew.bias, 0.0);
    }

    #[test]
    fn two_layer_toy_net_matches_direct_formula() {
        let mut net = GlnNetwork::new(config(2, vec![2, 1], 0, 0.1, false)).unwrap();
        let w1 = [[0.5, -1.0], [1.5, 0.25]];
        let w2 = [0.7, -0.4];
        net.layers_mut()[0][0].weights = GgmWeights::from_rows(vec![w1[0].to_vec()]).unwrap();
        net.layers_mut()[0][1].weights = GgmWeights::from_rows(vec![w1[1].to_vec()]).unwrap();
        net.layers_mut()[1][0].weights = GgmWeights::from_rows(vec![w2.to_vec()]).unwrap();
        let z = [0.4, -0.3];
        let h: Vec<f64> = w1
            .iter()
            .map(|r| 1.0 / (1.0 + (-(r[0] * z[0] + r[1] * z[1])).exp()))
            .collect();
        let l: f64 = w2
            .iter()
            .zip(&h)
            .map(|(w, p)| w * (p / (1.0 - p)).ln())
            .sum();
        let expected = 1.0 / (1.0 + (-l).exp());
        assert!((net.predict(&z).unwrap().output - expected).abs() < 1e-12);
    }

    #[test]
    fn single_neuron_update_matches_ggm_update() {
        let cfg = config(3, vec![1], 2, 0.05, true);
        let mut net = GlnNetwork::new(cfg.clone()).unwrap();
        let mut neuron = net.layers()[0][0].clone();
        let z = [0.2, -0.7, 1.1];
        for &x in &[true, false, true, true] {
            net.update(&z, x).unwrap();
            let p = ProbVector::new(&base_predictions(&z, 0.01, true), 0.01);
            neuron.update(&p, &z, x).unwrap();
            assert_eq!(net.layers()[0][0], neuron);
        }
    }

    #[test]
    fn repeated_example_loss_is_monotone() {
        let mut net = GlnNetwork::new(config(5, vec![4, 2, 1], 2, 0.01, true)).unwrap();
        let z = [0.5, -0.2, 1.0, 0.0, -1.3];
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let loss = -log_prob_of(net.predict(&z).unwrap().output, true);
            assert!(loss <= last + 1e-15);
            last = loss;
            net.update(&z, true).unwrap();
        }
    }

    #[test]
    fn update_changes_one_row_per_neuron() {
        let mut net = GlnNetwork::new(config(6, vec![3, 2, 1], 3, 0.1, true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let z: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            net.update(&z, rng.random()).unwrap();
        }
        let before = net.clone();
        let z: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        net.update(&z, true).unwrap();
        for (la, lb) in net.layers().iter().zip(before.layers()) {
            for (a, b) in la.iter().zip(lb) {
                let c = a.gate.context_of(&z).unwrap();
                for r in 0..a.weights.contexts() {
                    if r != c {
                        assert_eq!(a.weights.row(r), b.weights.row(r));
                    }
                }
            }
        }
    }

    #[test]
    fn effective_weights_one_hot() {
        let mut net = GlnNetwork::new(config(3, vec![1], 0, 0.1, false)).unwrap();
        net.layers_mut()[0][0].weights = GgmWeights::from_rows(vec![vec![0.0, 1.0, 0.0]]).unwrap();
        let ew = net.effective_weights(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(ew.weights, vec![0.0, 1.0, 0.0]);
        assert_eq!(ew.bias, 0.0);
    }

    #[test]
    fn effective_weights_reproduce_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for trial in 0..200 {
            let mut cfg = config(4, vec![3, 2, 1], 2, 0.1, trial % 2 == 0);
            cfg.seed = trial;
            let mut net = GlnNetwork::new(cfg).unwrap();
            for layer in net.layers_mut() {
                for n in layer.iter_mut() {
                    let rows = (0..n.weights.contexts())
                        .map(|_| {
                            (0..n.fan_in())
                                .map(|_| rng.random_range(-0.6..0.6))
                                .collect()
                        })
                        .collect();
                    n.weights = GgmWeights::from_rows(rows).unwrap();
                }
            }
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let act = net.predict(&z).unwrap();
            if act.clipping_active(0.01) {
                continue;
            }
            let ew = net.effective_weights(&z).unwrap();
            assert!((ew.probability(&z) - act.output).abs() < 1e-9);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn same_seed_same_network() {
        let a = GlnNetwork::new(config(8, vec![4, 1], 3, 0.1, true)).unwrap();
        let b = GlnNetwork::new(config(8, vec![4, 1], 3, 0.1, true)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = GlnNetwork::new(config(3, vec![1], 1, 0.1, true)).unwrap();
        assert!(matches!(
            net.predict(&[0.0; 4]),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 4
            })
        ));
    }
}
