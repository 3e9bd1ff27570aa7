//! Geometric mixing, halfspace gating and the gated geometric mixer (GGM).
//!
//! A GGM holds one weight row per context. Side information selects the row
//! through a [`HalfspaceGate`]; the row then mixes the input probabilities in
//! logit space. Learning is online gradient descent on log loss, projected
//! back into the box `[-b, b]`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::fmn::BaseModel;
use crate::math::{clip_prob, logit, sigmoid};
use crate::{Error, Result};

pub const DEFAULT_PROB_CLIP: f64 = 0.01;
pub const DEFAULT_WEIGHT_BOUND: f64 = 10.0;
/// Largest supported number of gating hyperplanes per neuron.
pub const MAX_CONTEXT_BITS: u32 = 24;
/// Smallest probability a [`GgmModel`] reports for either symbol.
pub const MODEL_PROB_FLOOR: f64 = 1e-12;

/// Probabilities clipped to `[eps, 1 - eps]`, ready for mixing.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector {
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: &[f64], eps: f64) -> Self {
        Self {
            values: probs.iter().map(|&p| clip_prob(p, eps)).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn logits(&self) -> Vec<f64> {
        self.values.iter().map(|&p| logit(p)).collect()
    }
}

/// `σ(w · σ⁻¹(p))`.
pub fn geometric_mix(weights: &[f64], probs: &ProbVector) -> Result<f64> {
    if weights.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            actual: probs.len(),
        });
    }
    let z: f64 = weights
        .iter()
        .zip(probs.as_slice())
        .map(|(w, &p)| w * logit(p))
        .sum();
    Ok(sigmoid(z))
}

/// Context function built from `B` hyperplanes over the side-information
/// space. Bit `j` of the context id is set when `<v_j, z> >= b_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceGate {
    dim: usize,
    /// `bits × dim`, row-major, each row unit length.
    normals: Vec<f64>,
    offsets: Vec<f64>,
}

impl HalfspaceGate {
    /// Build a gate from explicit hyperplanes. Normals are rescaled to unit
    /// length; a zero normal is rejected.
    pub fn new(normals: &[Vec<f64>], offsets: &[f64]) -> Result<Self> {
        if normals.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: normals.len(),
                actual: offsets.len(),
            });
        }
        if normals.len() as u32 > MAX_CONTEXT_BITS {
            return Err(Error::InvalidConfig(alloc::format!(
                "at most {MAX_CONTEXT_BITS} hyperplanes per gate"
            )));
        }
        let dim = normals.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(normals.len() * dim);
        for v in normals {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::InvalidConfig(
                    "gate normal must be non-zero and finite".into(),
                ));
            }
            flat.extend(v.iter().map(|x| x / norm));
        }
        Ok(Self {
            dim,
            normals: flat,
            offsets: offsets.to_vec(),
        })
    }

    /// `bits` hyperplanes with spherically distributed unit normals through the origin.
    pub fn random<R: Rng + ?Sized>(bits: u32, dim: usize, rng: &mut R) -> Self {
        assert!(bits <= MAX_CONTEXT_BITS, "too many context bits");
        let mut normals = Vec::with_capacity(bits as usize * dim);
        for _ in 0..bits {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
                if norm > 0.0 {
                    normals.extend(v.iter().map(|x| x / norm));
                    break;
                }
            }
        }
        Self {
            dim,
            normals,
            offsets: vec![0.0; bits as usize],
        }
    }

    pub fn bits(&self) -> u32 {
        self.offsets.len() as u32
    }

    pub fn contexts(&self) -> usize {
        1usize << self.bits()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normal(&self, j: usize) -> &[f64] {
        &self.normals[j * self.dim..(j + 1) * self.dim]
    }

    pub fn offset(&self, j: usize) -> f64 {
        self.offsets[j]
    }

    pub fn context_of(&self, z: &[f64]) -> Result<usize> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: z.len(),
            });
        }
        let mut id = 0usize;
        for j in 0..self.offsets.len() {
            let proj: f64 = self.normal(j).iter().zip(z).map(|(v, x)| v * x).sum();
            if proj >= self.offsets[j] {
                id |= 1 << j;
            }
        }
        Ok(id)
    }
}

/// Learning hyperparameters shared by every neuron of a network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgmParams {
    pub learning_rate: f64,
    pub weight_bound: f64,
    pub prob_clip: f64,
}

impl GgmParams {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            weight_bound: DEFAULT_WEIGHT_BOUND,
            prob_clip: DEFAULT_PROB_CLIP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if !(self.weight_bound > 0.0) {
            return Err(Error::InvalidConfig("weight bound must be positive".into()));
        }
        if !(self.prob_clip > 0.0 && self.prob_clip < 0.5) {
            return Err(Error::InvalidConfig(
                "probability clip must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

/// The `C × K` weight matrix of a GGM.
///
/// Rows are reference counted and copied on write, so snapshots of a neuron
/// share every row that has not been updated since the snapshot was taken.
#[derive(Clone, Debug)]
pub struct GgmWeights {
    fan_in: usize,
    rows: Vec<Arc<Vec<f64>>>,
}

impl PartialEq for GgmWeights {
    fn eq(&self, other: &Self) -> bool {
        self.fan_in == other.fan_in
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| Arc::ptr_eq(a, b) || a == b)
    }
}

impl GgmWeights {
    /// Every row set to `1/K`: the neuron starts as the geometric average of its inputs.
    pub fn uniform(contexts: usize, fan_in: usize) -> Self {
        let row = Arc::new(vec![1.0 / fan_in as f64; fan_in]);
        Self {
            fan_in,
            rows: vec![row; contexts],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let fan_in = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != fan_in) {
            return Err(Error::DimensionMismatch {
                expected: fan_in,
                actual: bad.len(),
            });
        }
        Ok(Self {
            fan_in,
            rows: rows.into_iter().map(Arc::new).collect(),
        })
    }

    pub(crate) fn from_shared_rows(fan_in: usize, rows: Vec<Arc<Vec<f64>>>) -> Self {
        Self { fan_in, rows }
    }

    pub(crate) fn shared_rows(&self) -> &[Arc<Vec<f64>>] {
        &self.rows
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn contexts(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, context: usize) -> &[f64] {
        &self.rows[context]
    }

    /// Whether row `context` is the same allocation in both matrices.
    pub fn shares_row(&self, other: &Self, context: usize) -> bool {
        Arc::ptr_eq(&self.rows[context], &other.rows[context])
    }

    /// Mixed logit `w_c · logits`.
    #[inline]
    pub fn mixed_logit(&self, context: usize, logits: &[f64]) -> f64 {
        self.rows[context]
            .iter()
            .zip(logits)
            .map(|(w, l)| w * l)
            .sum()
    }

    #[inline]
    pub fn predict(&self, context: usize, logits: &[f64]) -> f64 {
        sigmoid(self.mixed_logit(context, logits))
    }

    /// One projected gradient step on row `context`; `predicted` must be the
    /// output of [`GgmWeights::predict`] for the same inputs.
    pub fn apply_gradient(
        &mut self,
        context: usize,
        logits: &[f64],
        predicted: f64,
        target: bool,
        learning_rate: f64,
        bound: f64,
    ) {
        let err = predicted - if target { 1.0 } else { 0.0 };
        if err == 0.0 {
            return;
        }
        let scale = learning_rate * err;
        let row = Arc::make_mut(&mut self.rows[context]);
        for (w, l) in row.iter_mut().zip(logits) {
            *w = (*w - scale * l).clamp(-bound, bound);
        }
    }
}

/// Inputs to a GGM once side information has been resolved to a context.
#[derive(Clone, Debug, PartialEq)]
pub struct GgmInput {
    pub logits: Arc<[f64]>,
    pub context: usize,
}

/// A GGM weight matrix together with its learning rule, usable as the base
/// model of a Forget-Me-Not process. The gate lives with the owning neuron so
/// that snapshots stay cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct GgmModel {
    pub weights: GgmWeights,
    pub learning_rate: f64,
    pub weight_bound: f64,
}

impl GgmModel {
    pub fn new(weights: GgmWeights, params: &GgmParams) -> Self {
        Self {
            weights,
            learning_rate: params.learning_rate,
            weight_bound: params.weight_bound,
        }
    }
}

impl BaseModel for GgmModel {
    type Input = GgmInput;

    /// Kept strictly inside (0, 1) so a saturated mixer cannot send a
    /// process's log-probability to `-inf`.
    #[inline]
    fn predict(&self, input: &GgmInput) -> f64 {
        clip_prob(
            self.weights.predict(input.context, &input.logits),
            MODEL_PROB_FLOOR,
        )
    }

    /// The address of the active row. Copies of one process share learning
    /// parameters, so the row alone decides prediction and update.
    fn share_key(&self, input: &GgmInput) -> Option<usize> {
        Some(Arc::as_ptr(&self.weights.rows[input.context]) as usize)
    }

    fn adopt(&mut self, learned: &Self, input: &GgmInput) {
        self.weights.rows[input.context] = learned.weights.rows[input.context].clone();
    }

    #[inline]
    fn learn(&mut self, input: &GgmInput, target: bool, predicted: f64) {
        self.weights.apply_gradient(
            input.context,
            &input.logits,
            predicted,
            target,
            self.learning_rate,
            self.weight_bound,
        );
    }
}

/// Gated geometric mixer: a gate, a weight matrix and its learning parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GgmNeuron {
    pub gate: HalfspaceGate,
    pub weights: GgmWeights,
    pub params: GgmParams,
}

impl GgmNeuron {
    pub fn new(gate: HalfspaceGate, fan_in: usize, params: GgmParams) -> Self {
        let weights = GgmWeights::uniform(gate.contexts(), fan_in);
        Self {
            gate,
            weights,
            params,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.fan_in()
    }

    fn check_fan_in(&self, p: &ProbVector) -> Result<()> {
        if p.len() != self.fan_in() {
            return Err(Error::DimensionMismatch {
                expected: self.fan_in(),
                actual: p.len(),
            });
        }
        Ok(())
    }

    /// `σ(w_{c(z)} · σ⁻¹(p))`; does not change the neuron.
    pub fn predict(&self, p: &ProbVector, z: &[f64]) -> Result<f64> {
        self.check_fan_in(p)?;
        let c = self.gate.context_of(z)?;
        geometric_mix(self.weights.row(c), p)
    }

    /// One online gradient step on log loss for target `x`. Only row `c(z)` moves.
    pub fn update(&mut self, p: &ProbVector, z: &[f64], target: bool) -> Result<()> {
        self.check_fan_in(p)?;
        let c = self.gate.context_of(z)?;
        let logits = p.logits();
        let q = self.weights.predict(c, &logits);
        self.weights.apply_gradient(
            c,
            &logits,
            q,
            target,
            self.params.learning_rate,
            self.params.weight_bound,
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_prob_of;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(p: &[f64]) -> ProbVector {
        ProbVector::new(p, DEFAULT_PROB_CLIP)
    }

    fn single_context_neuron(row: Vec<f64>, lr: f64) -> GgmNeuron {
        let gate = HalfspaceGate::new(&[], &[]).unwrap();
        GgmNeuron {
            gate,
            weights: GgmWeights::from_rows(vec![row]).unwrap(),
            params: GgmParams::new(lr),
        }
    }

    #[test]
    fn geometric_mix_examples() {
        let p = pv(&[0.3, 0.7, 0.9]);
        let q = geometric_mix(&[0.0, 0.0, 1.0], &p).unwrap();
        assert!((q - 0.9).abs() < 1e-12);
        assert_eq!(geometric_mix(&[0.0; 3], &p).unwrap(), 0.5);
        // product-of-odds oracle
        let oracle = (0.8 * 0.6) / (0.8 * 0.6 + 0.2 * 0.4);
        let q = geometric_mix(&[1.0, 1.0], &pv(&[0.8, 0.6])).unwrap();
        assert!((q - oracle).abs() < 1e-12);
        assert!((q - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_mix_rejects_mismatched_lengths() {
        assert_eq!(
            geometric_mix(&[1.0], &pv(&[0.5, 0.5])),
            Err(Error::DimensionMismatch {
                expected: 1,
                actual: 2
            })
        );
    }

    #[test]
    fn context_examples() {
        let g = HalfspaceGate::new(&[vec![1.0, 0.0]], &[0.0]).unwrap();
        assert_eq!(g.context_of(&[2.0, -1.0]).unwrap(), 1);
        assert_eq!(g.context_of(&[-2.0, 3.0]).unwrap(), 0);
        let g2 = HalfspaceGate::new(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(g2.context_of(&[1.0, -1.0]).unwrap(), 1);
        assert_eq!(g2.contexts(), 4);
        assert!(g2.context_of(&[1.0]).is_err());
    }

    #[test]
    fn random_gate_has_unit_normals_and_zero_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = HalfspaceGate::random(4, 9, &mut rng);
        for j in 0..4 {
            let n: f64 = g.normal(j).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
            assert_eq!(g.offset(j), 0.0);
        }
        let z = [0.3; 9];
        assert!(g.context_of(&z).unwrap() < 16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(g, HalfspaceGate::random(4, 9, &mut rng));
    }

    #[test]
    fn predict_examples() {
        let n = single_context_neuron(vec![0.0, 0.0], 0.1);
        assert_eq!(n.predict(&pv(&[0.2, 0.9]), &[]).unwrap(), 0.5);
        let n = single_context_neuron(vec![0.0, 1.0], 0.1);
        assert!((n.predict(&pv(&[0.2, 0.9]), &[]).unwrap() - 0.9).abs() < 1e-12);
        let n = single_context_neuron(vec![1.0, 1.0], 0.1);
        assert!((n.predict(&pv(&[0.8, 0.6]), &[]).unwrap() - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn update_one_step_by_hand() {
        let mut n = single_context_neuron(vec![0.0], 0.1);
        n.update(&pv(&[0.8]), &[], true).unwrap();
        // w' = -0.1 (0.5 - 1) ln 4
        let expected = 0.05 * 4f64.ln();
        assert!((n.weights.row(0)[0] - expected).abs() < 1e-12);
        assert!((n.weights.row(0)[0] - 0.0693147).abs() < 1e-7);
    }

    #[test]
    fn update_projects_onto_box() {
        let mut n = single_context_neuron(vec![9.99, -9.99], 100.0);
        n.update(&pv(&[0.9, 0.9]), &[], true).unwrap();
        // q ≈ 0.5 so the unclipped step is ~±110 per weight
        assert_eq!(n.weights.row(0), &[10.0, 10.0]);
        n.update(&pv(&[0.1, 0.1]), &[], true).unwrap();
        assert_eq!(n.weights.row(0), &[-10.0, -10.0]);
    }

    #[test]
    fn update_with_zero_gradient_leaves_weights() {
        let mut w = GgmWeights::from_rows(vec![vec![0.25, 0.5]]).unwrap();
        let before = w.clone();
        w.apply_gradient(0, &[1.0, 2.0], 1.0, true, 0.1, 10.0);
        assert_eq!(w, before);
        assert!(w.shares_row(&before, 0));
    }

    #[test]
    fn update_touches_only_active_row() {
        let gate = HalfspaceGate::new(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        let mut n = GgmNeuron::new(gate, 3, GgmParams::new(0.5));
        let before = n.weights.clone();
        let z = [1.0, -1.0];
        n.update(&pv(&[0.2, 0.7, 0.9]), &z, false).unwrap();
        for c in 0..4 {
            if c == 1 {
                assert_ne!(n.weights.row(c), before.row(c));
            } else {
                assert_eq!(n.weights.row(c), before.row(c));
                assert!(n.weights.shares_row(&before, c));
            }
        }
    }

    fn log_loss(w: &[f64], p: &ProbVector, x: bool) -> f64 {
        -log_prob_of(geometric_mix(w, p).unwrap(), x)
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            w in prop::collection::vec(-2.0f64..2.0, 1..6),
            seed in any::<u64>(),
            x in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probs: Vec<f64> = (0..w.len()).map(|_| rng.random_range(0.02..0.98)).collect();
            let p = pv(&probs);
            let logits = p.logits();
            let q = geometric_mix(&w, &p).unwrap();
            let err = q - if x { 1.0 } else { 0.0 };
            let h = 1e-5;
            for i in 0..w.len() {
                let analytic = err * logits[i];
                let mut up = w.clone();
                up[i] += h;
                let mut down = w.clone();
                down[i] -= h;
                let numeric = (log_loss(&up, &p, x) - log_loss(&down, &p, x)) / (2.0 * h);
                let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                prop_assert!((analytic - numeric).abs() / scale < 1e-4);
            }
        }

        #[test]
        fn small_step_reduces_loss(
            w in prop::collection::vec(-1.0f64..1.0, 1..6),
            seed in any::<u64>(),
            x in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probs: Vec<f64> = (0..w.len()).map(|_| rng.random_range(0.05..0.95)).collect();
            let p = pv(&probs);
            let mut n = single_context_neuron(w.clone(), 1e-3);
            let before = log_loss(&w, &p, x);
            n.update(&p, &[], x).unwrap();
            let after = log_loss(n.weights.row(0), &p, x);
            let grad_norm: f64 = p.logits().iter().map(|l| l * l).sum();
            prop_assume!(grad_norm > 1e-6);
            prop_assert!(after < before);
        }
    }
}
