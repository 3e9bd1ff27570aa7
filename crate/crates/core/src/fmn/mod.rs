//! Partition Tree Weighting and the Forget-Me-Not process.
//!
//! Both mix, in the log domain, over every segmentation of time induced by a
//! pruning of a complete binary tree of depth `d`. A stream may hold at most
//! `2^d` symbols.
//!
//! [`Fmn`] replaces the single base model at each tree node with a uniform
//! Bayesian mixture over the snapshots in a [`ModelPool`] at the time the
//! node's segment started. Nodes that start at the same time see the same
//! data with the same pool, so they share one [`Segment`] record; the stack
//! of live segments holds at most `d + 1` entries and each entry at most `k`
//! conditioned copies.
//!
//! When a node closes, its best conditioned copy is offered to the pool. It
//! is admitted when its log-probability on the segment exceeds that of every
//! frozen pool member by more than the admission threshold. Frozen scores are
//! accumulated per segment from the predictions of the newest segment, whose
//! copies are untouched clones of the current pool.

mod models;
mod pool;
mod ptw;
pub mod reference;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{ln, log_add_exp, log_prob_of, LN_2, LN_HALF};
use crate::{Error, Result};

pub use models::{BernoulliModel, KtModel};
pub use pool::{best_member, Admission, ModelPool, PoolMember};
pub use ptw::Ptw;

pub const DEFAULT_POOL_CAPACITY: usize = 8;
pub const DEFAULT_ADMISSION_THRESHOLD: f64 = LN_2;
pub const MAX_DEPTH: u32 = 40;

/// An adaptive sequential predictor of binary symbols.
///
/// `Clone` must produce a fully independent copy; snapshots in the pool and
/// segment copies are made with it.
pub trait BaseModel: Clone {
    type Input;

    /// Probability that the next symbol is 1. Must lie strictly in (0, 1).
    fn predict(&self, input: &Self::Input) -> f64;

    /// Condition on `target`. `predicted` is this model's [`BaseModel::predict`]
    /// output for the same input.
    fn learn(&mut self, input: &Self::Input, target: bool, predicted: f64);

    fn observe(&mut self, input: &Self::Input, target: bool) {
        let p = self.predict(input);
        self.learn(input, target, p);
    }

    /// Models returning the same key for `input` predict identically on it
    /// and reach the same state there after the same `learn`. `None` opts out.
    fn share_key(&self, _input: &Self::Input) -> Option<usize> {
        None
    }

    /// Become what `self.learn(input, ..)` would have produced, given that
    /// `learned` had this model's key for `input` before it learned.
    fn adopt(&mut self, learned: &Self, _input: &Self::Input) {
        *self = learned.clone();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmnConfig {
    /// Tree depth; the stream holds at most `2^depth` symbols.
    pub depth: u32,
    /// Pool capacity `k`, counting the pinned base model.
    pub capacity: usize,
    /// Admission threshold in nats; `+inf` disables the pool.
    #[serde(with = "crate::serde_f64")]
    pub admission_threshold: f64,
}

impl FmnConfig {
    pub fn new(depth: u32) -> Self {
        Self {
            depth,
            capacity: DEFAULT_POOL_CAPACITY,
            admission_threshold: DEFAULT_ADMISSION_THRESHOLD,
        }
    }

    /// A pool that only ever holds the base model: the process reduces to PTW.
    pub fn without_pool(depth: u32) -> Self {
        Self {
            depth,
            capacity: 1,
            admission_threshold: f64::INFINITY,
        }
    }

    pub fn stream_capacity(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth > MAX_DEPTH {
            return Err(Error::InvalidConfig(alloc::format!(
                "depth above {MAX_DEPTH}"
            )));
        }
        if self.capacity == 0 {
            return Err(Error::InvalidConfig(
                "pool capacity must be at least 1".into(),
            ));
        }
        if self.admission_threshold.is_nan() {
            return Err(Error::InvalidConfig("admission threshold is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SegmentCopy<M> {
    pub member: u64,
    pub model: M,
    pub log_prob: f64,
}

/// State shared by all tree nodes that start at `start`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Segment<M> {
    pub start: u64,
    pub len: u64,
    /// One conditioned copy per pool member present at `start`, in admission order.
    pub copies: Vec<SegmentCopy<M>>,
    /// Frozen log-probability of each resident pool member on this segment.
    pub frozen: Vec<(u64, f64)>,
}

impl<M: Clone> Segment<M> {
    fn fresh(start: u64, pool: &ModelPool<M>) -> Self {
        Self {
            start,
            len: 0,
            copies: pool
                .members()
                .iter()
                .map(|m| SegmentCopy {
                    member: m.id,
                    model: m.model.clone(),
                    log_prob: 0.0,
                })
                .collect(),
            frozen: pool.members().iter().map(|m| (m.id, 0.0)).collect(),
        }
    }

    /// `ln ξ`: uniform mixture over the copies.
    fn log_mixture(&self) -> f64 {
        let m = self
            .copies
            .iter()
            .map(|c| c.log_prob)
            .fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = self
            .copies
            .iter()
            .map(|c| crate::math::expf(c.log_prob - m))
            .sum();
        m + ln(s) - ln(self.copies.len() as f64)
    }

    fn best(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.copies.iter().enumerate().skip(1) {
            if c.log_prob > self.copies[best].log_prob {
                best = i;
            }
        }
        best
    }

    fn best_log_prob(&self) -> f64 {
        self.copies[self.best()].log_prob
    }
}

/// Work counters, for checking the per-step complexity bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FmnStats {
    pub steps: u64,
    pub predictions: u64,
    pub updates: u64,
    pub last_step_predictions: u64,
    pub last_step_updates: u64,
    pub max_step_predictions: u64,
    pub max_step_updates: u64,
    /// Segment copies plus pool members, maximised over time.
    pub max_live_copies: u64,
    pub admissions: u64,
    pub evictions: u64,
}

/// Predictive distribution for the next symbol, with the per-copy
/// predictions needed to observe it without re-evaluating the base models.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    step: u64,
    copy_probs: Vec<f64>,
    p_one: f64,
    p_zero: f64,
}

impl Forecast {
    /// Probability that the next symbol is 1.
    pub fn probability(&self) -> f64 {
        self.p_one
    }

    pub fn probability_of(&self, target: bool) -> f64 {
        if target {
            self.p_one
        } else {
            self.p_zero
        }
    }

    /// Number of symbols observed before this forecast.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn copy_probs(&self) -> &[f64] {
        &self.copy_probs
    }
}

/// Posterior summary of one live segment, for debugging dumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start: u64,
    pub len: u64,
    /// `(member id, posterior weight)` for each conditioned copy.
    pub weights: Vec<(u64, f64)>,
}

/// Forget-Me-Not process over base model `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fmn<M> {
    pub(crate) config: FmnConfig,
    pub(crate) observed: u64,
    pub(crate) pool: ModelPool<M>,
    pub(crate) segments: Vec<Segment<M>>,
    /// Per level, log-probability of the completed left child (0 if none).
    pub(crate) left: Vec<f64>,
    pub(crate) log_prob: f64,
    pub(crate) stats: FmnStats,
}

impl<M: BaseModel> Fmn<M> {
    pub fn new(base: M, config: FmnConfig) -> Result<Self> {
        config.validate()?;
        let pool = ModelPool::new(base, config.capacity);
        let segments = vec![Segment::fresh(0, &pool)];
        let mut fmn = Self {
            config,
            observed: 0,
            pool,
            segments,
            left: vec![0.0; config.depth as usize + 1],
            log_prob: 0.0,
            stats: FmnStats::default(),
        };
        fmn.stats.max_live_copies = fmn.live_copies();
        Ok(fmn)
    }

    pub fn config(&self) -> &FmnConfig {
        &self.config
    }

    /// Symbols observed so far.
    pub fn observed(&self) -> u64 {
        self.observed
    }

    pub fn pool(&self) -> &ModelPool<M> {
        &self.pool
    }

    /// `ln FMN(x_{1:t})`.
    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    pub fn stats(&self) -> &FmnStats {
        &self.stats
    }

    pub fn live_copies(&self) -> u64 {
        (self.segments.iter().map(|s| s.copies.len()).sum::<usize>() + self.pool.len()) as u64
    }

    pub fn segment_summaries(&self) -> Vec<SegmentSummary> {
        self.segments
            .iter()
            .map(|s| {
                let z = s.log_mixture() + ln(s.copies.len() as f64);
                SegmentSummary {
                    start: s.start,
                    len: s.len,
                    weights: s
                        .copies
                        .iter()
                        .map(|c| (c.member, crate::math::expf(c.log_prob - z)))
                        .collect(),
                }
            })
            .collect()
    }

    fn check_capacity(&self) -> Result<()> {
        if self.observed >= self.config.stream_capacity() {
            return Err(Error::CapacityExceeded {
                depth: self.config.depth,
                capacity: self.config.stream_capacity(),
            });
        }
        Ok(())
    }

    /// Segment index for every level, leaf first (index `d - j` holds level `j`).
    fn level_segments(&self) -> Vec<usize> {
        let d = self.config.depth;
        let mut idx = self.segments.len() - 1;
        (0..=d)
            .rev()
            .map(|j| {
                let shift = d - j;
                let start = (self.observed >> shift) << shift;
                while self.segments[idx].start > start {
                    idx -= 1;
                }
                debug_assert_eq!(self.segments[idx].start, start);
                idx
            })
            .collect()
    }

    /// Root log-probability from per-segment node values; optionally records
    /// every level's value.
    fn evaluate_tree(
        &self,
        levels: &[usize],
        seg_values: &[f64],
        mut out: Option<&mut [f64]>,
    ) -> f64 {
        let d = self.config.depth as usize;
        let mut w = seg_values[levels[0]];
        if let Some(o) = out.as_deref_mut() {
            o[d] = w;
        }
        for j in (0..d).rev() {
            let xi = seg_values[levels[d - j]];
            w = log_add_exp(LN_HALF + xi, LN_HALF + self.left[j] + w);
            if let Some(o) = out.as_deref_mut() {
                o[j] = w;
            }
        }
        w
    }

    /// Node values of every segment after a hypothetical next symbol.
    fn extended_values(&self, copy_probs: &[f64], target: bool) -> Vec<f64> {
        let mut offset = 0;
        self.segments
            .iter()
            .map(|s| {
                let n = s.copies.len();
                let probs = &copy_probs[offset..offset + n];
                offset += n;
                let terms = s
                    .copies
                    .iter()
                    .zip(probs)
                    .map(|(c, &p)| c.log_prob + log_prob_of(p, target));
                let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = terms.map(|v| crate::math::expf(v - m)).sum();
                m + ln(sum) - ln(n as f64)
            })
            .collect()
    }

    /// Predictive distribution of the next symbol. Does not change the process.
    pub fn forecast(&self, input: &M::Input) -> Result<Forecast> {
        self.check_capacity()?;
        let mut memo = BTreeMap::new();
        let copy_probs: Vec<f64> = self
            .segments
            .iter()
            .flat_map(|s| s.copies.iter())
            .map(|c| match c.model.share_key(input) {
                Some(key) => *memo.entry(key).or_insert_with(|| c.model.predict(input)),
                None => c.model.predict(input),
            })
            .collect();
        let levels = self.level_segments();
        let one = self.evaluate_tree(&levels, &self.extended_values(&copy_probs, true), None);
        let zero = self.evaluate_tree(&levels, &self.extended_values(&copy_probs, false), None);
        Ok(Forecast {
            step: self.observed,
            copy_probs,
            p_one: crate::math::expf(one - self.log_prob),
            p_zero: crate::math::expf(zero - self.log_prob),
        })
    }

    /// Probability that the next symbol is 1.
    pub fn predict(&self, input: &M::Input) -> Result<f64> {
        Ok(self.forecast(input)?.probability())
    }

    /// Observe `target`; returns the log-probability the process assigned to it.
    pub fn observe(&mut self, input: &M::Input, target: bool) -> Result<f64> {
        let forecast = self.forecast(input)?;
        self.observe_with(forecast, input, target)
    }

    /// Observe `target` using the copy predictions cached in `forecast`,
    /// which must have been issued for the current step with the same input.
    pub fn observe_with(
        &mut self,
        forecast: Forecast,
        input: &M::Input,
        target: bool,
    ) -> Result<f64> {
        if forecast.step != self.observed {
            return Err(Error::Protocol("forecast was issued for a different step"));
        }
        self.check_capacity()?;
        let d = self.config.depth;
        let t1 = self.observed + 1;
        let lowest_closing = d - t1.trailing_zeros().min(d);
        let levels = self.level_segments();
        // Segments used only by closing nodes are retired after this step.
        let keep_through = if lowest_closing > 0 {
            let shift = d - (lowest_closing - 1);
            Some((self.observed >> shift) << shift)
        } else {
            None
        };
        let survives = |start: u64| keep_through.is_some_and(|k| start <= k);

        let probs = forecast.copy_probs();
        let top = self.segments.len() - 1;
        let top_offset = probs.len() - self.segments[top].copies.len();
        let frozen_lp: Vec<(u64, f64)> = self.segments[top]
            .copies
            .iter()
            .zip(&probs[top_offset..])
            .map(|(c, &p)| (c.member, log_prob_of(p, target)))
            .collect();

        let mut offset = 0;
        let mut updates = 0u64;
        // Copies sharing a key learn once; the rest adopt the result.
        let mut learned: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for si in 0..self.segments.len() {
            let learn = survives(self.segments[si].start);
            for ci in 0..self.segments[si].copies.len() {
                let p = probs[offset];
                offset += 1;
                self.segments[si].copies[ci].log_prob += log_prob_of(p, target);
                if !learn {
                    continue;
                }
                updates += 1;
                let key = self.segments[si].copies[ci].model.share_key(input);
                match key.and_then(|k| learned.get(&k).copied()) {
                    Some((sj, cj)) => {
                        let done = self.segments[sj].copies[cj].model.clone();
                        self.segments[si].copies[ci].model.adopt(&done, input);
                    }
                    None => {
                        self.segments[si].copies[ci].model.learn(input, target, p);
                        if let Some(k) = key {
                            learned.insert(k, (si, ci));
                        }
                    }
                }
            }
            let seg = &mut self.segments[si];
            seg.len += 1;
            for (id, v) in seg.frozen.iter_mut() {
                if let Ok(i) = frozen_lp.binary_search_by_key(id, |e| e.0) {
                    *v += frozen_lp[i].1;
                }
            }
        }

        let seg_values: Vec<f64> = self.segments.iter().map(Segment::log_mixture).collect();
        let mut node_values = vec![0.0; d as usize + 1];
        self.log_prob = self.evaluate_tree(&levels, &seg_values, Some(&mut node_values));

        let lc = lowest_closing as usize;
        if lc > 0 {
            self.left[lc - 1] = node_values[lc];
        }
        for l in &mut self.left[lc..] {
            *l = 0.0;
        }

        // Pool updates, largest closing node first.
        let copy_offsets: Vec<usize> = self
            .segments
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s.copies.len();
                Some(o)
            })
            .collect();
        let mut closing: Vec<usize> = (lc..=d as usize).map(|j| levels[d as usize - j]).collect();
        closing.dedup();
        for si in closing {
            let seg = &self.segments[si];
            let b = seg.best();
            let best_member = seg.copies[b].member;
            let best_lp = seg.copies[b].log_prob;
            let incumbent = seg
                .frozen
                .iter()
                .map(|e| e.1)
                .fold(f64::NEG_INFINITY, f64::max);
            self.pool.mark_selected(best_member, t1);
            let learned = survives(seg.start);
            let p_best = probs[copy_offsets[si] + b];
            let mut extra_update = false;
            let admission = self.pool.consider(
                || {
                    let mut m = seg.copies[b].model.clone();
                    if !learned {
                        m.learn(input, target, p_best);
                        extra_update = true;
                    }
                    m
                },
                best_lp,
                incumbent,
                self.config.admission_threshold,
                t1,
            );
            if extra_update {
                updates += 1;
            }
            if let Some(a) = admission {
                self.stats.admissions += 1;
                for s in self.segments.iter_mut() {
                    if let Some(ev) = a.evicted {
                        s.frozen.retain(|e| e.0 != ev);
                    }
                    s.frozen.push((a.id, s.best_log_prob()));
                }
                if a.evicted.is_some() {
                    self.stats.evictions += 1;
                }
            }
        }

        self.segments.retain(|s| survives(s.start));
        self.observed = t1;
        if self.observed < self.config.stream_capacity() {
            self.segments
                .push(Segment::fresh(self.observed, &self.pool));
        }

        let predictions = probs.len() as u64;
        let st = &mut self.stats;
        st.steps += 1;
        st.predictions += predictions;
        st.updates += updates;
        st.last_step_predictions = predictions;
        st.last_step_updates = updates;
        st.max_step_predictions = st.max_step_predictions.max(predictions);
        st.max_step_updates = st.max_step_updates.max(updates);
        let live = self.live_copies();
        self.stats.max_live_copies = self.stats.max_live_copies.max(live);

        Ok(ln(forecast.probability_of(target)))
    }

    /// The copy with the highest posterior weight in the finest segment that
    /// has seen data; the base model before any data.
    pub fn map_model(&self) -> &M {
        self.segments
            .iter()
            .rev()
            .find(|s| s.len > 0)
            .map(|s| &s.copies[s.best()].model)
            .unwrap_or_else(|| self.pool.base())
    }
}

#[cfg(test)]
mod tests {
    use super::reference::{fmn_log_prob_batch, ptw_log_prob_batch};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits_from(s: &str) -> Vec<bool> {
        s.bytes().map(|b| b == b'1').collect()
    }

    fn run<M: BaseModel<Input = ()>>(fmn: &mut Fmn<M>, bits: &[bool]) -> f64 {
        bits.iter().map(|&x| fmn.observe(&(), x).unwrap()).sum()
    }

    #[test]
    fn fresh_bernoulli_half_predicts_half() {
        let fmn = Fmn::new(BernoulliModel::new(0.5), FmnConfig::new(3)).unwrap();
        assert_eq!(fmn.predict(&()).unwrap(), 0.5);
    }

    #[test]
    fn kt_depth_one_example() {
        let mut fmn = Fmn::new(KtModel::new(), FmnConfig::without_pool(1)).unwrap();
        let total = run(&mut fmn, &bits_from("01"));
        assert!((total - (3.0f64 / 16.0).ln()).abs() < 1e-12);
        assert!((fmn.log_prob() - total).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_enforced() {
        let mut fmn = Fmn::new(KtModel::new(), FmnConfig::new(2)).unwrap();
        run(&mut fmn, &bits_from("0110"));
        assert!(matches!(
            fmn.observe(&(), true),
            Err(Error::CapacityExceeded {
                depth: 2,
                capacity: 4
            })
        ));
        assert!(fmn.predict(&()).is_err());
    }

    #[test]
    fn stale_forecast_is_rejected() {
        let mut fmn = Fmn::new(KtModel::new(), FmnConfig::new(3)).unwrap();
        let f = fmn.forecast(&()).unwrap();
        fmn.observe(&(), true).unwrap();
        assert_eq!(
            fmn.observe_with(f, &(), true),
            Err(Error::Protocol("forecast was issued for a different step"))
        );
    }

    #[test]
    fn predictive_distribution_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut fmn = Fmn::new(KtModel::new(), FmnConfig::new(7)).unwrap();
        for _ in 0..128 {
            let f = fmn.forecast(&()).unwrap();
            assert!((f.probability_of(true) + f.probability_of(false) - 1.0).abs() < 1e-12);
            let x = rng.random_bool(0.3);
            fmn.observe_with(f, &(), x).unwrap();
        }
    }

    #[test]
    fn pool_disabled_matches_ptw_batch_every_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bits: Vec<bool> = (0..256)
            .map(|i| rng.random_bool(if i < 100 { 0.8 } else { 0.2 }))
            .collect();
        let mut fmn = Fmn::new(KtModel::new(), FmnConfig::without_pool(8)).unwrap();
        let inputs = vec![(); 256];
        let mut total = 0.0;
        for n in 0..256 {
            if n % 17 == 0 {
                let batch =
                    ptw_log_prob_batch(8, &KtModel::new(), &inputs[..n], &bits[..n]).unwrap();
                assert!((batch - total).abs() < 1e-9, "prefix {n}");
                let p = fmn.predict(&()).unwrap();
                let next = ptw_log_prob_batch(8, &KtModel::new(), &inputs[..n + 1], &bits[..n + 1])
                    .unwrap();
                let expect = if bits[n] { p } else { 1.0 - p };
                assert!(((next - batch) - expect.ln()).abs() < 1e-9);
            }
            total += fmn.observe(&(), bits[n]).unwrap();
        }
        assert!(
            (ptw_log_prob_batch(8, &KtModel::new(), &inputs, &bits).unwrap() - total).abs() < 1e-9
        );
    }

    fn alternating_source(seed: u64, n: usize, period: usize) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|t| rng.random_bool(if (t / period) % 2 == 0 { 0.9 } else { 0.1 }))
            .collect()
    }

    #[test]
    fn active_pool_telescopes_to_batch_with_recorded_pools() {
        for seed in 0..4 {
            let bits = alternating_source(seed, 256, 32);
            let mut fmn = Fmn::new(KtModel::new(), FmnConfig::new(8)).unwrap();
            let mut pools = Vec::new();
            let mut total = 0.0;
            for &x in &bits {
                pools.push(
                    fmn.pool()
                        .members()
                        .iter()
                        .map(|m| m.model)
                        .collect::<Vec<_>>(),
                );
                total += fmn.observe(&(), x).unwrap();
            }
            assert!(fmn.stats().admissions > 0);
            let batch = fmn_log_prob_batch(8, &pools, &vec![(); bits.len()], &bits).unwrap();
            assert!(
                (batch - total).abs() < 1e-9,
                "seed {seed}: {batch} vs {total}"
            );
            assert!((fmn.log_prob() - total).abs() < 1e-9);
        }
    }

    #[test]
    fn pool_respects_capacity_and_space_bound() {
        let mut cfg = FmnConfig::new(9);
        cfg.capacity = 3;
        cfg.admission_threshold = f64::NEG_INFINITY;
        let mut fmn = Fmn::new(KtModel::new(), cfg).unwrap();
        let bits = alternating_source(9, 512, 16);
        for &x in &bits {
            fmn.observe(&(), x).unwrap();
            assert!(fmn.pool().len() <= 3);
            let k = 3u64;
            let d = 9u64;
            assert!(fmn.live_copies() <= k * (d + 2));
            assert!(fmn.stats().last_step_predictions <= k * (d + 1));
            assert!(fmn.stats().last_step_updates <= k * (d + 1));
        }
        assert!(fmn.stats().evictions > 0);
    }

    #[test]
    fn infinite_threshold_never_admits() {
        let mut cfg = FmnConfig::new(8);
        cfg.admission_threshold = f64::INFINITY;
        let mut fmn = Fmn::new(KtModel::new(), cfg).unwrap();
        run(&mut fmn, &alternating_source(3, 256, 32));
        assert_eq!(fmn.pool().len(), 1);
        assert_eq!(fmn.stats().admissions, 0);
    }

    #[test]
    fn negative_infinite_threshold_admits_at_every_closing_step() {
        let mut cfg = FmnConfig::new(6);
        cfg.capacity = 1000;
        cfg.admission_threshold = f64::NEG_INFINITY;
        let mut fmn = Fmn::new(KtModel::new(), cfg).unwrap();
        for t in 1..=64u64 {
            let before = fmn.pool().len();
            fmn.observe(&(), t % 3 == 0).unwrap();
            // one admission per distinct closing segment
            let closing = t.trailing_zeros().min(6) as usize + 1;
            assert!(fmn.pool().len() > before);
            assert!(fmn.pool().len() - before <= closing);
        }
    }

    #[test]
    fn alternating_source_settles_on_two_specialists() {
        let bits = alternating_source(17, 2048, 64);
        let mut fmn = Fmn::new(KtModel::new(), FmnConfig::new(11)).unwrap();
        let mut admissions_in_second_half = 0;
        for (t, &x) in bits.iter().enumerate() {
            let before = fmn.stats().admissions;
            fmn.observe(&(), x).unwrap();
            if t >= 1024 {
                admissions_in_second_half += fmn.stats().admissions - before;
            }
        }
        let specialists: Vec<f64> = fmn
            .pool()
            .members()
            .iter()
            .skip(1)
            .map(|m| m.model.predict(&()))
            .collect();
        assert!(specialists.iter().any(|&p| p > 0.8), "{specialists:?}");
        assert!(specialists.iter().any(|&p| p < 0.2), "{specialists:?}");
        assert!(
            admissions_in_second_half <= 2,
            "pool kept growing: {specialists:?}"
        );
    }

    #[test]
    fn map_model_tracks_regime_switch() {
        let bits = alternating_source(23, 512, 128);
        let mut fmn = Fmn::new(KtModel::new(), FmnConfig::new(9)).unwrap();
        assert_eq!(*fmn.map_model(), KtModel::new());
        // two full periods, then into the third (a 0.9 regime) for 32 steps
        for &x in &bits[..256 + 32] {
            fmn.observe(&(), x).unwrap();
        }
        assert!(fmn.map_model().predict(&()) > 0.7);
        for &x in &bits[256 + 32..384 + 32] {
            fmn.observe(&(), x).unwrap();
        }
        assert!(fmn.map_model().predict(&()) < 0.3);
    }

    #[test]
    fn single_member_map_model_is_that_member() {
        let mut fmn = Fmn::new(BernoulliModel::new(0.3), FmnConfig::without_pool(4)).unwrap();
        run(&mut fmn, &bits_from("0110"));
        assert_eq!(*fmn.map_model(), BernoulliModel::new(0.3));
    }
}
