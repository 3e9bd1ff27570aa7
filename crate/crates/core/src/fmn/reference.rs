//! Batch recursions over a whole sequence. These re-run the base model on
//! every tree node (`O(n d)` symbol evaluations) and serve as test oracles
//! for the incremental implementations.

use alloc::vec::Vec;

use super::BaseModel;
use crate::math::{ln, log_add_exp, log_prob_of, log_sum_exp, LN_HALF};
use crate::{Error, Result};

/// Sequential log-probability of `bits` under a fresh clone of `model`.
pub fn sequential_log_prob<M: BaseModel>(model: &M, inputs: &[M::Input], bits: &[bool]) -> f64 {
    let mut m = model.clone();
    let mut total = 0.0;
    for (input, &x) in inputs.iter().zip(bits) {
        let p = m.predict(input);
        total += log_prob_of(p, x);
        m.learn(input, x, p);
    }
    total
}

fn check<I>(depth: u32, inputs: &[I], bits: &[bool]) -> Result<()> {
    if inputs.len() != bits.len() {
        return Err(Error::DimensionMismatch {
            expected: bits.len(),
            actual: inputs.len(),
        });
    }
    if depth > super::MAX_DEPTH || bits.len() as u64 > 1u64 << depth {
        return Err(Error::CapacityExceeded {
            depth,
            capacity: 1u64 << depth.min(63),
        });
    }
    Ok(())
}

/// Tree recursion with `node(start, end)` giving the log-probability of the
/// (non-empty) observed part `[start, end)` of a node.
fn recurse(start: u64, height: u32, n: u64, node: &mut impl FnMut(usize, usize) -> f64) -> f64 {
    if start >= n {
        return 0.0;
    }
    let end = (start + (1u64 << height)).min(n);
    let own = node(start as usize, end as usize);
    if height == 0 {
        return own;
    }
    let half = 1u64 << (height - 1);
    let l = recurse(start, height - 1, n, node);
    let r = recurse(start + half, height - 1, n, node);
    log_add_exp(LN_HALF + own, LN_HALF + l + r)
}

/// `ln PTW_d(x_{1:n})` with base model `base`.
pub fn ptw_log_prob_batch<M: BaseModel>(
    depth: u32,
    base: &M,
    inputs: &[M::Input],
    bits: &[bool],
) -> Result<f64> {
    check(depth, inputs, bits)?;
    let mut node = |a: usize, b: usize| sequential_log_prob(base, &inputs[a..b], &bits[a..b]);
    Ok(recurse(0, depth, bits.len() as u64, &mut node))
}

/// `ln FMN_d(x_{1:n})` where a node starting at time `a` mixes uniformly
/// over `pools[a]`.
pub fn fmn_log_prob_batch<M: BaseModel>(
    depth: u32,
    pools: &[Vec<M>],
    inputs: &[M::Input],
    bits: &[bool],
) -> Result<f64> {
    check(depth, inputs, bits)?;
    if pools.len() < bits.len() {
        return Err(Error::DimensionMismatch {
            expected: bits.len(),
            actual: pools.len(),
        });
    }
    let mut node = |a: usize, b: usize| {
        let lps: Vec<f64> = pools[a]
            .iter()
            .map(|m| sequential_log_prob(m, &inputs[a..b], &bits[a..b]))
            .collect();
        log_sum_exp(&lps) - ln(lps.len() as f64)
    };
    Ok(recurse(0, depth, bits.len() as u64, &mut node))
}
