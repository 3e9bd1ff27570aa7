//! Measurement protocols.

pub mod benchmark;
pub mod learner;
pub mod metrics;
pub mod oracle;
pub mod prequential;
pub mod transfer;

pub use benchmark::{
    adapted_accuracy, argmax_lowest, electricity_protocol, permuted_protocol, split_protocol,
    OneVsAll, PermutedResult, SplitResult,
};
pub use learner::{ConstantLearner, GlnLearner, NctlLearner, OnlineLearner};
pub use metrics::{log_loss, mean_stderr, MetricLog, RunSummary, StepRecord};
pub use oracle::{oracle_run, OracleLearner, OracleSpec, OracleVariant};
pub use prequential::prequential_run;
pub use transfer::{
    backward_plan, backward_transfer, compare_with_oracles, forward_plan, forward_transfer,
    OracleComparison, PairData, TransferCurves, TransferSettings,
};

use rayon::prelude::*;

use crate::error::{NctlError, Result};

/// Run `f` once per seed on up to `jobs` threads; results keep seed order.
pub fn run_seeds<T, F>(seeds: &[u64], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if jobs <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| NctlError::Config(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}
