use std::time::Instant;

use super::learner::OnlineLearner;
use super::metrics::{decide, log_loss, MetricLog, StepRecord};
use crate::data::TaskStream;
use crate::error::Result;

/// Predict each example, score it, then learn its label.
pub fn prequential_run(
    learner: &mut dyn OnlineLearner,
    stream: &TaskStream,
    window: usize,
) -> Result<MetricLog> {
    if let Some(cap) = learner.capacity() {
        if stream.len() as u64 > cap {
            return Err(nctl_core::Error::CapacityExceeded {
                depth: cap.trailing_zeros(),
                capacity: cap,
            }
            .into());
        }
    }
    let mut log = MetricLog::new(window);
    for (t, (meta, ex)) in stream.tagged().enumerate() {
        let start = Instant::now();
        let p = learner.predict(&ex.features)?;
        learner.observe(ex.label)?;
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
