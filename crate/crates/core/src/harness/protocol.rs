use super::learner::Learner;
use super::metrics::{mse_mae, RunMetrics, TriggerEvent};
use crate::data::StreamSample;
use crate::error::Error;

/// Trains sequentially on each sample once, in order.
pub fn warmup_train<'a>(
    learner: &mut dyn Learner,
    samples: impl IntoIterator<Item = &'a StreamSample>,
) -> crate::error::Result<()> {
    for s in samples {
        learner.step(&s.lookback, &s.target)?;
    }
    Ok(())
}

/// A run stopped by an error, with the metrics gathered before it.
#[derive(Debug)]
pub struct RunAborted {
    pub metrics: RunMetrics,
    pub error: Error,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub record_events: bool,
}

/// Each round forecasts first, scores the forecast, then trains on the
/// revealed target.
pub fn online_run<'a>(
    learner: &mut dyn Learner,
    samples: impl IntoIterator<Item = &'a StreamSample>,
    options: RunOptions,
) -> Result<RunMetrics, Box<RunAborted>> {
    let mut metrics = RunMetrics::default();
    for s in samples {
        let forecast = match learner.forecast(&s.lookback) {
            Ok(f) => f,
            Err(error) => return Err(Box::new(RunAborted { metrics, error })),
        };
        let (mse, mae) = mse_mae(forecast.data(), s.target.data());
        metrics.record(mse, mae);
        let report = match learner.learn(&s.target) {
            Ok(r) => r,
            Err(error) => return Err(Box::new(RunAborted { metrics, error })),
        };
        if metrics.trigger_counts.len() < report.triggers.len() {
            metrics.trigger_counts.resize(report.triggers.len(), 0);
            metrics.memory_reads.resize(report.triggers.len(), 0);
        }
        for (l, &t) in report.triggers.iter().enumerate() {
            metrics.trigger_counts[l] += t as u64;
            metrics.memory_reads[l] += report.memory_reads[l].is_some() as u64;
            if options.record_events {
                metrics.trigger_events.push(TriggerEvent::new(
                    metrics.steps.len(),
                    l,
                    report.cosines[l],
                    t,
                    report.memory_reads[l].as_ref(),
                ));
            }
        }
    }
    Ok(metrics)
}
