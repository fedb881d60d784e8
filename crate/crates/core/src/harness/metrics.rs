use serde::Serialize;

use crate::fsnet::memory::TopK;

/// One online round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mse: f64,
    pub mae: f64,
    pub cum_mse: f64,
    pub cum_mae: f64,
}

/// One block's trigger state after a training step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerEvent {
    pub step: usize,
    pub layer: usize,
    pub cosine: f64,
    pub triggered: bool,
    pub read_rows: Vec<usize>,
    pub attention_weights: Vec<f64>,
}

impl TriggerEvent {
    pub(crate) fn new(step: usize, layer: usize, cosine: f64, triggered: bool, read: Option<&TopK>) -> Self {
        let (read_rows, attention_weights) = read.map(|r| (r.indices.clone(), r.weights.clone())).unwrap_or_default();
        TriggerEvent { step, layer, cosine, triggered, read_rows, attention_weights }
    }
}

/// Running means of per-round errors plus the per-round log.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub cum_mse: f64,
    pub cum_mae: f64,
    pub steps: Vec<StepMetrics>,
    /// Triggers armed per layer over the run.
    pub trigger_counts: Vec<u64>,
    /// Memory reads per layer over the run.
    pub memory_reads: Vec<u64>,
    /// Filled only when event recording is requested.
    #[serde(skip)]
    pub trigger_events: Vec<TriggerEvent>,
}

impl RunMetrics {
    /// Appends a round using the running-mean recurrence.
    pub fn record(&mut self, mse: f64, mae: f64) {
        let t = self.steps.len() as f64 + 1.0;
        self.cum_mse += (mse - self.cum_mse) / t;
        self.cum_mae += (mae - self.cum_mae) / t;
        self.steps.push(StepMetrics {
            step: self.steps.len() + 1,
            mse,
            mae,
            cum_mse: self.cum_mse,
            cum_mae: self.cum_mae,
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_triggers(&self) -> u64 {
        self.trigger_counts.iter().sum()
    }

    /// Line-delimited JSON, one [`StepMetrics`] per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for m in &self.steps {
            s.push_str(&serde_json::to_string(m).expect("plain struct serialises"));
            s.push('\n');
        }
        s
    }

    /// Two columns: `step,cum_mse`.
    pub fn loss_curve_csv(&self) -> String {
        let mut s = String::from("step,cum_mse\n");
        for m in &self.steps {
            s.push_str(&format!("{},{}\n", m.step, m.cum_mse));
        }
        s
    }

    pub fn events_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.trigger_events {
            s.push_str(&serde_json::to_string(e).expect("plain struct serialises"));
            s.push('\n');
        }
        s
    }
}

/// Mean squared and mean absolute error over all elements.
pub fn mse_mae(pred: &[f64], truth: &[f64]) -> (f64, f64) {
    let n = pred.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        se += (p - t) * (p - t);
        ae += (p - t).abs();
    }
    (se / n, ae / n)
}
