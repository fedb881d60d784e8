use serde::{Deserialize, Serialize};

use crate::backbone::TcnState;
use crate::error::Result;
use crate::fsnet::memory::TopK;
use crate::tensor::Tensor;

/// Outcome of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 1-based count of completed training steps.
    pub step: u64,
    pub loss: f64,
    pub forecast: Tensor,
    /// Per-layer cosine between the slow and fast gradient EMAs.
    pub cosines: Vec<f64>,
    /// Per-layer trigger flags armed for the next step.
    pub triggers: Vec<bool>,
    /// Per-layer memory attention used by this step's forecast, if any.
    pub memory_reads: Vec<Option<TopK>>,
}

impl StepReport {
    pub(crate) fn plain(step: u64, loss: f64, forecast: Tensor) -> Self {
        StepReport { step, loss, forecast, cosines: Vec::new(), triggers: Vec::new(), memory_reads: Vec::new() }
    }
}

/// Parameter and state counts by category. Absent categories are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub backbone: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ema_registers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub associative_memory: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodic_buffer: Option<usize>,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.backbone
            + self.adapter.unwrap_or(0)
            + self.ema_registers.unwrap_or(0)
            + self.associative_memory.unwrap_or(0)
            + self.episodic_buffer.unwrap_or(0)
    }
}

/// An online forecaster: [`forecast`](Learner::forecast) on the look-back
/// window, then [`learn`](Learner::learn) once the target is revealed.
pub trait Learner: Send {
    fn name(&self) -> &str;

    /// Predicts `[H × n]` from `x: [n × E]` with the current parameters.
    fn forecast(&mut self, x: &Tensor) -> Result<Tensor>;

    /// Trains on the target of the most recent forecast.
    fn learn(&mut self, y: &Tensor) -> Result<StepReport>;

    /// Current backbone parameters.
    fn snapshot(&self) -> &TcnState;

    fn param_counts(&self) -> ParamCounts;

    /// `forecast` then `learn` on one sample.
    fn step(&mut self, x: &Tensor, y: &Tensor) -> Result<StepReport> {
        self.forecast(x)?;
        self.learn(y)
    }
}
