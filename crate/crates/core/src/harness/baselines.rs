//! Plain online training and experience replay over the same backbone.

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learner::{Learner, ParamCounts, StepReport};
use super::optim::{AdamW, AdamWConfig};
use super::reservoir::ReservoirBuffer;
use crate::backbone::{backbone_backward, backbone_forward, mse_loss, ForwardCache, TcnConfig, TcnGrads, TcnState};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Pending {
    input: Tensor,
    forecast: Tensor,
    cache: ForwardCache,
}

/// Backbone, optimiser and the pending forecast shared by both baselines.
struct Core {
    name: &'static str,
    state: TcnState,
    optimizer: AdamW,
    steps: u64,
    pending: Option<Pending>,
}

impl Core {
    fn new(name: &'static str, config: TcnConfig, optimizer: AdamWConfig, seed: u64) -> Result<Self> {
        Ok(Core {
            name,
            state: TcnState::init(config, &mut ChaCha8Rng::seed_from_u64(seed))?,
            optimizer: AdamW::new(optimizer),
            steps: 0,
            pending: None,
        })
    }

    fn divergence(&self, reason: String) -> Error {
        let mut diagnostics = String::new();
        for (i, b) in self.state.blocks.iter().enumerate() {
            diagnostics.push_str(&format!(
                "block {i}: |w1| = {:.4e}, |w2| = {:.4e}\n",
                b.conv1.weight.norm(),
                b.conv2.weight.norm()
            ));
        }
        Error::Divergence { learner: self.name.into(), step: self.steps as usize + 1, reason, diagnostics }
    }

    fn forecast(&mut self, x: &Tensor) -> Result<Tensor> {
        let (forecast, cache) = backbone_forward(x, &self.state, None).map_err(|e| self.divergence(e.to_string()))?;
        self.pending = Some(Pending { input: x.clone(), forecast: forecast.clone(), cache });
        Ok(forecast)
    }

    fn take_pending(&mut self) -> Result<Pending> {
        let p = self
            .pending
            .take()
            .ok_or_else(|| Error::StaleCache("no forecast since the last update".into()))?;
        if p.cache.state_version() != self.state.version() {
            return Err(Error::StaleCache("parameters changed after the forecast".into()));
        }
        Ok(p)
    }

    fn current_grads(&self, p: &Pending, y: &Tensor) -> Result<(f64, TcnGrads)> {
        let (loss, g) = mse_loss(&p.forecast, y)?;
        if !loss.is_finite() {
            return Err(self.divergence(format!("non-finite loss {loss}")));
        }
        Ok((loss, backbone_backward(&p.cache, &g)?))
    }

    fn apply(&mut self, grads: &TcnGrads) -> Result<()> {
        let params = self.state.params_mut();
        if let Err(e) = self.optimizer.step(params, &grads.tensors()) {
            return Err(self.divergence(e.to_string()));
        }
        self.state.bump_version();
        self.steps += 1;
        Ok(())
    }
}

/// One optimiser step per revealed sample.
pub struct OnlineTcn {
    core: Core,
}

impl OnlineTcn {
    pub fn new(config: TcnConfig, optimizer: AdamWConfig, seed: u64) -> Result<Self> {
        Ok(OnlineTcn { core: Core::new("onlinetcn", config, optimizer, seed)? })
    }

    pub fn optimizer(&self) -> &AdamW {
        &self.core.optimizer
    }
}

impl Learner for OnlineTcn {
    fn name(&self) -> &str {
        self.core.name
    }

    fn forecast(&mut self, x: &Tensor) -> Result<Tensor> {
        self.core.forecast(x)
    }

    fn learn(&mut self, y: &Tensor) -> Result<StepReport> {
        let p = self.core.take_pending()?;
        let (loss, grads) = self.core.current_grads(&p, y)?;
        self.core.apply(&grads)?;
        Ok(StepReport::plain(self.core.steps, loss, p.forecast))
    }

    fn snapshot(&self) -> &TcnState {
        &self.core.state
    }

    fn param_counts(&self) -> ParamCounts {
        ParamCounts { backbone: self.core.state.num_params(), ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErConfig {
    /// Weight of the summed replay losses.
    pub lambda: f64,
    pub replay_batch: usize,
    pub capacity: usize,
}

impl Default for ErConfig {
    fn default() -> Self {
        ErConfig { lambda: 0.2, replay_batch: 8, capacity: 500 }
    }
}

impl ErConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            out.push(format!("er.lambda must be a non-negative number (got {})", self.lambda));
        }
        if self.capacity == 0 {
            out.push("er.capacity must be at least 1".into());
        }
        out
    }
}

/// Minimises `ℓ(current) + λ Σ_{replayed} ℓ(sample)` with a reservoir of
/// past samples, inserting the current sample after the update.
pub struct Er {
    core: Core,
    config: ErConfig,
    buffer: ReservoirBuffer<(Tensor, Tensor)>,
    rng: ChaCha8Rng,
}

impl Er {
    pub fn new(config: TcnConfig, optimizer: AdamWConfig, er: ErConfig, seed: u64) -> Result<Self> {
        let problems = er.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Ok(Er {
            core: Core::new("er", config, optimizer, seed)?,
            config: er,
            buffer: ReservoirBuffer::new(er.capacity, seed ^ 0x05ee_db0f),
            rng,
        })
    }

    pub fn buffer(&self) -> &ReservoirBuffer<(Tensor, Tensor)> {
        &self.buffer
    }
}

impl Learner for Er {
    fn name(&self) -> &str {
        self.core.name
    }

    fn forecast(&mut self, x: &Tensor) -> Result<Tensor> {
        self.core.forecast(x)
    }

    fn learn(&mut self, y: &Tensor) -> Result<StepReport> {
        let p = self.core.take_pending()?;
        let (loss, mut grads) = self.core.current_grads(&p, y)?;
        let n = self.buffer.len().min(self.config.replay_batch);
        if n > 0 {
            for i in sample(&mut self.rng, self.buffer.len(), n) {
                let (rx, ry) = &self.buffer.items()[i];
                let (f, cache) = backbone_forward(rx, &self.core.state, None)?;
                let (_, g) = mse_loss(&f, ry)?;
                grads.add_scaled(&backbone_backward(&cache, &g)?, self.config.lambda);
            }
        }
        self.core.apply(&grads)?;
        self.buffer.insert((p.input, y.clone()));
        Ok(StepReport::plain(self.core.steps, loss, p.forecast))
    }

    fn snapshot(&self) -> &TcnState {
        &self.core.state
    }

    fn param_counts(&self) -> ParamCounts {
        let c = &self.core.state.config;
        let per_sample = c.input_dim * c.lookback + c.horizon * c.input_dim;
        ParamCounts {
            backbone: self.core.state.num_params(),
            episodic_buffer: Some(self.config.capacity * per_sample),
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TcnConfig {
        TcnConfig::new(1, 8, 2).with_blocks(2).with_filters(3)
    }

    fn sample_pair(i: usize) -> (Tensor, Tensor) {
        let x = Tensor::from_fn(&[1, 8], |t| ((i + t) as f64 * 0.3).sin());
        let y = Tensor::from_fn(&[2, 1], |t| ((i + 8 + t) as f64 * 0.3).sin());
        (x, y)
    }

    #[test]
    fn er_with_empty_buffer_matches_online_first_step() {
        let mut a = OnlineTcn::new(cfg(), AdamWConfig::default(), 1).unwrap();
        let mut b = Er::new(cfg(), AdamWConfig::default(), ErConfig::default(), 1).unwrap();
        let (x, y) = sample_pair(0);
        assert_eq!(a.step(&x, &y).unwrap(), b.step(&x, &y).unwrap());
        assert_eq!(a.snapshot(), b.snapshot());
    }

    #[test]
    fn er_with_zero_lambda_matches_online() {
        let er = ErConfig { lambda: 0.0, ..Default::default() };
        let mut a = OnlineTcn::new(cfg(), AdamWConfig::default(), 1).unwrap();
        let mut b = Er::new(cfg(), AdamWConfig::default(), er, 1).unwrap();
        for i in 0..20 {
            let (x, y) = sample_pair(i);
            a.step(&x, &y).unwrap();
            b.step(&x, &y).unwrap();
        }
        assert_eq!(a.snapshot(), b.snapshot());
        assert_eq!(b.buffer().len(), 20);
    }

    #[test]
    fn er_replay_changes_updates() {
        let mut a = OnlineTcn::new(cfg(), AdamWConfig::default(), 1).unwrap();
        let mut b = Er::new(cfg(), AdamWConfig::default(), ErConfig::default(), 1).unwrap();
        for i in 0..5 {
            let (x, y) = sample_pair(i * 7);
            a.step(&x, &y).unwrap();
            b.step(&x, &y).unwrap();
        }
        assert_ne!(a.snapshot(), b.snapshot());
    }

    #[test]
    fn parameter_categories() {
        let a = OnlineTcn::new(cfg(), AdamWConfig::default(), 1).unwrap().param_counts();
        assert!(a.episodic_buffer.is_none() && a.adapter.is_none());
        let b = Er::new(cfg(), AdamWConfig::default(), ErConfig::default(), 1).unwrap().param_counts();
        assert_eq!(b.episodic_buffer, Some(500 * 10));
    }
}
