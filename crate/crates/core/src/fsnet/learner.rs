//! The fast-and-slow learner and its ablation variants.
//!
//! Each backbone block owns an adapter, gradient EMAs, a coefficient EMA and
//! (when enabled) an associative memory. One round is split in two:
//! [`Learner::forecast`] computes the block coefficients, consults memory for
//! blocks whose trigger is armed and runs the adapted network;
//! [`Learner::learn`] backpropagates, takes one optimiser step over backbone
//! and adapter weights, updates the EMAs and re-arms triggers.

use std::fmt::Write as _;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapt::BlockAdaptation;
use super::adapter::{adapter_backward, adapter_deviation, AdapterCache, AdapterParams};
use super::ema::ema_in_place;
use super::hyper::FsnetHyperparams;
use super::memory::{AssociativeMemory, TopK};
use super::trigger::cosine;
use crate::backbone::{backbone_backward, backbone_forward, mse_loss, ForwardCache, TcnConfig, TcnState};
use crate::error::{Error, Result};
use crate::harness::learner::{Learner, ParamCounts, StepReport};
use crate::harness::optim::{AdamW, AdamWConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Adapters plus associative memory.
    Full,
    /// Adapters only; memory is never consulted.
    NoMemory,
    /// Free per-block coefficients trained directly by the optimiser.
    Naive,
    /// As `Full` with 128 memory slots.
    LargeMemory,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::LargeMemory, Variant::NoMemory, Variant::Naive];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "fsnet",
            Variant::NoMemory => "fsnet-no-memory",
            Variant::Naive => "fsnet-naive",
            Variant::LargeMemory => "fsnet-large-memory",
        }
    }

    pub fn uses_memory(self) -> bool {
        matches!(self, Variant::Full | Variant::LargeMemory)
    }
}

/// Fast-learning state of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFastState {
    pub g_hat: Vec<f64>,
    pub g_hat_prime: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub memory: Option<AssociativeMemory>,
    pub trigger: bool,
}

#[derive(Debug, Clone)]
enum Coefficients {
    Adapters(Vec<AdapterParams>),
    /// Naive variant: one free `[d]` tensor per block, initialised to ones.
    Free(Vec<Tensor>),
}

struct Pending {
    forecast: Tensor,
    cache: ForwardCache,
    adapter_caches: Vec<AdapterCache>,
    /// Applied deviation `u − 1` per block.
    deviations: Vec<Vec<f64>>,
    /// Scale of `∂u/∂Ω` per block: `τ` after a memory blend, else 1.
    omega_scale: Vec<f64>,
    reads: Vec<Option<TopK>>,
}

pub struct FsnetLearner {
    variant: Variant,
    hp: FsnetHyperparams,
    state: TcnState,
    coefficients: Coefficients,
    fast: Vec<LayerFastState>,
    optimizer: AdamW,
    steps: u64,
    pending: Option<Pending>,
}

/// Builds a learner. The backbone is initialised from `seed` exactly as
/// the plain online baseline is; adapters use a separate stream.
pub fn make_variant(
    variant: Variant,
    config: TcnConfig,
    hp: FsnetHyperparams,
    optimizer: AdamWConfig,
    seed: u64,
) -> Result<FsnetLearner> {
    let mut hp = hp;
    if variant == Variant::LargeMemory {
        hp.memory_size = 128;
    }
    hp.validate()?;
    let state = TcnState::init(config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let f = state.config.filters;
    let d = BlockAdaptation::dim_for(f);
    let dim = state.config.block_param_count();
    let blocks = state.config.num_blocks;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let coefficients = match variant {
        Variant::Naive => Coefficients::Free(vec![Tensor::ones(&[d]); blocks]),
        _ => Coefficients::Adapters(
            (0..blocks)
                .map(|_| AdapterParams::init(dim, d, hp.adapter_hidden, &mut rng))
                .collect::<std::result::Result<_, _>>()?,
        ),
    };
    let fast = match variant {
        Variant::Naive => Vec::new(),
        _ => (0..blocks)
            .map(|_| LayerFastState {
                g_hat: vec![0.0; dim],
                g_hat_prime: vec![0.0; dim],
                u_hat: vec![0.0; d],
                memory: variant.uses_memory().then(|| AssociativeMemory::new(hp.memory_size, d)),
                trigger: false,
            })
            .collect(),
    };
    Ok(FsnetLearner {
        variant,
        hp,
        state,
        coefficients,
        fast,
        optimizer: AdamW::new(optimizer),
        steps: 0,
        pending: None,
    })
}

impl FsnetLearner {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn hyperparams(&self) -> &FsnetHyperparams {
        &self.hp
    }

    /// Per-block fast state; empty for the naive variant.
    pub fn fast_states(&self) -> &[LayerFastState] {
        &self.fast
    }

    pub fn adapters(&self) -> Option<&[AdapterParams]> {
        match &self.coefficients {
            Coefficients::Adapters(a) => Some(a),
            Coefficients::Free(_) => None,
        }
    }

    pub fn adapters_mut(&mut self) -> Option<&mut [AdapterParams]> {
        match &mut self.coefficients {
            Coefficients::Adapters(a) => Some(a),
            Coefficients::Free(_) => None,
        }
    }

    pub fn optimizer(&self) -> &AdamW {
        &self.optimizer
    }

    fn diagnostics(&self) -> String {
        let mut s = String::new();
        for (i, b) in self.state.blocks.iter().enumerate() {
            let _ = write!(s, "block {i}: |w1| = {:.4e}, |w2| = {:.4e}", b.conv1.weight.norm(), b.conv2.weight.norm());
            if let Some(f) = self.fast.get(i) {
                let n = f.g_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
                let _ = write!(s, ", |g_hat| = {n:.4e}");
            }
            s.push('\n');
        }
        let _ = write!(s, "regressor: |w| = {:.4e}", self.state.regressor.weight.norm());
        s
    }

    fn divergence(&self, reason: String) -> Error {
        Error::Divergence {
            learner: self.variant.label().into(),
            step: self.steps as usize + 1,
            reason,
            diagnostics: self.diagnostics(),
        }
    }
}

impl Learner for FsnetLearner {
    fn name(&self) -> &str {
        self.variant.label()
    }

    fn forecast(&mut self, x: &Tensor) -> Result<Tensor> {
        let blocks = self.state.blocks.len();
        let mut adaptation = Vec::with_capacity(blocks);
        let mut adapter_caches = Vec::new();
        let mut deviations = Vec::with_capacity(blocks);
        let mut omega_scale = vec![1.0; blocks];
        let mut reads = vec![None; blocks];
        let (tau, k) = (self.hp.tau, self.hp.top_k);

        match &self.coefficients {
            Coefficients::Free(us) => {
                for u in us {
                    adaptation.push(BlockAdaptation::from_packed(u.data()));
                    deviations.push(u.data().iter().map(|v| v - 1.0).collect());
                }
            }
            Coefficients::Adapters(adapters) => {
                for (l, (p, fs)) in adapters.iter().zip(&mut self.fast).enumerate() {
                    let (mut omega, cache) = adapter_deviation(&fs.g_hat, p)?;
                    if fs.trigger {
                        if let Some(mem) = &mut fs.memory {
                            let (u_tilde, r) = mem.read(&fs.u_hat, k)?;
                            let r = mem.write(&fs.u_hat, &r, k, tau)?;
                            for (o, t) in omega.iter_mut().zip(&u_tilde) {
                                *o = tau * *o + (1.0 - tau) * t;
                            }
                            omega_scale[l] = tau;
                            reads[l] = Some(r);
                        }
                        fs.trigger = false;
                    }
                    let u: Vec<f64> = omega.iter().map(|v| 1.0 + v).collect();
                    adaptation.push(BlockAdaptation::from_packed(&u));
                    adapter_caches.push(cache);
                    deviations.push(omega);
                }
            }
        }

        let (forecast, cache) = backbone_forward(x, &self.state, Some(&adaptation))
            .map_err(|e| self.divergence(e.to_string()))?;
        self.pending = Some(Pending {
            forecast: forecast.clone(),
            cache,
            adapter_caches,
            deviations,
            omega_scale,
            reads,
        });
        Ok(forecast)
    }

    fn learn(&mut self, y: &Tensor) -> Result<StepReport> {
        let p = self
            .pending
            .take()
            .ok_or_else(|| Error::StaleCache("no forecast since the last update".into()))?;
        if p.cache.state_version() != self.state.version() {
            return Err(Error::StaleCache(format!(
                "forecast used parameters v{}, current v{}",
                p.cache.state_version(),
                self.state.version()
            )));
        }
        let (loss, g) = mse_loss(&p.forecast, y)?;
        if !loss.is_finite() {
            return Err(self.divergence(format!("non-finite loss {loss}")));
        }
        let grads = backbone_backward(&p.cache, &g).map_err(|e| self.divergence(e.to_string()))?;
        let coeff_grads: Vec<Vec<f64>> = grads
            .blocks
            .iter()
            .map(|b| b.adaptation.as_ref().expect("forward was adapted").packed())
            .collect();

        let mut extra_grads: Vec<Tensor> = Vec::new();
        match &self.coefficients {
            Coefficients::Adapters(adapters) => {
                for (l, a) in adapters.iter().enumerate() {
                    let g_omega: Vec<f64> = coeff_grads[l].iter().map(|v| v * p.omega_scale[l]).collect();
                    let ag = adapter_backward(&g_omega, &p.adapter_caches[l], a)?;
                    extra_grads.push(ag.w1);
                    extra_grads.push(ag.w2);
                }
            }
            Coefficients::Free(us) => {
                for (u, gu) in us.iter().zip(&coeff_grads) {
                    extra_grads.push(Tensor::from_parts(u.shape().to_vec(), gu.clone()));
                }
            }
        }

        let mut params = self.state.params_mut();
        match &mut self.coefficients {
            Coefficients::Adapters(adapters) => {
                for a in adapters.iter_mut() {
                    params.push(&mut a.w1);
                    params.push(&mut a.w2);
                }
            }
            Coefficients::Free(us) => params.extend(us.iter_mut()),
        }
        let mut all_grads = grads.tensors();
        all_grads.extend(extra_grads.iter());
        if let Err(e) = self.optimizer.step(params, &all_grads) {
            return Err(self.divergence(e.to_string()));
        }
        self.state.bump_version();
        self.steps += 1;

        let (gamma, gamma_prime, tau) = (self.hp.gamma, self.hp.gamma_prime, self.hp.tau);
        let mut cosines = Vec::with_capacity(self.fast.len());
        let mut triggers = Vec::with_capacity(self.fast.len());
        for (l, fs) in self.fast.iter_mut().enumerate() {
            let mut g = grads.block_flat(l);
            if self.hp.normalize_gradient {
                let rms = (g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
                if rms > 0.0 {
                    g.iter_mut().for_each(|v| *v /= rms);
                }
            }
            ema_in_place(&mut fs.g_hat, &g, gamma);
            ema_in_place(&mut fs.g_hat_prime, &g, gamma_prime);
            ema_in_place(&mut fs.u_hat, &p.deviations[l], gamma_prime);
            let c = cosine(&fs.g_hat, &fs.g_hat_prime);
            fs.trigger = fs.memory.is_some() && c < -tau;
            cosines.push(c);
            triggers.push(fs.trigger);
        }

        Ok(StepReport {
            step: self.steps,
            loss,
            forecast: p.forecast,
            cosines,
            triggers,
            memory_reads: p.reads,
        })
    }

    fn snapshot(&self) -> &TcnState {
        &self.state
    }

    fn param_counts(&self) -> ParamCounts {
        let adapter = match &self.coefficients {
            Coefficients::Adapters(a) => a.iter().map(AdapterParams::num_params).sum(),
            Coefficients::Free(us) => us.iter().map(Tensor::len).sum(),
        };
        let ema: usize = self.fast.iter().map(|f| f.g_hat.len() + f.g_hat_prime.len() + f.u_hat.len()).sum();
        let memory: usize = self
            .fast
            .iter()
            .filter_map(|f| f.memory.as_ref().map(|m| m.items().len()))
            .sum();
        ParamCounts {
            backbone: self.state.num_params(),
            adapter: Some(adapter),
            ema_registers: (ema > 0).then_some(ema),
            associative_memory: (memory > 0).then_some(memory),
            episodic_buffer: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_ar1;

    fn config() -> TcnConfig {
        TcnConfig::new(1, 12, 2).with_blocks(2).with_filters(4)
    }

    fn learner(v: Variant, hp: FsnetHyperparams) -> FsnetLearner {
        make_variant(v, config(), hp, AdamWConfig::default(), 5).unwrap()
    }

    fn samples(n: usize, seed: u64) -> Vec<(Tensor, Tensor)> {
        let x = gen_ar1(0.6, n + 14, seed).unwrap();
        (0..n)
            .map(|i| {
                (
                    Tensor::new(vec![1, 12], x[i..i + 12].to_vec()).unwrap(),
                    Tensor::new(vec![2, 1], x[i + 12..i + 14].to_vec()).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn learn_without_forecast_is_stale() {
        let mut l = learner(Variant::Full, Default::default());
        let err = l.learn(&Tensor::zeros(&[2, 1])).unwrap_err();
        assert!(matches!(err, Error::StaleCache(_)));
        let (x, y) = &samples(1, 0)[0];
        l.forecast(x).unwrap();
        l.learn(y).unwrap();
        assert!(matches!(l.learn(y), Err(Error::StaleCache(_))));
    }

    #[test]
    fn naive_has_no_gradient_state() {
        let l = learner(Variant::Naive, Default::default());
        assert!(l.fast_states().is_empty());
        assert!(l.adapters().is_none());
        assert_eq!(l.param_counts().ema_registers, None);
    }

    #[test]
    fn no_memory_never_writes() {
        let mut l = learner(Variant::NoMemory, FsnetHyperparams { tau: 0.01, ..Default::default() });
        for (x, y) in samples(60, 1) {
            let r = l.step(&x, &y).unwrap();
            assert!(r.triggers.iter().all(|t| !t));
        }
        assert!(l.fast_states().iter().all(|f| f.memory.is_none()));
    }

    #[test]
    fn repeated_sample_does_not_trigger() {
        let mut l = learner(Variant::Full, Default::default());
        let (x, y) = samples(1, 2).remove(0);
        for _ in 0..2 {
            let r = l.step(&x, &y).unwrap();
            assert!(r.cosines.iter().all(|&c| c > 0.0), "{:?}", r.cosines);
            assert!(r.triggers.iter().all(|t| !t));
        }
    }

    #[test]
    fn reproducible_reports() {
        let run = || {
            let mut l = learner(Variant::Full, FsnetHyperparams { tau: 0.2, ..Default::default() });
            samples(50, 3).iter().map(|(x, y)| l.step(x, y).unwrap()).collect::<Vec<_>>()
        };
        let a = run();
        assert!(a.iter().all(|r| r.loss.is_finite()));
        assert_eq!(a, run());
    }

    #[test]
    fn large_memory_has_128_slots() {
        let l = learner(Variant::LargeMemory, Default::default());
        assert_eq!(l.fast_states()[0].memory.as_ref().unwrap().len(), 128);
    }

    #[test]
    fn memory_rows_stay_bounded_when_triggered() {
        let mut l = learner(Variant::Full, FsnetHyperparams { tau: 0.05, ..Default::default() });
        let mut fired = 0;
        for (x, y) in samples(200, 4) {
            let r = l.step(&x, &y).unwrap();
            fired += r.memory_reads.iter().flatten().count();
        }
        assert!(fired > 0);
        for f in l.fast_states() {
            assert!(f.memory.as_ref().unwrap().max_row_norm() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn gradient_enters_the_emas_at_unit_rms() {
        let (x, y) = samples(1, 5).remove(0);
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        let mut l = learner(Variant::NoMemory, Default::default());
        l.step(&x, &y).unwrap();
        for f in l.fast_states() {
            assert!((rms(&f.g_hat) - 0.1).abs() < 1e-12);
            assert!((rms(&f.g_hat_prime) - 0.7).abs() < 1e-12);
        }
        let mut raw = learner(Variant::NoMemory, FsnetHyperparams { normalize_gradient: false, ..Default::default() });
        raw.step(&x, &y).unwrap();
        let (a, b) = (&l.fast_states()[0].g_hat, &raw.fast_states()[0].g_hat);
        assert!(rms(b) > 0.0 && (rms(b) - 0.1).abs() > 1e-6);
        let scale = rms(a) / rms(b);
        assert!(a.iter().zip(b).all(|(p, q)| (p - scale * q).abs() < 1e-12));
    }
}
