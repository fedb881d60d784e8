//! Temporal convolutional forecaster.
//!
//! Layout: a kernel-1 input projection lifts the `n` input series to
//! `filters` channels, followed by `num_blocks` residual blocks
//!
//! ```text
//! h ← h + conv2(relu(conv1(relu(h))))
//! ```
//!
//! whose two convolutions share dilation `2^block`. A linear regressor maps
//! the final feature column `h_T` to all `H × n` forecast values at once.

mod checkpoint;
mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use network::{
    backbone_backward, backbone_forward, mse_loss, BlockGrads, ForwardCache, TcnGrads,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{ConvParams, LinearParams, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    /// Number of input series `n`.
    pub input_dim: usize,
    /// Look-back window length `E`.
    pub lookback: usize,
    /// Forecast horizon `H`.
    pub horizon: usize,
    pub num_blocks: usize,
    pub filters: usize,
    pub kernel_size: usize,
}

impl TcnConfig {
    pub fn new(input_dim: usize, lookback: usize, horizon: usize) -> Self {
        TcnConfig {
            input_dim,
            lookback,
            horizon,
            num_blocks: 10,
            filters: 64,
            kernel_size: 3,
        }
    }

    pub fn with_blocks(mut self, num_blocks: usize) -> Self {
        self.num_blocks = num_blocks;
        self
    }

    pub fn with_filters(mut self, filters: usize) -> Self {
        self.filters = filters;
        self
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let checks = [
            ("input_dim", self.input_dim),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("num_blocks", self.num_blocks),
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
        ];
        for (name, v) in checks {
            if v == 0 {
                return Err(TensorError::InvalidParameter {
                    op: "TcnConfig",
                    msg: format!("{name} must be at least 1"),
                });
            }
        }
        if self.num_blocks > 30 {
            return Err(TensorError::InvalidParameter {
                op: "TcnConfig",
                msg: "num_blocks above 30 overflows the dilation schedule".into(),
            });
        }
        Ok(())
    }

    pub fn dilation(&self, block: usize) -> usize {
        1 << block
    }

    /// Length of the flattened block gradient (both convolutions, weights and biases).
    pub fn block_param_count(&self) -> usize {
        2 * self.filters * (self.filters * self.kernel_size + 1)
    }
}

/// One residual block. Both convolutions map `filters → filters`, so the skip
/// path never needs a projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnBlock {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

/// All trainable backbone parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnState {
    pub config: TcnConfig,
    pub input_projection: ConvParams,
    pub blocks: Vec<TcnBlock>,
    pub regressor: LinearParams,
    /// Bumped after every parameter update; forward caches record it.
    #[serde(skip)]
    version: u64,
}

/// Identifies a trainable tensor by block and role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ParamKey {
    InputProjectionWeight,
    InputProjectionBias,
    Block { index: usize, role: BlockRole },
    RegressorWeight,
    RegressorBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BlockRole {
    Conv1Weight,
    Conv1Bias,
    Conv2Weight,
    Conv2Bias,
}

/// Uniform in `±1/√fan_in`.
fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

fn conv_init(c_out: usize, c_in: usize, k: usize, dilation: usize, rng: &mut impl Rng) -> ConvParams {
    ConvParams {
        weight: fan_in_uniform(&[c_out, c_in, k], c_in * k, rng),
        bias: Tensor::zeros(&[c_out]),
        dilation,
    }
}

impl TcnState {
    /// Fan-in-scaled uniform weights, zero biases.
    pub fn init(config: TcnConfig, rng: &mut impl Rng) -> Result<Self, TensorError> {
        config.validate()?;
        let f = config.filters;
        let input_projection = conv_init(f, config.input_dim, 1, 1, rng);
        let blocks = (0..config.num_blocks)
            .map(|b| {
                let d = config.dilation(b);
                TcnBlock {
                    conv1: conv_init(f, f, config.kernel_size, d, rng),
                    conv2: conv_init(f, f, config.kernel_size, d, rng),
                }
            })
            .collect();
        let out = config.horizon * config.input_dim;
        let regressor = LinearParams {
            weight: fan_in_uniform(&[out, f], f, rng),
            bias: Tensor::zeros(&[out]),
        };
        Ok(TcnState {
            config,
            input_projection,
            blocks,
            regressor,
            version: 0,
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Trainable tensors in canonical order; matches [`TcnGrads::tensors`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.input_projection.weight,
            &mut self.input_projection.bias,
        ];
        for b in &mut self.blocks {
            out.push(&mut b.conv1.weight);
            out.push(&mut b.conv1.bias);
            out.push(&mut b.conv2.weight);
            out.push(&mut b.conv2.bias);
        }
        out.push(&mut self.regressor.weight);
        out.push(&mut self.regressor.bias);
        out
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.input_projection.weight, &self.input_projection.bias];
        for b in &self.blocks {
            out.extend([&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias]);
        }
        out.push(&self.regressor.weight);
        out.push(&self.regressor.bias);
        out
    }

    pub fn param_keys(&self) -> Vec<ParamKey> {
        let mut out = vec![ParamKey::InputProjectionWeight, ParamKey::InputProjectionBias];
        for index in 0..self.blocks.len() {
            for role in [
                BlockRole::Conv1Weight,
                BlockRole::Conv1Bias,
                BlockRole::Conv2Weight,
                BlockRole::Conv2Bias,
            ] {
                out.push(ParamKey::Block { index, role });
            }
        }
        out.push(ParamKey::RegressorWeight);
        out.push(ParamKey::RegressorBias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_follow_config() {
        let cfg = TcnConfig::new(2, 60, 24).with_blocks(3).with_filters(8);
        let s = TcnState::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.blocks.len(), 3);
        assert_eq!(s.input_projection.weight.shape(), &[8, 2, 1]);
        assert_eq!(s.blocks[2].conv1.dilation, 4);
        assert_eq!(s.regressor.weight.shape(), &[48, 8]);
        assert_eq!(s.params().len(), s.param_keys().len());
        let block_params: usize = s.blocks[0].conv1.num_params() + s.blocks[0].conv2.num_params();
        assert_eq!(block_params, cfg.block_param_count());
        assert!(s.params().iter().all(|t| t.data().iter().all(|v| v.abs() <= 1.0)));
    }

    #[test]
    fn rejects_degenerate_config() {
        let mut cfg = TcnConfig::new(1, 60, 1);
        cfg.num_blocks = 0;
        assert!(TcnState::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(TcnConfig::new(1, 0, 1).validate().is_err());
        assert!(TcnConfig::new(1, 60, 0).validate().is_err());
    }
}
