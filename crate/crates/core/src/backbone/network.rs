use super::{BlockRole, ParamKey, TcnConfig, TcnState};
use crate::fsnet::adapt::{
    adapted_conv_on_support, adapted_conv_on_support_backward, AdaptedConv, BlockAdaptation,
};
use crate::tensor::{
    check_dim, conv_on_support, conv_on_support_backward, linear_backward, linear_forward,
    relu_backward, relu_forward, ConvGrads, ConvParams, LinearGrads, LinearParams, Result,
    Support, Tensor, TensorError,
};

/// Steps each block must evaluate so that the last step of the final block
/// output is exact. Activations are stored compactly on these supports.
struct BlockSupport {
    input: Support,
    mid: Support,
    output: Support,
}

fn block_supports(cfg: &TcnConfig) -> Vec<BlockSupport> {
    let mut need = Support::new(vec![cfg.lookback - 1]);
    let mut out = Vec::with_capacity(cfg.num_blocks);
    for b in (0..cfg.num_blocks).rev() {
        let d = cfg.dilation(b);
        let mid = need.receptive(cfg.kernel_size, d);
        let input = mid.receptive(cfg.kernel_size, d).union(&need);
        out.push(BlockSupport { input: input.clone(), mid, output: need });
        need = input;
    }
    out.reverse();
    out
}

struct BlockCache {
    support: BlockSupport,
    input: Tensor,
    act0: Tensor,
    theta1: ConvParams,
    conv1: AdaptedConv,
    act1: Tensor,
    theta2: ConvParams,
    conv2: AdaptedConv,
    adaptation: BlockAdaptation,
    adapted: bool,
}

/// Everything [`backbone_backward`] needs, including copies of the parameters
/// used, so the backward pass is a pure function of the cache.
pub struct ForwardCache {
    state_version: u64,
    config: TcnConfig,
    input: Tensor,
    input_projection: ConvParams,
    projection_support: Support,
    blocks: Vec<BlockCache>,
    features: Tensor,
    regressor: LinearParams,
}

impl ForwardCache {
    /// Version of the [`TcnState`] the forward pass read.
    pub fn state_version(&self) -> u64 {
        self.state_version
    }

    /// Final feature vector `h_T`, shape `[1 × filters]`.
    pub fn features(&self) -> &Tensor {
        &self.features
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub conv1: ConvGrads,
    pub conv2: ConvGrads,
    /// Coefficient gradients, present when the forward pass was adapted.
    pub adaptation: Option<BlockAdaptation>,
}

/// Gradients for every trainable backbone tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnGrads {
    pub input_projection: ConvGrads,
    pub blocks: Vec<BlockGrads>,
    pub regressor: LinearGrads,
}

impl TcnGrads {
    /// Same order as [`TcnState::params_mut`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.input_projection.weight, &self.input_projection.bias];
        for b in &self.blocks {
            out.extend([&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias]);
        }
        out.push(&self.regressor.weight);
        out.push(&self.regressor.bias);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
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

    pub fn get(&self, key: ParamKey) -> &Tensor {
        match key {
            ParamKey::InputProjectionWeight => &self.input_projection.weight,
            ParamKey::InputProjectionBias => &self.input_projection.bias,
            ParamKey::RegressorWeight => &self.regressor.weight,
            ParamKey::RegressorBias => &self.regressor.bias,
            ParamKey::Block { index, role } => {
                let b = &self.blocks[index];
                match role {
                    BlockRole::Conv1Weight => &b.conv1.weight,
                    BlockRole::Conv1Bias => &b.conv1.bias,
                    BlockRole::Conv2Weight => &b.conv2.weight,
                    BlockRole::Conv2Bias => &b.conv2.bias,
                }
            }
        }
    }

    /// Flattened gradient of block `index`: `[w1 ; b1 ; w2 ; b2]`.
    pub fn block_flat(&self, index: usize) -> Vec<f64> {
        let b = &self.blocks[index];
        let mut v = Vec::with_capacity(
            b.conv1.weight.len() + b.conv1.bias.len() + b.conv2.weight.len() + b.conv2.bias.len(),
        );
        for t in [&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias] {
            v.extend_from_slice(t.data());
        }
        v
    }

    /// `self += scale · other`, including coefficient gradients.
    pub fn add_scaled(&mut self, other: &TcnGrads, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            if let (Some(ua), Some(ub)) = (&mut a.adaptation, &b.adaptation) {
                let mut packed = ua.packed();
                for (x, y) in packed.iter_mut().zip(ub.packed()) {
                    *x += scale * y;
                }
                *ua = BlockAdaptation::from_packed(&packed);
            }
        }
    }
}

/// Runs the network on `x: [n × E]`, returning the `[H × n]` forecast.
///
/// With `adaptation`, each block's convolutions apply their coefficients.
pub fn backbone_forward(
    x: &Tensor,
    state: &TcnState,
    adaptation: Option<&[BlockAdaptation]>,
) -> Result<(Tensor, ForwardCache)> {
    const OP: &str = "backbone_forward";
    let cfg = &state.config;
    x.ensure_rank(OP, 2)?;
    check_dim(OP, "n", cfg.input_dim, x.dim(0))?;
    check_dim(OP, "E", cfg.lookback, x.dim(1))?;
    if let Some(a) = adaptation {
        check_dim(OP, "blocks", state.blocks.len(), a.len())?;
    }
    x.ensure_finite(OP)?;

    let e = cfg.lookback;
    let supports = block_supports(cfg);
    let full = Support::dense(e);
    let projection_support = supports.first().map_or_else(|| Support::new(vec![e - 1]), |s| s.input.clone());
    let mut h = conv_on_support(x, &full, &state.input_projection, &projection_support)?;
    let mut blocks = Vec::with_capacity(state.blocks.len());
    for ((i, block), support) in state.blocks.iter().enumerate().zip(supports) {
        let (coeffs, adapted) = match adaptation {
            Some(a) => (a[i].clone(), true),
            None => (BlockAdaptation::identity(cfg.filters), false),
        };
        let act0 = relu_forward(&h);
        let conv1 = adapted_conv_on_support(&block.conv1, &act0, &support.input, &support.mid, &coeffs.conv1)?;
        let act1 = relu_forward(&conv1.output);
        let conv2 = adapted_conv_on_support(&block.conv2, &act1, &support.mid, &support.output, &coeffs.conv2)?;
        let (m, n) = (support.input.len(), support.output.len());
        let mut next = conv2.output.clone();
        for (j, &p) in support.output.positions().iter().enumerate() {
            let src = support.input.slot(p).expect("output steps are part of the input support");
            for c in 0..cfg.filters {
                next.data_mut()[c * n + j] += h.data()[c * m + src];
            }
        }
        next.ensure_finite(OP)?;
        blocks.push(BlockCache {
            support,
            input: std::mem::replace(&mut h, next),
            act0,
            theta1: block.conv1.clone(),
            conv1,
            act1,
            theta2: block.conv2.clone(),
            conv2,
            adaptation: coeffs,
            adapted,
        });
    }

    // The final activation holds a single column: step E − 1.
    debug_assert_eq!(h.dim(1), 1);
    let features = Tensor::from_parts(vec![1, cfg.filters], h.into_data());
    let forecast = linear_forward(&features, &state.regressor)?
        .reshape(&[cfg.horizon, cfg.input_dim])?;
    forecast.ensure_finite(OP)?;

    Ok((
        forecast,
        ForwardCache {
            state_version: state.version(),
            config: *cfg,
            input: x.clone(),
            input_projection: state.input_projection.clone(),
            projection_support,
            blocks,
            features,
            regressor: state.regressor.clone(),
        },
    ))
}

/// Backpropagates `grad_forecast: [H × n]` through the cached forward pass.
///
/// Convolution gradients are taken with respect to the unadapted parameters.
pub fn backbone_backward(cache: &ForwardCache, grad_forecast: &Tensor) -> Result<TcnGrads> {
    const OP: &str = "backbone_backward";
    let cfg = &cache.config;
    grad_forecast.ensure_rank(OP, 2)?;
    check_dim(OP, "H", cfg.horizon, grad_forecast.dim(0))?;
    check_dim(OP, "n", cfg.input_dim, grad_forecast.dim(1))?;

    let g_out = grad_forecast.clone().reshape(&[1, cfg.horizon * cfg.input_dim])?;
    let (g_feat, regressor) = linear_backward(&g_out, &cache.features, &cache.regressor)?;

    let f = cfg.filters;
    let mut g_h = g_feat.reshape(&[f, 1])?;

    let mut blocks = Vec::with_capacity(cache.blocks.len());
    for bc in cache.blocks.iter().rev() {
        let sup = &bc.support;
        let (g_act1, conv2, u2) = adapted_conv_on_support_backward(
            &g_h,
            &bc.act1,
            &sup.mid,
            &sup.output,
            &bc.theta2,
            &bc.adaptation.conv2,
            &bc.conv2,
        )?;
        let g_z1 = relu_backward(&g_act1, &bc.conv1.output)?;
        let (g_act0, conv1, u1) = adapted_conv_on_support_backward(
            &g_z1,
            &bc.act0,
            &sup.input,
            &sup.mid,
            &bc.theta1,
            &bc.adaptation.conv1,
            &bc.conv1,
        )?;
        let mut g_in = relu_backward(&g_act0, &bc.input)?;
        let (m, n) = (sup.input.len(), sup.output.len());
        for (j, &p) in sup.output.positions().iter().enumerate() {
            let dst = sup.input.slot(p).expect("output steps are part of the input support");
            for c in 0..f {
                g_in.data_mut()[c * m + dst] += g_h.data()[c * n + j];
            }
        }
        g_h = g_in;
        blocks.push(BlockGrads {
            conv1,
            conv2,
            adaptation: bc.adapted.then_some(BlockAdaptation {
                conv1: u1,
                conv2: u2,
            }),
        });
    }
    blocks.reverse();
    g_h.ensure_finite(OP)?;

    let full = Support::dense(cfg.lookback);
    let (_, input_projection) = conv_on_support_backward(
        &g_h,
        &cache.input,
        &full,
        &cache.input_projection,
        &cache.projection_support,
    )?;
    Ok(TcnGrads {
        input_projection,
        blocks,
        regressor,
    })
}

/// `ℓ(ŷ, y) = (1/H) Σ_i ‖ŷ_i − y_i‖²` over the `H` rows, with gradient `2(ŷ − y)/H`.
pub fn mse_loss(forecast: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    const OP: &str = "mse_loss";
    forecast.ensure_rank(OP, 2)?;
    forecast.ensure_same_shape(target, OP)?;
    let h = forecast.dim(0) as f64;
    let diff: Vec<f64> = forecast
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| a - b)
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / h;
    if !loss.is_finite() {
        return Err(TensorError::NonFinite {
            op: OP,
            index: 0,
            value: loss,
        });
    }
    let grad = Tensor::from_parts(
        forecast.shape().to_vec(),
        diff.iter().map(|d| 2.0 * d / h).collect(),
    );
    Ok((loss, grad))
}
