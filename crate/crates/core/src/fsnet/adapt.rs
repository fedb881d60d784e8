//! Per-channel weight and feature transforms applied to a convolution.
//!
//! Output channel `c` of an adapted convolution has its filter scaled by
//! `alpha_w[c]`, its bias by `alpha_b[c]`, and its output feature map by
//! `beta[c]`.

use serde::{Deserialize, Serialize};

use crate::tensor::{
    check_dim, conv_on_support, conv_on_support_backward, dilated_causal_conv1d, dilated_causal_conv1d_backward, scale_channels,
    scale_channels_backward, ConvGrads, ConvParams, Result, Support, Tensor,
};

/// Coefficients for one convolution, each of length `C_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationCoefficients {
    pub alpha_w: Vec<f64>,
    pub alpha_b: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AdaptationCoefficients {
    pub fn identity(channels: usize) -> Self {
        Self::filled(channels, 1.0)
    }

    pub fn filled(channels: usize, value: f64) -> Self {
        AdaptationCoefficients {
            alpha_w: vec![value; channels],
            alpha_b: vec![value; channels],
            beta: vec![value; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.alpha_w.len()
    }

    /// Packed layout `[alpha_w ; alpha_b ; beta]`, length `3 · C_out`.
    pub fn packed(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(3 * self.channels());
        self.pack_into(&mut u);
        u
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.alpha_w);
        out.extend_from_slice(&self.alpha_b);
        out.extend_from_slice(&self.beta);
    }

    /// Inverse of [`packed`](Self::packed). `u.len()` must be a multiple of 3.
    pub fn from_packed(u: &[f64]) -> Self {
        let c = u.len() / 3;
        AdaptationCoefficients {
            alpha_w: u[..c].to_vec(),
            alpha_b: u[c..2 * c].to_vec(),
            beta: u[2 * c..3 * c].to_vec(),
        }
    }
}

/// Coefficients for both convolutions of a residual block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAdaptation {
    pub conv1: AdaptationCoefficients,
    pub conv2: AdaptationCoefficients,
}

impl BlockAdaptation {
    pub fn identity(channels: usize) -> Self {
        BlockAdaptation {
            conv1: AdaptationCoefficients::identity(channels),
            conv2: AdaptationCoefficients::identity(channels),
        }
    }

    /// Coefficient dimension `d = 6 · C_out` for a block of width `channels`.
    pub fn dim_for(channels: usize) -> usize {
        6 * channels
    }

    pub fn packed(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(3 * (self.conv1.channels() + self.conv2.channels()));
        self.conv1.pack_into(&mut u);
        self.conv2.pack_into(&mut u);
        u
    }

    pub fn from_packed(u: &[f64]) -> Self {
        let half = u.len() / 2;
        BlockAdaptation {
            conv1: AdaptationCoefficients::from_packed(&u[..half]),
            conv2: AdaptationCoefficients::from_packed(&u[half..]),
        }
    }
}

/// Result of an adapted convolution, holding what the backward pass needs.
#[derive(Debug, Clone)]
pub struct AdaptedConv {
    /// `beta ⊙ conv(x; θ̃)`.
    pub output: Tensor,
    /// `conv(x; θ̃)` before the feature transform.
    pub pre_scale: Tensor,
    pub theta_tilde: ConvParams,
}

/// `θ̃` with filter `c` scaled by `alpha_w[c]` and bias by `alpha_b[c]`.
pub fn adapt_weights(theta: &ConvParams, u: &AdaptationCoefficients) -> Result<ConvParams> {
    const OP: &str = "adapt_weights";
    let c_out = theta.out_channels();
    check_dim(OP, "C_out", c_out, u.alpha_w.len())?;
    check_dim(OP, "C_out", c_out, u.alpha_b.len())?;
    check_dim(OP, "C_out", c_out, u.beta.len())?;
    let per_filter = theta.in_channels() * theta.kernel_size();
    let mut weight = theta.weight.clone();
    for (filter, &a) in weight.data_mut().chunks_exact_mut(per_filter).zip(&u.alpha_w) {
        filter.iter_mut().for_each(|w| *w *= a);
    }
    let mut bias = theta.bias.clone();
    for (b, &a) in bias.data_mut().iter_mut().zip(&u.alpha_b) {
        *b *= a;
    }
    weight.ensure_finite(OP)?;
    bias.ensure_finite(OP)?;
    Ok(ConvParams {
        weight,
        bias,
        dilation: theta.dilation,
    })
}

pub fn adapted_conv(
    theta: &ConvParams,
    h_in: &Tensor,
    u: &AdaptationCoefficients,
) -> Result<AdaptedConv> {
    adapted_with(theta, u, |p| dilated_causal_conv1d(h_in, p))
}

/// [`adapted_conv`] restricted to the steps of `out_support`.
pub(crate) fn adapted_conv_on_support(
    theta: &ConvParams,
    h_in: &Tensor,
    in_support: &Support,
    out_support: &Support,
    u: &AdaptationCoefficients,
) -> Result<AdaptedConv> {
    adapted_with(theta, u, |p| conv_on_support(h_in, in_support, p, out_support))
}

fn adapted_with(
    theta: &ConvParams,
    u: &AdaptationCoefficients,
    conv: impl FnOnce(&ConvParams) -> Result<Tensor>,
) -> Result<AdaptedConv> {
    let theta_tilde = adapt_weights(theta, u)?;
    let pre_scale = conv(&theta_tilde)?;
    let output = scale_channels(&pre_scale, &u.beta)?;
    Ok(AdaptedConv {
        output,
        pre_scale,
        theta_tilde,
    })
}

/// Applies the weight transform, convolves, then applies the feature transform.
pub fn adapt_layer(
    theta: &ConvParams,
    h_in: &Tensor,
    u: &AdaptationCoefficients,
) -> Result<(Tensor, ConvParams)> {
    let out = adapted_conv(theta, h_in, u)?;
    Ok((out.output, out.theta_tilde))
}

/// Backward through [`adapted_conv`].
///
/// Returns the input gradient, the gradient with respect to the unadapted
/// parameters `θ` (chain rule through `alpha ⊙ θ`), and the coefficient
/// gradients.
pub fn adapted_conv_backward(
    grad_out: &Tensor,
    h_in: &Tensor,
    theta: &ConvParams,
    u: &AdaptationCoefficients,
    fwd: &AdaptedConv,
) -> Result<(Tensor, ConvGrads, AdaptationCoefficients)> {
    adapted_backward_with(grad_out, theta, u, fwd, |g, p| dilated_causal_conv1d_backward(g, h_in, p))
}

/// Backward through [`adapted_conv_on_support`].
pub(crate) fn adapted_conv_on_support_backward(
    grad_out: &Tensor,
    h_in: &Tensor,
    in_support: &Support,
    out_support: &Support,
    theta: &ConvParams,
    u: &AdaptationCoefficients,
    fwd: &AdaptedConv,
) -> Result<(Tensor, ConvGrads, AdaptationCoefficients)> {
    adapted_backward_with(grad_out, theta, u, fwd, |g, p| {
        conv_on_support_backward(g, h_in, in_support, p, out_support)
    })
}

fn adapted_backward_with(
    grad_out: &Tensor,
    theta: &ConvParams,
    u: &AdaptationCoefficients,
    fwd: &AdaptedConv,
    conv_backward: impl FnOnce(&Tensor, &ConvParams) -> Result<(Tensor, ConvGrads)>,
) -> Result<(Tensor, ConvGrads, AdaptationCoefficients)> {
    let (grad_pre, grad_beta) = scale_channels_backward(grad_out, &fwd.pre_scale, &u.beta)?;
    let (grad_in, tilde) = conv_backward(&grad_pre, &fwd.theta_tilde)?;

    let per_filter = theta.in_channels() * theta.kernel_size();
    let mut grad_w = tilde.weight;
    let mut grad_alpha_w = Vec::with_capacity(u.alpha_w.len());
    for ((gf, wf), &a) in grad_w
        .data_mut()
        .chunks_exact_mut(per_filter)
        .zip(theta.weight.data().chunks_exact(per_filter))
        .zip(&u.alpha_w)
    {
        grad_alpha_w.push(crate::tensor::linear_dot(gf, wf));
        gf.iter_mut().for_each(|g| *g *= a);
    }
    let mut grad_b = tilde.bias;
    let mut grad_alpha_b = Vec::with_capacity(u.alpha_b.len());
    for ((gb, &b), &a) in grad_b.data_mut().iter_mut().zip(theta.bias.data()).zip(&u.alpha_b) {
        grad_alpha_b.push(*gb * b);
        *gb *= a;
    }
    Ok((
        grad_in,
        ConvGrads {
            weight: grad_w,
            bias: grad_b,
        },
        AdaptationCoefficients {
            alpha_w: grad_alpha_w,
            alpha_b: grad_alpha_b,
            beta: grad_beta,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn setup(seed: u64) -> (ConvParams, Tensor, AdaptationCoefficients) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = ConvParams::new(random(&[3, 2, 3], &mut rng), random(&[3], &mut rng), 2).unwrap();
        let x = random(&[2, 6], &mut rng);
        let mut coeff = || (0..3).map(|_| rng.random_range(0.2..1.8)).collect::<Vec<_>>();
        let u = AdaptationCoefficients {
            alpha_w: coeff(),
            alpha_b: coeff(),
            beta: coeff(),
        };
        (theta, x, u)
    }

    #[test]
    fn identity_coefficients_are_exact() {
        let (theta, x, _) = setup(1);
        let (h, tilde) = adapt_layer(&theta, &x, &AdaptationCoefficients::identity(3)).unwrap();
        assert_eq!(h, dilated_causal_conv1d(&x, &theta).unwrap());
        assert_eq!(tilde, theta);
    }

    #[test]
    fn zero_beta_silences_output() {
        let (theta, x, mut u) = setup(2);
        u.beta = vec![0.0; 3];
        let (h, _) = adapt_layer(&theta, &x, &u).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    /// Independent route: by linearity, conv with scaled filter `o` equals
    /// `alpha_w[o] · (conv without bias) + alpha_b[o] · bias`, then times `beta[o]`.
    #[test]
    fn matches_diagonal_scaling_oracle() {
        let (theta, x, u) = setup(3);
        let no_bias = ConvParams { bias: Tensor::zeros(&[3]), ..theta.clone() };
        let raw = dilated_causal_conv1d(&x, &no_bias).unwrap();
        let (h, _) = adapt_layer(&theta, &x, &u).unwrap();
        for o in 0..3 {
            for t in 0..6 {
                let expect = u.beta[o] * (u.alpha_w[o] * raw.get2(o, t) + u.alpha_b[o] * theta.bias.data()[o]);
                assert!((h.get2(o, t) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn packing_round_trips() {
        let (_, _, u) = setup(4);
        assert_eq!(AdaptationCoefficients::from_packed(&u.packed()), u);
        let block = BlockAdaptation { conv1: u.clone(), conv2: AdaptationCoefficients::filled(3, 0.5) };
        let packed = block.packed();
        assert_eq!(packed.len(), BlockAdaptation::dim_for(3));
        assert_eq!(BlockAdaptation::from_packed(&packed), block);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let (theta, x, _) = setup(5);
        assert!(adapt_layer(&theta, &x, &AdaptationCoefficients::identity(2)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (theta, x, u) = setup(6);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let probe = random(&[3, 6], &mut rng);
        let loss = |theta: &ConvParams, x: &Tensor, u: &AdaptationCoefficients| -> f64 {
            let (h, _) = adapt_layer(theta, x, u).unwrap();
            h.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let fwd = adapted_conv(&theta, &x, &u).unwrap();
        let (gx, g, gu) = adapted_conv_backward(&probe, &x, &theta, &u, &fwd).unwrap();

        let nx = central_difference(&x, 1e-5, |xx| loss(&theta, xx, &u));
        assert!(relative_error(gx.data(), nx.data()) < 1e-6);
        let nw = central_difference(&theta.weight, 1e-5, |w| {
            loss(&ConvParams { weight: w.clone(), ..theta.clone() }, &x, &u)
        });
        assert!(relative_error(g.weight.data(), nw.data()) < 1e-6);
        let nb = central_difference(&theta.bias, 1e-5, |b| {
            loss(&ConvParams { bias: b.clone(), ..theta.clone() }, &x, &u)
        });
        assert!(relative_error(g.bias.data(), nb.data()) < 1e-6);
        let packed = Tensor::vector(u.packed()).unwrap();
        let nu = central_difference(&packed, 1e-5, |p| {
            loss(&theta, &x, &AdaptationCoefficients::from_packed(p.data()))
        });
        assert!(relative_error(&gu.packed(), nu.data()) < 1e-6);
    }
}
