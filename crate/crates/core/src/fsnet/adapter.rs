//! Chunked adapter mapping a layer's gradient EMA to adaptation coefficients.
//!
//! The flattened gradient is split into `d` equal chunks (the last one
//! zero-padded), every chunk goes through the same two bias-free linear maps
//! `W2 · (W1 · chunk)`, and chunk `i` yields coordinate `i` of the output.
//! Coefficients are parameterised around the identity: `u = 1 + Ω(ĝ)`, with
//! `W2` starting at zero so a fresh adapter leaves the backbone unchanged.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{linear_dot, Result, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    /// `[hidden × chunk_size]`, shared by all chunks.
    pub w1: Tensor,
    /// `[1 × hidden]`.
    pub w2: Tensor,
    input_dim: usize,
    d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub w1: Tensor,
    pub w2: Tensor,
}

/// Intermediate values of an adapter forward pass.
#[derive(Debug, Clone)]
pub struct AdapterCache {
    g_hat: Vec<f64>,
}

impl AdapterParams {
    /// `W1` fan-in uniform, `W2` zero.
    pub fn init(input_dim: usize, d: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if input_dim == 0 || d == 0 || hidden == 0 {
            return Err(TensorError::InvalidParameter {
                op: "AdapterParams::init",
                msg: "input_dim, d and hidden must all be positive".into(),
            });
        }
        let chunk = input_dim.div_ceil(d);
        let bound = 1.0 / (chunk as f64).sqrt();
        Ok(AdapterParams {
            w1: Tensor::from_fn(&[hidden, chunk], |_| rng.random_range(-bound..bound)),
            w2: Tensor::zeros(&[1, hidden]),
            input_dim,
            d,
        })
    }

    /// Builds an adapter from explicit weights.
    pub fn from_weights(w1: Tensor, w2: Tensor, input_dim: usize, d: usize) -> Result<Self> {
        const OP: &str = "AdapterParams::from_weights";
        w1.ensure_rank(OP, 2)?;
        w2.ensure_rank(OP, 2)?;
        crate::tensor::check_dim(OP, "chunk_size", input_dim.div_ceil(d.max(1)), w1.dim(1))?;
        crate::tensor::check_dim(OP, "hidden", w1.dim(0), w2.dim(1))?;
        crate::tensor::check_dim(OP, "W2 rows", 1, w2.dim(0))?;
        Ok(AdapterParams { w1, w2, input_dim, d })
    }

    pub fn chunk_size(&self) -> usize {
        self.w1.dim(1)
    }

    pub fn hidden(&self) -> usize {
        self.w1.dim(0)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.w2.len()
    }
}

/// `W2 · W1` as a length-`chunk` row: the two maps have no nonlinearity
/// between them, so each chunk's output is a single dot product.
fn collapsed(params: &AdapterParams) -> Vec<f64> {
    let chunk = params.chunk_size();
    let mut v = vec![0.0; chunk];
    for (w1_row, &w2) in params.w1.data().chunks_exact(chunk).zip(params.w2.data()) {
        for (acc, &w) in v.iter_mut().zip(w1_row) {
            *acc += w2 * w;
        }
    }
    v
}

/// Raw adapter output `Ω(ĝ)` (the deviation from identity), with its cache.
/// Chunk `i` covers `ĝ[i·chunk .. (i+1)·chunk]`; the missing tail of the last
/// chunk counts as zeros.
pub fn adapter_deviation(g_hat: &[f64], params: &AdapterParams) -> Result<(Vec<f64>, AdapterCache)> {
    crate::tensor::check_dim("adapter_forward", "gradient length", params.input_dim, g_hat.len())?;
    let v = collapsed(params);
    let mut omega: Vec<f64> = g_hat.chunks(params.chunk_size()).map(|c| linear_dot(c, &v)).collect();
    omega.resize(params.d, 0.0);
    if let Some(bad) = omega.iter().position(|x| !x.is_finite()) {
        return Err(TensorError::NonFinite { op: "adapter_forward", index: bad, value: omega[bad] });
    }
    Ok((omega, AdapterCache { g_hat: g_hat.to_vec() }))
}

/// Adaptation coefficients `u = 1 + W2 · (W1 · chunk_i(ĝ))`, length `d`.
pub fn adapter_forward(g_hat: &[f64], params: &AdapterParams) -> Result<Vec<f64>> {
    let (omega, _) = adapter_deviation(g_hat, params)?;
    Ok(omega.into_iter().map(|v| 1.0 + v).collect())
}

/// Gradients of the adapter weights given `∂ℓ/∂Ω`. The gradient EMA input is
/// treated as a constant.
///
/// With `s = Σ_i (∂ℓ/∂Ω_i) · chunk_i`, the gradients are `W2ᵀ sᵀ` for `W1`
/// and `(W1 s)ᵀ` for `W2`.
pub fn adapter_backward(
    grad_omega: &[f64],
    cache: &AdapterCache,
    params: &AdapterParams,
) -> Result<AdapterGrads> {
    const OP: &str = "adapter_backward";
    crate::tensor::check_dim(OP, "d", params.d, grad_omega.len())?;
    let (hid, chunk) = (params.hidden(), params.chunk_size());
    let mut s = vec![0.0; chunk];
    for (c, &g) in cache.g_hat.chunks(chunk).zip(grad_omega) {
        for (acc, &x) in s.iter_mut().zip(c) {
            *acc += g * x;
        }
    }
    let mut w1 = Vec::with_capacity(hid * chunk);
    for &w2 in params.w2.data() {
        w1.extend(s.iter().map(|&x| w2 * x));
    }
    let w2: Vec<f64> = params.w1.data().chunks_exact(chunk).map(|row| linear_dot(row, &s)).collect();
    let w1 = Tensor::from_parts(vec![hid, chunk], w1);
    let w2 = Tensor::from_parts(vec![1, hid], w2);
    w1.ensure_finite(OP)?;
    w2.ensure_finite(OP)?;
    Ok(AdapterGrads { w1, w2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_adapter(input_dim: usize, d: usize, hidden: usize, seed: u64) -> AdapterParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = AdapterParams::init(input_dim, d, hidden, &mut rng).unwrap();
        for v in p.w2.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn zero_gradient_gives_identity() {
        let p = random_adapter(10, 4, 5, 1);
        assert_eq!(adapter_forward(&[0.0; 10], &p).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn fresh_adapter_is_identity() {
        let p = AdapterParams::init(10, 4, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let g: Vec<f64> = (0..10).map(|i| i as f64 - 3.0).collect();
        assert_eq!(adapter_forward(&g, &p).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn unit_chunks_are_independent() {
        let p = random_adapter(6, 6, 3, 2);
        assert_eq!(p.chunk_size(), 1);
        let g = [0.3, -1.0, 2.0, 0.5, 0.0, 1.5];
        let base = adapter_forward(&g, &p).unwrap();
        let mut g2 = g;
        g2[2] = -4.0;
        let moved = adapter_forward(&g2, &p).unwrap();
        for i in 0..6 {
            assert_eq!(base[i] == moved[i], i != 2);
        }
    }

    /// Loop oracle: explicit chunk slicing with padding, then two dot-product layers.
    #[test]
    fn matches_loop_oracle_with_padding() {
        let p = random_adapter(10, 4, 5, 3);
        assert_eq!(p.chunk_size(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let g: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let chunks: [[f64; 3]; 4] = [
            [g[0], g[1], g[2]],
            [g[3], g[4], g[5]],
            [g[6], g[7], g[8]],
            [g[9], 0.0, 0.0],
        ];
        let u = adapter_forward(&g, &p).unwrap();
        for (i, chunk) in chunks.iter().enumerate() {
            let mut acc = 0.0;
            for h in 0..5 {
                let hid: f64 = (0..3).map(|j| p.w1.get2(h, j) * chunk[j]).sum();
                acc += p.w2.get2(0, h) * hid;
            }
            assert!((u[i] - (1.0 + acc)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_wrong_gradient_length() {
        let p = random_adapter(10, 4, 5, 4);
        assert!(adapter_forward(&[0.0; 9], &p).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = random_adapter(11, 4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let g: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |p: &AdapterParams| -> f64 {
            adapter_deviation(&g, p).unwrap().0.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = adapter_deviation(&g, &p).unwrap();
        let grads = adapter_backward(&probe, &cache, &p).unwrap();
        let n1 = central_difference(&p.w1, 1e-5, |w| loss(&AdapterParams { w1: w.clone(), ..p.clone() }));
        let n2 = central_difference(&p.w2, 1e-5, |w| loss(&AdapterParams { w2: w.clone(), ..p.clone() }));
        assert!(relative_error(grads.w1.data(), n1.data()) < 1e-6);
        assert!(relative_error(grads.w2.data(), n2.data()) < 1e-6);
    }
}
