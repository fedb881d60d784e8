//! Dilated causal 1-D convolution over `[channels × time]` inputs.
//!
//! Causality comes from left zero-padding by `(K − 1) · dilation`: tap `k`
//! of the kernel reads `input[t − (K − 1 − k) · dilation]`, so the last tap
//! is aligned with the current step. Implemented as direct summation.

use serde::{Deserialize, Serialize};

use super::gemm::{gemm_acc, transpose, View};
use super::{check_dim, Result, Tensor, TensorError};

/// Weights `[C_out × C_in × K]`, bias `[C_out]` and dilation of one convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub dilation: usize,
}

/// Gradients of a convolution's weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Tensor, dilation: usize) -> Result<Self> {
        let op = "ConvParams::new";
        weight.ensure_rank(op, 3)?;
        bias.ensure_rank(op, 1)?;
        check_dim(op, "C_out", weight.dim(0), bias.dim(0))?;
        if dilation == 0 {
            return Err(TensorError::InvalidParameter {
                op,
                msg: "dilation must be at least 1".into(),
            });
        }
        if weight.dim(2) == 0 {
            return Err(TensorError::InvalidParameter {
                op,
                msg: "kernel width must be at least 1".into(),
            });
        }
        Ok(ConvParams {
            weight,
            bias,
            dilation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.dim(2)
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Temporal offset read by kernel tap `k`.
    #[inline]
    fn shift(&self, k: usize) -> usize {
        (self.kernel_size() - 1 - k) * self.dilation
    }
}

fn check_input(op: &'static str, input: &Tensor, params: &ConvParams) -> Result<usize> {
    input.ensure_rank(op, 2)?;
    check_dim(op, "C_in", params.in_channels(), input.dim(0))?;
    let t = input.dim(1);
    if t == 0 {
        return Err(TensorError::InvalidParameter {
            op,
            msg: "input must have at least one time step".into(),
        });
    }
    Ok(t)
}

/// Weights of kernel tap `tap` as a contiguous `[C_out × C_in]` matrix.
fn tap_matrix(params: &ConvParams, tap: usize) -> Vec<f64> {
    let k = params.kernel_size();
    params.weight.data().iter().skip(tap).step_by(k).copied().collect()
}

/// `out[o, t] = bias[o] + Σ_i Σ_k weight[o, i, k] · input[i, t − (K−1−k)·dilation]`.
///
/// Each tap contributes one shifted matrix product, summed directly.
pub fn dilated_causal_conv1d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    const OP: &str = "dilated_causal_conv1d";
    let t = check_input(OP, input, params)?;
    let (c_out, c_in) = (params.out_channels(), params.in_channels());
    let mut out = vec![0.0; c_out * t];
    for (row, &b) in out.chunks_exact_mut(t).zip(params.bias.data()) {
        row.fill(b);
    }
    for tap in 0..params.kernel_size() {
        let s = params.shift(tap);
        if s >= t {
            continue;
        }
        let w = tap_matrix(params, tap);
        gemm_acc(
            c_out,
            t - s,
            c_in,
            View { data: &w, stride: c_in },
            View { data: input.data(), stride: t },
            &mut out[s..],
            t,
        );
    }
    let out = Tensor::from_parts(vec![c_out, t], out);
    out.ensure_finite(OP)?;
    Ok(out)
}

/// Gradients of [`dilated_causal_conv1d`] with respect to input, weight and bias.
pub fn dilated_causal_conv1d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    params: &ConvParams,
) -> Result<(Tensor, ConvGrads)> {
    const OP: &str = "dilated_causal_conv1d_backward";
    let t = check_input(OP, input, params)?;
    grad_out.ensure_rank(OP, 2)?;
    check_dim(OP, "C_out", params.out_channels(), grad_out.dim(0))?;
    check_dim(OP, "T", t, grad_out.dim(1))?;
    let (c_out, c_in, k) = (
        params.out_channels(),
        params.in_channels(),
        params.kernel_size(),
    );
    let g = grad_out.data();
    let x_t = transpose(input.data(), c_in, t);

    let mut grad_in = vec![0.0; c_in * t];
    let mut grad_w = vec![0.0; params.weight.len()];
    let grad_b: Vec<f64> = g.chunks_exact(t).map(|row| row.iter().sum()).collect();
    let mut gw_tap = vec![0.0; c_out * c_in];
    for tap in 0..k {
        let s = params.shift(tap);
        if s >= t {
            continue;
        }
        let w_t = transpose(&tap_matrix(params, tap), c_out, c_in);
        gemm_acc(
            c_in,
            t - s,
            c_out,
            View { data: &w_t, stride: c_out },
            View { data: &g[s..], stride: t },
            &mut grad_in,
            t,
        );
        gw_tap.fill(0.0);
        gemm_acc(
            c_out,
            c_in,
            t - s,
            View { data: &g[s..], stride: t },
            View { data: &x_t, stride: c_in },
            &mut gw_tap,
            c_in,
        );
        for (dst, v) in grad_w.iter_mut().skip(tap).step_by(k).zip(&gw_tap) {
            *dst = *v;
        }
    }
    let grad_in = Tensor::from_parts(vec![c_in, t], grad_in);
    let grads = ConvGrads {
        weight: Tensor::from_parts(params.weight.shape().to_vec(), grad_w),
        bias: Tensor::from_parts(vec![c_out], grad_b),
    };
    grad_in.ensure_finite(OP)?;
    grads.weight.ensure_finite(OP)?;
    Ok((grad_in, grads))
}

/// Time support of a compact activation: column `j` holds step `positions[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Support {
    positions: Vec<usize>,
    /// `slot[t]` is the column of step `t`, if present.
    slot: Vec<Option<usize>>,
}

impl Support {
    /// `positions` must be strictly increasing.
    pub fn new(positions: Vec<usize>) -> Self {
        debug_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let len = positions.last().map_or(0, |&p| p + 1);
        let mut slot = vec![None; len];
        for (j, &p) in positions.iter().enumerate() {
            slot[p] = Some(j);
        }
        Support { positions, slot }
    }

    pub fn dense(t: usize) -> Self {
        Self::new((0..t).collect())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn slot(&self, t: usize) -> Option<usize> {
        self.slot.get(t).copied().flatten()
    }

    /// Steps read by a causal convolution producing `self`.
    pub fn receptive(&self, kernel: usize, dilation: usize) -> Support {
        let mut hit = vec![false; self.slot.len()];
        for &p in &self.positions {
            for j in 0..kernel {
                if let Some(src) = p.checked_sub(j * dilation) {
                    hit[src] = true;
                }
            }
        }
        Self::new(hit.iter().enumerate().filter_map(|(t, &h)| h.then_some(t)).collect())
    }

    pub fn union(&self, other: &Support) -> Support {
        let mut v: Vec<usize> = self.positions.iter().chain(&other.positions).copied().collect();
        v.sort_unstable();
        v.dedup();
        Self::new(v)
    }

    /// `[C × len]` block of input columns read by one tap with shift `s`,
    /// zero where the step is absent, as `[len × C]` when `transposed`.
    fn gather(&self, input: &[f64], from: &Support, s: usize, rows: usize, transposed: bool) -> Vec<f64> {
        let (n, m) = (self.len(), from.len());
        let mut out = vec![0.0; rows * n];
        for (j, &p) in self.positions.iter().enumerate() {
            let Some(src) = p.checked_sub(s).and_then(|t| from.slot(t)) else { continue };
            for r in 0..rows {
                let v = input[r * m + src];
                if transposed {
                    out[j * rows + r] = v;
                } else {
                    out[r * n + j] = v;
                }
            }
        }
        out
    }
}

/// [`dilated_causal_conv1d`] evaluated only at the steps of `out_support`,
/// reading an input held on `in_support`. Steps the convolution needs that
/// are missing from `in_support` are treated as zero padding.
pub(crate) fn conv_on_support(
    input: &Tensor,
    in_support: &Support,
    params: &ConvParams,
    out_support: &Support,
) -> Result<Tensor> {
    const OP: &str = "conv_on_support";
    check_input(OP, input, params)?;
    check_dim(OP, "T", in_support.len(), input.dim(1))?;
    let (c_out, c_in, n) = (params.out_channels(), params.in_channels(), out_support.len());
    let mut out = vec![0.0; c_out * n];
    for (row, &b) in out.chunks_exact_mut(n).zip(params.bias.data()) {
        row.fill(b);
    }
    for tap in 0..params.kernel_size() {
        let x = out_support.gather(input.data(), in_support, params.shift(tap), c_in, false);
        let w = tap_matrix(params, tap);
        gemm_acc(c_out, n, c_in, View { data: &w, stride: c_in }, View { data: &x, stride: n }, &mut out, n);
    }
    let out = Tensor::from_parts(vec![c_out, n], out);
    out.ensure_finite(OP)?;
    Ok(out)
}

/// Gradients of [`conv_on_support`]; the input gradient lives on `in_support`.
pub(crate) fn conv_on_support_backward(
    grad_out: &Tensor,
    input: &Tensor,
    in_support: &Support,
    params: &ConvParams,
    out_support: &Support,
) -> Result<(Tensor, ConvGrads)> {
    const OP: &str = "conv_on_support_backward";
    check_input(OP, input, params)?;
    check_dim(OP, "T", in_support.len(), input.dim(1))?;
    grad_out.ensure_rank(OP, 2)?;
    check_dim(OP, "C_out", params.out_channels(), grad_out.dim(0))?;
    check_dim(OP, "T_out", out_support.len(), grad_out.dim(1))?;
    let (c_out, c_in, k) = (params.out_channels(), params.in_channels(), params.kernel_size());
    let (n, m) = (out_support.len(), in_support.len());
    let g = grad_out.data();

    let mut grad_in = vec![0.0; c_in * m];
    let mut grad_w = vec![0.0; params.weight.len()];
    let grad_b: Vec<f64> = g.chunks_exact(n).map(|row| row.iter().sum()).collect();
    let mut gw_tap = vec![0.0; c_out * c_in];
    let mut gx_tap = vec![0.0; c_in * n];
    for tap in 0..k {
        let s = params.shift(tap);
        let x_t = out_support.gather(input.data(), in_support, s, c_in, true);
        gw_tap.fill(0.0);
        gemm_acc(c_out, c_in, n, View { data: g, stride: n }, View { data: &x_t, stride: c_in }, &mut gw_tap, c_in);
        for (dst, v) in grad_w.iter_mut().skip(tap).step_by(k).zip(&gw_tap) {
            *dst = *v;
        }

        let w_t = transpose(&tap_matrix(params, tap), c_out, c_in);
        gx_tap.fill(0.0);
        gemm_acc(c_in, n, c_out, View { data: &w_t, stride: c_out }, View { data: g, stride: n }, &mut gx_tap, n);
        for (j, &p) in out_support.positions().iter().enumerate() {
            let Some(dst) = p.checked_sub(s).and_then(|t| in_support.slot(t)) else { continue };
            for r in 0..c_in {
                grad_in[r * m + dst] += gx_tap[r * n + j];
            }
        }
    }
    let grad_in = Tensor::from_parts(vec![c_in, m], grad_in);
    let grads = ConvGrads {
        weight: Tensor::from_parts(params.weight.shape().to_vec(), grad_w),
        bias: Tensor::from_parts(vec![c_out], grad_b),
    };
    grad_in.ensure_finite(OP)?;
    grads.weight.ensure_finite(OP)?;
    Ok((grad_in, grads))
}
