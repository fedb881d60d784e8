use serde::{Deserialize, Serialize};

use super::gemm::{gemm_acc, transpose, View};
use super::{check_dim, Result, Tensor};

/// Affine map with weight `[D_out × D_in]` and bias `[D_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        const OP: &str = "LinearParams::new";
        weight.ensure_rank(OP, 2)?;
        bias.ensure_rank(OP, 1)?;
        check_dim(OP, "D_out", weight.dim(0), bias.dim(0))?;
        Ok(LinearParams { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_features(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// `x · wᵀ` for `x: [B × I]`, `w: [O × I]`, giving `[B × O]`.
pub fn matmul_nt(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    const OP: &str = "matmul_nt";
    x.ensure_rank(OP, 2)?;
    w.ensure_rank(OP, 2)?;
    check_dim(OP, "D_in", w.dim(1), x.dim(1))?;
    let (b, i, o) = (x.dim(0), x.dim(1), w.dim(0));
    let wt = transpose(w.data(), o, i);
    let mut out = vec![0.0; b * o];
    gemm_acc(b, o, i, View { data: x.data(), stride: i }, View { data: &wt, stride: o }, &mut out, o);
    let out = Tensor::from_parts(vec![b, o], out);
    out.ensure_finite(OP)?;
    Ok(out)
}

/// Gradients of [`matmul_nt`]: `(∂/∂x, ∂/∂w)`.
pub fn matmul_nt_backward(grad_out: &Tensor, x: &Tensor, w: &Tensor) -> Result<(Tensor, Tensor)> {
    const OP: &str = "matmul_nt_backward";
    grad_out.ensure_rank(OP, 2)?;
    x.ensure_rank(OP, 2)?;
    w.ensure_rank(OP, 2)?;
    check_dim(OP, "B", x.dim(0), grad_out.dim(0))?;
    check_dim(OP, "D_out", w.dim(0), grad_out.dim(1))?;
    check_dim(OP, "D_in", w.dim(1), x.dim(1))?;
    let (b, i_dim, o_dim) = (x.dim(0), x.dim(1), w.dim(0));
    let mut gx = vec![0.0; b * i_dim];
    let mut gw = vec![0.0; o_dim * i_dim];
    let g = grad_out.data();
    gemm_acc(b, i_dim, o_dim, View { data: g, stride: o_dim }, View { data: w.data(), stride: i_dim }, &mut gx, i_dim);
    let gt = transpose(g, b, o_dim);
    gemm_acc(o_dim, i_dim, b, View { data: &gt, stride: b }, View { data: x.data(), stride: i_dim }, &mut gw, i_dim);
    let gx = Tensor::from_parts(vec![b, i_dim], gx);
    let gw = Tensor::from_parts(vec![o_dim, i_dim], gw);
    gx.ensure_finite(OP)?;
    gw.ensure_finite(OP)?;
    Ok((gx, gw))
}

/// `y = x · Wᵀ + b` row by row, `x: [B × D_in]`.
pub fn linear_forward(x: &Tensor, params: &LinearParams) -> Result<Tensor> {
    let mut y = matmul_nt(x, &params.weight)?;
    let o = params.out_features();
    for row in y.data_mut().chunks_exact_mut(o) {
        for (v, b) in row.iter_mut().zip(params.bias.data()) {
            *v += b;
        }
    }
    y.ensure_finite("linear_forward")?;
    Ok(y)
}

/// Returns `(∂/∂x, parameter gradients)`.
pub fn linear_backward(
    grad_out: &Tensor,
    x: &Tensor,
    params: &LinearParams,
) -> Result<(Tensor, LinearGrads)> {
    let (gx, gw) = matmul_nt_backward(grad_out, x, &params.weight)?;
    let o = params.out_features();
    let mut gb = vec![0.0; o];
    for row in grad_out.data().chunks_exact(o) {
        for (acc, g) in gb.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok((
        gx,
        LinearGrads {
            weight: gw,
            bias: Tensor::from_parts(vec![o], gb),
        },
    ))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
