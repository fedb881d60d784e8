//! Sparse associative memory over adaptation coefficients.
//!
//! Reads attend with `softmax(M · û)`, keep the top-k weights (raw, not
//! renormalised) and return their weighted sum of rows. Writes decay every
//! row by `τ`, add `(1 − τ) · r_i · û` to each selected row `i`, then clip
//! each row to unit L2 norm.

use serde::{Deserialize, Serialize};

use crate::tensor::{check_dim, Result, Tensor, TensorError};

/// Selected rows and their softmax weights, in descending weight order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TopK {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl TopK {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn check_shapes(op: &'static str, m: &Tensor, u_hat: &[f64]) -> Result<()> {
    m.ensure_rank(op, 2)?;
    check_dim(op, "d", m.dim(1), u_hat.len())
}

/// Softmax attention of `û` over the rows of `M`, truncated to the `k`
/// largest weights. Ties go to the lower row index.
pub fn attend(m: &Tensor, u_hat: &[f64], k: usize) -> Result<TopK> {
    const OP: &str = "memory_attend";
    check_shapes(OP, m, u_hat)?;
    let n = m.dim(0);
    if k == 0 || k > n {
        return Err(TensorError::InvalidParameter {
            op: OP,
            msg: format!("top-k {k} must lie in 1..={n}"),
        });
    }
    let scores: Vec<f64> = (0..n).map(|i| crate::tensor::linear_dot(m.row(i), u_hat)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let weights: Vec<f64> = exp.iter().map(|e| e / total).collect();

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps index order among equal weights.
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    order.truncate(k);
    Ok(TopK {
        weights: order.iter().map(|&i| weights[i]).collect(),
        indices: order,
    })
}

/// `ũ = Σ_{i ∈ top-k} r[i] · M[i]`, together with the sparse weights.
pub fn memory_read(m: &Tensor, u_hat: &[f64], k: usize) -> Result<(Vec<f64>, TopK)> {
    let r = attend(m, u_hat, k)?;
    Ok((retrieve(m, &r), r))
}

fn retrieve(m: &Tensor, r: &TopK) -> Vec<f64> {
    let mut out = vec![0.0; m.dim(1)];
    for (&i, &w) in r.indices.iter().zip(&r.weights) {
        for (o, v) in out.iter_mut().zip(m.row(i)) {
            *o += w * v;
        }
    }
    out
}

/// `M ← τM + (1 − τ) r ⊗ û`, then `M[i] ← M[i] / max(1, ‖M[i]‖₂)` per row.
pub fn memory_write(m: &Tensor, u_hat: &[f64], r: &TopK, tau: f64) -> Result<Tensor> {
    const OP: &str = "memory_write";
    check_shapes(OP, m, u_hat)?;
    if let Some(&bad) = r.indices.iter().find(|&&i| i >= m.dim(0)) {
        return Err(TensorError::InvalidParameter {
            op: OP,
            msg: format!("row {bad} out of range for {} memory items", m.dim(0)),
        });
    }
    let mut out = m.clone();
    out.data_mut().iter_mut().for_each(|v| *v *= tau);
    for (&i, &w) in r.indices.iter().zip(&r.weights) {
        let scale = (1.0 - tau) * w;
        for (v, u) in out.row_mut(i).iter_mut().zip(u_hat) {
            *v += scale * u;
        }
    }
    for i in 0..out.dim(0) {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out.ensure_finite(OP)?;
    Ok(out)
}

/// One layer's memory `M ∈ R^{N×d}`, tracking whether it has been written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociativeMemory {
    items: Tensor,
    written: bool,
}

impl AssociativeMemory {
    pub fn new(n: usize, d: usize) -> Self {
        AssociativeMemory {
            items: Tensor::zeros(&[n, d]),
            written: false,
        }
    }

    pub fn items(&self) -> &Tensor {
        &self.items
    }

    pub fn is_written(&self) -> bool {
        self.written
    }

    pub fn len(&self) -> usize {
        self.items.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads from a cold memory return a zero deviation and no weights.
    pub fn read(&self, u_hat: &[f64], k: usize) -> Result<(Vec<f64>, TopK)> {
        if !self.written {
            check_shapes("memory_read", &self.items, u_hat)?;
            return Ok((vec![0.0; self.items.dim(1)], TopK::default()));
        }
        memory_read(&self.items, u_hat, k)
    }

    /// Writes `û` at the rows chosen by `r`. An empty `r` falls back to the
    /// attention computed from the current contents.
    pub fn write(&mut self, u_hat: &[f64], r: &TopK, k: usize, tau: f64) -> Result<TopK> {
        let r = if r.is_empty() {
            attend(&self.items, u_hat, k)?
        } else {
            r.clone()
        };
        self.items = memory_write(&self.items, u_hat, &r, tau)?;
        self.written = true;
        Ok(r)
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.items.dim(0))
            .map(|i| self.items.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}
