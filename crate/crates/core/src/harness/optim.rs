//! AdamW: bias-corrected Adam with decoupled, multiplicative weight decay.

use serde::{Deserialize, Serialize};

use crate::tensor::{check_dim, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates `params[i]` with `grads[i]`. Moments are allocated on the first
    /// call; later calls must pass the same tensor shapes in the same order.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[&Tensor]) -> Result<()> {
        const OP: &str = "adamw_step";
        check_dim(OP, "parameter count", params.len(), grads.len())?;
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect();
        }
        check_dim(OP, "parameter count", self.moments.len(), params.len())?;
        for ((p, g), (m, _)) in params.iter().zip(grads).zip(&self.moments) {
            p.ensure_same_shape(g, OP)?;
            check_dim(OP, "moment length", m.len(), p.len())?;
        }
        if let Some((i, _)) = grads.iter().enumerate().find(|(_, g)| g.ensure_finite(OP).is_err()) {
            return Err(TensorError::InvalidParameter {
                op: OP,
                msg: format!("non-finite gradient for parameter #{i}"),
            });
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - c.lr * c.weight_decay;
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(&mut self.moments) {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w = *w * decay - c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::vector(vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut p = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let g = Tensor::zeros(&[2]);
        opt.step(vec![&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() });
        let mut p = scalar(0.0);
        opt.step(vec![&mut p], &[&scalar(1.0)]).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn decoupled_decay_is_multiplicative() {
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() });
        let mut p = scalar(2.0);
        opt.step(vec![&mut p], &[&scalar(0.0)]).unwrap();
        assert!((p.data()[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn descends_quadratic() {
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() });
        let mut x = scalar(1.0);
        let mut last = 1.0f64;
        for _ in 0..10 {
            let g = scalar(2.0 * x.data()[0]);
            opt.step(vec![&mut x], &[&g]).unwrap();
            assert!(x.data()[0].abs() < last);
            last = x.data()[0].abs();
        }
    }

    #[test]
    fn shape_errors() {
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut p = scalar(1.0);
        assert!(opt.step(vec![&mut p], &[&Tensor::zeros(&[2])]).is_err());
        assert!(opt.step(vec![&mut p], &[]).is_err());
        let mut opt = AdamW::new(AdamWConfig::default());
        opt.step(vec![&mut p], &[&scalar(1.0)]).unwrap();
        let mut q = Tensor::zeros(&[3]);
        assert!(opt.step(vec![&mut q], &[&Tensor::zeros(&[3])]).is_err());
    }
}
