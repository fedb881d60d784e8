use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FsnetHyperparams {
    /// Slow gradient EMA coefficient.
    pub gamma: f64,
    /// Fast gradient EMA coefficient, also used for the coefficient EMA.
    pub gamma_prime: f64,
    /// Trigger threshold and memory blending weight.
    pub tau: f64,
    pub top_k: usize,
    pub memory_size: usize,
    pub adapter_hidden: usize,
    /// Rescale each block's gradient to unit RMS before it enters the EMAs.
    pub normalize_gradient: bool,
}

impl Default for FsnetHyperparams {
    fn default() -> Self {
        FsnetHyperparams {
            gamma: 0.9,
            gamma_prime: 0.3,
            tau: 0.75,
            top_k: 2,
            memory_size: 32,
            adapter_hidden: 32,
            normalize_gradient: true,
        }
    }
}

impl FsnetHyperparams {
    /// Lists every violated constraint. `tau = 1` is accepted and disables
    /// triggering.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0 < self.gamma_prime && self.gamma_prime < self.gamma && self.gamma < 1.0) {
            out.push(format!(
                "need 0 < gamma_prime < gamma < 1 (gamma = {}, gamma_prime = {})",
                self.gamma, self.gamma_prime
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            out.push(format!("tau must lie in (0, 1] (got {})", self.tau));
        }
        if self.memory_size == 0 {
            out.push("memory_size must be at least 1".into());
        }
        if self.top_k == 0 || self.top_k > self.memory_size {
            out.push(format!("top_k must lie in 1..=memory_size (got {} with memory_size {})", self.top_k, self.memory_size));
        }
        if self.adapter_hidden == 0 {
            out.push("adapter_hidden must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() { Ok(()) } else { Err(Error::Config(p)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(FsnetHyperparams::default().validate().is_ok());
        assert!(FsnetHyperparams { tau: 1.0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn lists_all_problems() {
        let hp = FsnetHyperparams { gamma: 0.2, tau: 0.0, top_k: 40, ..Default::default() };
        assert_eq!(hp.problems().len(), 3);
    }
}
