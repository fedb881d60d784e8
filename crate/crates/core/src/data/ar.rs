use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// First-order autoregressive process `X_t = φ X_{t−1} + ε_t`, `ε_t ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArCoefficient {
    pub phi: f64,
    pub noise_sigma: f64,
}

impl ArCoefficient {
    pub fn new(phi: f64, noise_sigma: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(Error::Data(format!(
                "coefficient must satisfy |phi| < 1 (got {phi})"
            )));
        }
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Data(format!("noise sigma must be positive (got {noise_sigma})")));
        }
        Ok(ArCoefficient { phi, noise_sigma })
    }

    pub fn stationary_variance(&self) -> f64 {
        self.noise_sigma * self.noise_sigma / (1.0 - self.phi * self.phi)
    }

    /// Draws `length` values, starting from the stationary distribution.
    pub fn sample(&self, length: usize, rng: &mut impl Rng) -> Vec<f64> {
        let noise = Normal::new(0.0, self.noise_sigma).expect("sigma validated");
        let mut x = Normal::new(0.0, self.stationary_variance().sqrt())
            .expect("variance is positive")
            .sample(rng);
        let mut out = Vec::with_capacity(length);
        for _ in 0..length {
            out.push(x);
            x = self.phi * x + noise.sample(rng);
        }
        out
    }
}

/// Unit-noise AR(1) series of `length` points, deterministic in `seed`.
pub fn gen_ar1(phi: f64, length: usize, seed: u64) -> Result<Vec<f64>> {
    let ar = ArCoefficient::new(phi, 1.0)?;
    Ok(ar.sample(length, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Sample lag-1 autocorrelation.
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}
