//! Piecewise-stationary AR(1) streams with abrupt or gradual concept drift.
//!
//! A stream is a set of independent AR(1) processes, each active over a
//! span of time steps. At every step the value is the mean of the processes
//! active there, so overlapping spans produce blend regions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ar::ArCoefficient;
use crate::error::{Error, Result};

pub const S_ABRUPT_PHIS: [f64; 6] = [0.1, 0.4, 0.6, 0.1, 0.4, 0.6];
pub const S_ABRUPT_SEGMENT: usize = 1000;
/// Change points of the gradual stream, ending with its length.
pub const S_GRADUAL_BOUNDARIES: [usize; 11] =
    [800, 1000, 1600, 1800, 2400, 2600, 3200, 3400, 4000, 4200, 5000];

/// One AR process active on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessSpan {
    pub coefficient: ArCoefficient,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub spans: Vec<ProcessSpan>,
    pub seed: u64,
}

impl StreamSpec {
    /// Six back-to-back 1000-step segments.
    pub fn s_abrupt(seed: u64) -> Self {
        let spans = S_ABRUPT_PHIS
            .iter()
            .enumerate()
            .map(|(i, &phi)| ProcessSpan {
                coefficient: ArCoefficient::new(phi, 1.0).expect("constant coefficients are stationary"),
                start: i * S_ABRUPT_SEGMENT,
                end: (i + 1) * S_ABRUPT_SEGMENT,
            })
            .collect();
        StreamSpec { spans, seed }
    }

    /// Six tasks where each hand-over is a 200-step average of the outgoing
    /// and incoming processes.
    pub fn s_gradual(seed: u64) -> Self {
        let b = S_GRADUAL_BOUNDARIES;
        let ranges = [(0, b[1]), (b[0], b[3]), (b[2], b[5]), (b[4], b[7]), (b[6], b[9]), (b[8], b[10])];
        let spans = ranges
            .iter()
            .zip(S_ABRUPT_PHIS)
            .map(|(&(start, end), phi)| ProcessSpan {
                coefficient: ArCoefficient::new(phi, 1.0).expect("constant coefficients are stationary"),
                start,
                end,
            })
            .collect();
        StreamSpec { spans, seed }
    }

    pub fn len(&self) -> usize {
        self.spans.iter().map(|s| s.end).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interior points where the set of active processes changes.
    pub fn boundaries(&self) -> Vec<usize> {
        let total = self.len();
        let mut out: Vec<usize> = self
            .spans
            .iter()
            .flat_map(|s| [s.start, s.end])
            .filter(|&p| p > 0 && p < total)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.spans.is_empty() {
            return Err(Error::Data("stream needs at least one process".into()));
        }
        for (i, s) in self.spans.iter().enumerate() {
            if s.end <= s.start {
                return Err(Error::Data(format!("process {i} has empty span [{}, {})", s.start, s.end)));
            }
        }
        let total = self.len();
        let mut covered = vec![false; total];
        for s in &self.spans {
            covered[s.start..s.end].iter_mut().for_each(|c| *c = true);
        }
        if let Some(t) = covered.iter().position(|&c| !c) {
            return Err(Error::Data(format!("no process is active at step {t}")));
        }
        Ok(())
    }

    /// Processes are drawn in span order from one seeded generator.
    pub fn generate(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let total = self.len();
        let mut sum = vec![0.0; total];
        let mut count = vec![0u32; total];
        for s in &self.spans {
            let x = s.coefficient.sample(s.end - s.start, &mut rng);
            for (t, v) in (s.start..s.end).zip(x) {
                sum[t] += v;
                count[t] += 1;
            }
        }
        Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
    }
}

/// The 6000-step abrupt-drift stream.
pub fn gen_s_abrupt(seed: u64) -> Vec<f64> {
    StreamSpec::s_abrupt(seed).generate().expect("built-in spec is valid")
}

/// The 5000-step gradual-drift stream.
pub fn gen_s_gradual(seed: u64) -> Vec<f64> {
    StreamSpec::s_gradual(seed).generate().expect("built-in spec is valid")
}

#[cfg(test)]
mod tests {
    use super::super::ar::lag1_autocorrelation;
    use super::*;

    fn variance(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn abrupt_layout() {
        let spec = StreamSpec::s_abrupt(1);
        assert_eq!(spec.len(), 6000);
        assert_eq!(spec.boundaries(), vec![1000, 2000, 3000, 4000, 5000]);
        assert_eq!(spec.spans[0].coefficient.phi, spec.spans[3].coefficient.phi);
        assert_eq!(gen_s_abrupt(1).len(), 6000);
    }

    #[test]
    fn gradual_layout() {
        let spec = StreamSpec::s_gradual(1);
        assert_eq!(spec.len(), 5000);
        let mut b = spec.boundaries();
        b.push(spec.len());
        assert_eq!(b, S_GRADUAL_BOUNDARIES.to_vec());
        assert_eq!(gen_s_gradual(1).len(), 5000);
    }

    #[test]
    fn abrupt_segments_follow_their_coefficient() {
        let x = gen_s_abrupt(7);
        for (i, phi) in S_ABRUPT_PHIS.iter().enumerate() {
            let seg = &x[i * 1000..(i + 1) * 1000];
            let r = lag1_autocorrelation(seg);
            assert!((r - phi).abs() < 0.08, "segment {i}: {r} vs {phi}");
        }
    }

    #[test]
    fn blend_variance_is_quarter_of_sum() {
        // Pool the three 0.4/0.6 style blends across seeds for a stable estimate.
        let spec = StreamSpec::s_gradual(0);
        let phis = S_ABRUPT_PHIS;
        let blends = [(800usize, 1000usize, 0usize), (1600, 1800, 1), (2400, 2600, 2), (3200, 3400, 3), (4000, 4200, 4)];
        let mut ratios = Vec::new();
        for &(a, b, j) in &blends {
            let mut vals = Vec::new();
            for seed in 0..40 {
                let x = StreamSpec { seed, ..spec.clone() }.generate().unwrap();
                vals.extend_from_slice(&x[a..b]);
            }
            let v1 = 1.0 / (1.0 - phis[j] * phis[j]);
            let v2 = 1.0 / (1.0 - phis[j + 1] * phis[j + 1]);
            ratios.push(variance(&vals) / (0.25 * (v1 + v2)));
        }
        for r in ratios {
            assert!((r - 1.0).abs() < 0.15, "ratio {r}");
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(gen_s_gradual(3), gen_s_gradual(3));
        assert_ne!(gen_s_abrupt(3), gen_s_abrupt(4));
    }

    #[test]
    fn rejects_gaps() {
        let c = ArCoefficient::new(0.1, 1.0).unwrap();
        let spec = StreamSpec {
            spans: vec![ProcessSpan { coefficient: c, start: 0, end: 5 }, ProcessSpan { coefficient: c, start: 6, end: 9 }],
            seed: 0,
        };
        assert!(spec.generate().is_err());
    }
}
