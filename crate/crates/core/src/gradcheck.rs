//! Finite-difference gradient checks.
//!
//! [`run_suite`] compares every hand-written backward pass against central
//! differences on small random instances, including a two-block adapted
//! network end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backbone::{backbone_backward, backbone_forward, mse_loss, TcnConfig, TcnState};
use crate::fsnet::adapt::{adapted_conv, adapted_conv_backward, AdaptationCoefficients, BlockAdaptation};
use crate::fsnet::adapter::{adapter_backward, adapter_deviation, AdapterParams};
use crate::tensor::{
    dilated_causal_conv1d, dilated_causal_conv1d_backward, linear_backward, linear_forward,
    mul_backward, mul_forward, relu_backward, relu_forward, scale_channels,
    scale_channels_backward, ConvParams, LinearParams, Tensor,
};

/// Step used by the suite.
pub const STEP: f64 = 1e-5;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-5;

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` for every element.
pub fn central_difference(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-8)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-8)
}

/// Worst parameter for one checked operation.
#[derive(Debug, Clone, Serialize)]
pub struct GradcheckEntry {
    pub op: &'static str,
    pub parameter: String,
    pub max_rel_error: f64,
}

impl GradcheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(GradcheckEntry::passed)
    }

    pub fn worst(&self) -> Option<&GradcheckEntry> {
        self.entries.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// One analytic/numeric gradient pair.
struct Pair {
    name: String,
    analytic: Tensor,
    numeric: Tensor,
}

fn pair(name: impl Into<String>, analytic: &Tensor, numeric: Tensor) -> Pair {
    Pair { name: name.into(), analytic: analytic.clone(), numeric }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from the ReLU kink.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.2..1.0);
        if rng.random_bool(0.5) { v } else { -v }
    })
}

fn probe_loss(y: &Tensor, probe: &Tensor) -> f64 {
    y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
}

fn check_conv(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let params = ConvParams::new(random(&[2, 2, 3], rng), random(&[2], rng), 2).expect("valid conv");
    let x = random(&[2, 5], rng);
    let probe = random(&[2, 5], rng);
    let (gx, g) = dilated_causal_conv1d_backward(&probe, &x, &params).expect("conv backward");
    let f = |x: &Tensor, p: &ConvParams| probe_loss(&dilated_causal_conv1d(x, p).unwrap(), &probe);
    vec![
        pair("input", &gx, central_difference(&x, STEP, |t| f(t, &params))),
        pair("weight", &g.weight, central_difference(&params.weight, STEP, |w| {
            f(&x, &ConvParams { weight: w.clone(), ..params.clone() })
        })),
        pair("bias", &g.bias, central_difference(&params.bias, STEP, |b| {
            f(&x, &ConvParams { bias: b.clone(), ..params.clone() })
        })),
    ]
}

fn check_linear(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let params = LinearParams::new(random(&[3, 4], rng), random(&[3], rng)).expect("valid linear");
    let x = random(&[2, 4], rng);
    let probe = random(&[2, 3], rng);
    let (gx, g) = linear_backward(&probe, &x, &params).expect("linear backward");
    let f = |x: &Tensor, p: &LinearParams| probe_loss(&linear_forward(x, p).unwrap(), &probe);
    vec![
        pair("input", &gx, central_difference(&x, STEP, |t| f(t, &params))),
        pair("weight", &g.weight, central_difference(&params.weight, STEP, |w| {
            f(&x, &LinearParams { weight: w.clone(), ..params.clone() })
        })),
        pair("bias", &g.bias, central_difference(&params.bias, STEP, |b| {
            f(&x, &LinearParams { bias: b.clone(), ..params.clone() })
        })),
    ]
}

fn check_relu(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let x = away_from_zero(&[3, 4], rng);
    let probe = random(&[3, 4], rng);
    let gx = relu_backward(&probe, &x).expect("relu backward");
    vec![pair("input", &gx, central_difference(&x, STEP, |t| probe_loss(&relu_forward(t), &probe)))]
}

fn check_mul(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let a = random(&[2, 3], rng);
    let b = random(&[2, 3], rng);
    let probe = random(&[2, 3], rng);
    let (ga, gb) = mul_backward(&probe, &a, &b).expect("mul backward");
    vec![
        pair("lhs", &ga, central_difference(&a, STEP, |t| probe_loss(&mul_forward(t, &b).unwrap(), &probe))),
        pair("rhs", &gb, central_difference(&b, STEP, |t| probe_loss(&mul_forward(&a, t).unwrap(), &probe))),
    ]
}

fn check_scale_channels(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let x = random(&[3, 4], rng);
    let s = random(&[3], rng);
    let probe = random(&[3, 4], rng);
    let (gx, gs) = scale_channels_backward(&probe, &x, s.data()).expect("scale backward");
    let gs = Tensor::from_parts(vec![3], gs);
    vec![
        pair("input", &gx, central_difference(&x, STEP, |t| {
            probe_loss(&scale_channels(t, s.data()).unwrap(), &probe)
        })),
        pair("scale", &gs, central_difference(&s, STEP, |t| {
            probe_loss(&scale_channels(&x, t.data()).unwrap(), &probe)
        })),
    ]
}

fn check_mse(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let yhat = random(&[3, 2], rng);
    let y = random(&[3, 2], rng);
    let (_, g) = mse_loss(&yhat, &y).expect("mse");
    vec![pair("forecast", &g, central_difference(&yhat, STEP, |t| mse_loss(t, &y).unwrap().0))]
}

fn check_adapted_conv(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let theta = ConvParams::new(random(&[2, 2, 3], rng), random(&[2], rng), 1).expect("valid conv");
    let x = random(&[2, 5], rng);
    let u = random(&[6], rng);
    let probe = random(&[2, 5], rng);
    let coeffs = AdaptationCoefficients::from_packed(u.data());
    let fwd = adapted_conv(&theta, &x, &coeffs).expect("adapted conv");
    let (gx, g, gu) = adapted_conv_backward(&probe, &x, &theta, &coeffs, &fwd).expect("adapted backward");
    let f = |x: &Tensor, th: &ConvParams, u: &Tensor| {
        let c = AdaptationCoefficients::from_packed(u.data());
        probe_loss(&adapted_conv(th, x, &c).unwrap().output, &probe)
    };
    vec![
        pair("input", &gx, central_difference(&x, STEP, |t| f(t, &theta, &u))),
        pair("weight", &g.weight, central_difference(&theta.weight, STEP, |w| {
            f(&x, &ConvParams { weight: w.clone(), ..theta.clone() }, &u)
        })),
        pair("bias", &g.bias, central_difference(&theta.bias, STEP, |b| {
            f(&x, &ConvParams { bias: b.clone(), ..theta.clone() }, &u)
        })),
        pair("coefficients", &Tensor::from_parts(vec![6], gu.packed()), central_difference(&u, STEP, |t| f(&x, &theta, t))),
    ]
}

fn check_adapter(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let mut p = AdapterParams::init(11, 4, 3, rng).expect("valid adapter");
    p.w2 = random(&[1, 3], rng);
    let g: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
    let probe: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |p: &AdapterParams| -> f64 {
        adapter_deviation(&g, p).unwrap().0.iter().zip(&probe).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = adapter_deviation(&g, &p).expect("adapter");
    let grads = adapter_backward(&probe, &cache, &p).expect("adapter backward");
    vec![
        pair("W1", &grads.w1, central_difference(&p.w1, STEP, |w| { let mut q = p.clone(); q.w1 = w.clone(); loss(&q) })),
        pair("W2", &grads.w2, central_difference(&p.w2, STEP, |w| { let mut q = p.clone(); q.w2 = w.clone(); loss(&q) })),
    ]
}

fn check_network(rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let cfg = TcnConfig { input_dim: 2, lookback: 8, horizon: 3, num_blocks: 2, filters: 3, kernel_size: 3 };
    let mut state = TcnState::init(cfg, rng).expect("valid config");
    for t in state.params_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    let adaptation: Vec<BlockAdaptation> = (0..2)
        .map(|_| {
            let u: Vec<f64> = (0..18).map(|_| rng.random_range(0.5..1.5)).collect();
            BlockAdaptation::from_packed(&u)
        })
        .collect();
    let x = random(&[2, 8], rng);
    let y = random(&[3, 2], rng);
    let loss = |s: &TcnState, a: &[BlockAdaptation]| {
        let (yhat, _) = backbone_forward(&x, s, Some(a)).unwrap();
        mse_loss(&yhat, &y).unwrap().0
    };
    let (yhat, cache) = backbone_forward(&x, &state, Some(&adaptation)).expect("forward");
    let (_, g) = mse_loss(&yhat, &y).expect("loss");
    let grads = backbone_backward(&cache, &g).expect("backward");

    let mut out = Vec::new();
    for (i, key) in state.param_keys().into_iter().enumerate() {
        let numeric = central_difference(state.params()[i], STEP, |t| {
            let mut s = state.clone();
            *s.params_mut()[i] = t.clone();
            loss(&s, &adaptation)
        });
        out.push(pair(format!("{key:?}"), grads.get(key), numeric));
    }
    for (b, block) in grads.blocks.iter().enumerate() {
        let analytic = Tensor::from_parts(vec![18], block.adaptation.as_ref().expect("adapted").packed());
        let u = Tensor::from_parts(vec![18], adaptation[b].packed());
        let numeric = central_difference(&u, STEP, |t| {
            let mut a = adaptation.clone();
            a[b] = BlockAdaptation::from_packed(t.data());
            loss(&state, &a)
        });
        out.push(pair(format!("Block {b} coefficients"), &analytic, numeric));
    }
    out
}

type Check = fn(&mut ChaCha8Rng) -> Vec<Pair>;

const CHECKS: [(&str, Check); 9] = [
    ("dilated_causal_conv1d", check_conv),
    ("linear", check_linear),
    ("relu", check_relu),
    ("elementwise_mul", check_mul),
    ("scale_channels", check_scale_channels),
    ("mse_loss", check_mse),
    ("adapted_conv", check_adapted_conv),
    ("adapter", check_adapter),
    ("tcn_2_block_adapted", check_network),
];

/// Names accepted by [`run_suite_with_fault`].
pub fn op_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check with a fixed seed.
pub fn run_suite(seed: u64) -> GradcheckReport {
    run_suite_with_fault(seed, None)
}

/// Like [`run_suite`], but perturbs the analytic gradient of op `fault`
/// to emulate a broken backward pass.
pub fn run_suite_with_fault(seed: u64, fault: Option<&str>) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = CHECKS
        .iter()
        .map(|&(op, check)| {
            let mut worst = GradcheckEntry { op, parameter: String::new(), max_rel_error: 0.0 };
            for mut p in check(&mut rng) {
                if fault == Some(op) {
                    p.analytic.data_mut()[0] += 1e-2 * (1.0 + p.analytic.data()[0].abs());
                }
                let err = relative_error(p.analytic.data(), p.numeric.data());
                if err >= worst.max_rel_error {
                    worst.max_rel_error = err;
                    worst.parameter = p.name;
                }
            }
            worst
        })
        .collect();
    GradcheckReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let x = Tensor::vector(vec![1.0, -2.0, 0.5]).unwrap();
        let g = central_difference(&x, 1e-5, |t| t.data().iter().map(|v| v * v).sum());
        for (a, b) in g.data().iter().zip(x.data()) {
            assert!((a - 2.0 * b).abs() < 1e-8);
        }
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0; 3], &[0.0; 3]), 0.0);
        assert!((relative_error(&[1.0], &[-1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn suite_passes() {
        let report = run_suite(0);
        assert_eq!(report.entries.len(), CHECKS.len());
        for e in &report.entries {
            assert!(e.passed(), "{} {} {}", e.op, e.parameter, e.max_rel_error);
        }
    }

    #[test]
    fn injected_fault_is_named() {
        let report = run_suite_with_fault(0, Some("adapted_conv"));
        assert!(!report.passed());
        assert_eq!(report.worst().unwrap().op, "adapted_conv");
        let failing: Vec<_> = report.entries.iter().filter(|e| !e.passed()).map(|e| e.op).collect();
        assert_eq!(failing, vec!["adapted_conv"]);
    }
}
