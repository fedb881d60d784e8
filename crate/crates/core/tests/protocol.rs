use std::collections::VecDeque;

use fsnet_core::data::{gen_ar1, split_and_normalize, window_iter, Series, StreamSample};
use fsnet_core::harness::{online_run, warmup_train, Learner, ParamCounts, RunOptions, StepReport};
use fsnet_core::tensor::Tensor;
use fsnet_core::{OnlineTcn, Result, TcnConfig, TcnState};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const E: usize = 12;

fn samples(phi: f64, len: usize, h: usize, seed: u64) -> (Vec<StreamSample>, Vec<StreamSample>) {
    let series = Series::univariate("x", gen_ar1(phi, len, seed).unwrap()).unwrap();
    let split = split_and_normalize(&series, 0.25).unwrap();
    let warm = window_iter(&split.warmup(), E, h).unwrap().collect();
    let online = window_iter(&split.online_with_context(E), E, h).unwrap().collect();
    (warm, online)
}

/// Test double with a scripted forecast rule.
struct Scripted {
    state: TcnState,
    rule: Rule,
    last_target: Option<Tensor>,
    seen: Vec<f64>,
    steps: u64,
}

enum Rule {
    Zero,
    Oracle(VecDeque<Tensor>),
    LastTarget,
}

impl Scripted {
    fn new(rule: Rule, h: usize) -> Self {
        let cfg = TcnConfig::new(1, E, h).with_blocks(1).with_filters(2);
        Scripted {
            state: TcnState::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(),
            rule,
            last_target: None,
            seen: Vec::new(),
            steps: 0,
        }
    }
}

impl Learner for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn forecast(&mut self, x: &Tensor) -> Result<Tensor> {
        let h = self.state.config.horizon;
        self.seen.push(x.data()[0]);
        Ok(match &mut self.rule {
            Rule::Zero => Tensor::zeros(&[h, 1]),
            Rule::Oracle(q) => q.pop_front().expect("one target per round"),
            Rule::LastTarget => self.last_target.clone().unwrap_or_else(|| Tensor::zeros(&[h, 1])),
        })
    }

    fn learn(&mut self, y: &Tensor) -> Result<StepReport> {
        self.last_target = Some(y.clone());
        self.steps += 1;
        Ok(StepReport {
            step: self.steps,
            loss: 0.0,
            forecast: y.clone(),
            cosines: Vec::new(),
            triggers: Vec::new(),
            memory_reads: Vec::new(),
        })
    }

    fn snapshot(&self) -> &TcnState {
        &self.state
    }

    fn param_counts(&self) -> ParamCounts {
        ParamCounts::default()
    }
}

#[test]
fn oracle_forecaster_scores_zero() {
    let (_, online) = samples(0.5, 800, 3, 1);
    let targets = online.iter().map(|s| s.target.clone()).collect();
    let mut l = Scripted::new(Rule::Oracle(targets), 3);
    let m = online_run(&mut l, &online, RunOptions::default()).unwrap();
    assert_eq!(m.len(), online.len());
    assert_eq!(m.cum_mse, 0.0);
    assert_eq!(m.cum_mae, 0.0);
}

#[test]
fn zero_forecaster_scores_the_normalised_variance() {
    let (_, online) = samples(0.5, 20_000, 1, 2);
    let mut l = Scripted::new(Rule::Zero, 1);
    let m = online_run(&mut l, &online, RunOptions::default()).unwrap();
    assert!((m.cum_mse - 1.0).abs() < 0.1, "cum_mse {}", m.cum_mse);
}

#[test]
fn forecasts_precede_the_reveal() {
    // A learner that repeats the last revealed target still pays for every
    // round, so its error equals the first-difference error of the stream.
    let (_, online) = samples(0.3, 1000, 1, 3);
    let mut l = Scripted::new(Rule::LastTarget, 1);
    let m = online_run(&mut l, &online, RunOptions::default()).unwrap();
    let y: Vec<f64> = online.iter().map(|s| s.target.data()[0]).collect();
    let mut expected = y[0] * y[0];
    for t in 1..y.len() {
        expected += (y[t] - y[t - 1]).powi(2);
    }
    expected /= y.len() as f64;
    assert!((m.cum_mse - expected).abs() < 1e-12);
    assert!(m.cum_mse > 0.5);
}

#[test]
fn online_windows_continue_from_the_warmup() {
    let series = Series::univariate("x", (0..400).map(f64::from).collect()).unwrap();
    let split = split_and_normalize(&series, 0.25).unwrap();
    let online: Vec<_> = window_iter(&split.online_with_context(E), E, 2).unwrap().collect();
    let first_target = online[0].target.data()[0];
    let expected = split.normalized.row(100)[0];
    assert_eq!(first_target, expected);
    assert_eq!(online.len(), 300 - 1);
}

#[test]
fn warmup_visits_samples_in_order() {
    let (warm, _) = samples(0.5, 600, 1, 4);
    let mut l = Scripted::new(Rule::Zero, 1);
    warmup_train(&mut l, &warm).unwrap();
    let firsts: Vec<f64> = warm.iter().map(|s| s.lookback.data()[0]).collect();
    assert_eq!(l.seen, firsts);
    assert_eq!(l.steps, warm.len() as u64);
}

#[test]
fn warmup_order_changes_the_learned_model() {
    let (warm, _) = samples(0.7, 1200, 1, 5);
    let cfg = TcnConfig::new(1, E, 1).with_blocks(2).with_filters(4);
    let mut a = OnlineTcn::new(cfg, Default::default(), 9).unwrap();
    let mut b = OnlineTcn::new(cfg, Default::default(), 9).unwrap();
    warmup_train(&mut a, &warm).unwrap();
    warmup_train(&mut b, warm.iter().rev()).unwrap();
    assert_ne!(a.snapshot().params(), b.snapshot().params());
}

#[test]
fn online_tcn_learns_a_predictable_stream() {
    let (warm, online) = samples(0.9, 3000, 1, 6);
    let cfg = TcnConfig::new(1, E, 1).with_blocks(2).with_filters(8);
    let mut l = OnlineTcn::new(cfg, Default::default(), 1).unwrap();
    warmup_train(&mut l, &warm).unwrap();
    let m = online_run(&mut l, &online, RunOptions::default()).unwrap();
    let tail = &m.steps[m.len() - 500..];
    let tail_mse = tail.iter().map(|s| s.mse).sum::<f64>() / tail.len() as f64;
    // Zero forecasts score about 1 on this scale; the one-step optimum about 0.19.
    assert!(tail_mse < 0.4, "tail mse {tail_mse}");
}
