//! Experiment configuration and the seed-parallel runner.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baselines::{ErConfig, Er, OnlineTcn};
use super::learner::{Learner, ParamCounts};
use super::metrics::RunMetrics;
use super::optim::AdamWConfig;
use super::protocol::{online_run, warmup_train, RunOptions};
use crate::backbone::TcnConfig;
use crate::data::{gen_ar1, gen_s_abrupt, gen_s_gradual, load_csv, split_and_normalize, window_iter, Series, StreamSample};
use crate::error::{Error, Result};
use crate::fsnet::{make_variant, FsnetHyperparams, Variant};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    SAbrupt,
    SGradual,
    Ar1 { phi: f64, length: usize },
    Csv {
        path: PathBuf,
        #[serde(default)]
        feature_columns: Vec<String>,
    },
}

impl DataSpec {
    pub fn label(&self) -> String {
        match self {
            DataSpec::SAbrupt => "s-abrupt".into(),
            DataSpec::SGradual => "s-gradual".into(),
            DataSpec::Ar1 { phi, .. } => format!("ar1-{phi}"),
            DataSpec::Csv { path, .. } => path.display().to_string(),
        }
    }

    /// File-name-safe form of [`label`](Self::label); CSV data uses the file stem.
    pub fn slug(&self) -> String {
        let raw = match self {
            DataSpec::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
            other => other.label(),
        };
        raw.chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-.".contains(c) { c } else { '_' })
            .collect()
    }

    /// Generated streams depend on `seed`; CSV data does not.
    pub fn load(&self, seed: u64) -> Result<Series> {
        match self {
            DataSpec::SAbrupt => Series::univariate("x", gen_s_abrupt(seed)),
            DataSpec::SGradual => Series::univariate("x", gen_s_gradual(seed)),
            DataSpec::Ar1 { phi, length } => Series::univariate("x", gen_ar1(*phi, *length, seed)?),
            DataSpec::Csv { path, feature_columns } => load_csv(path, feature_columns),
        }
    }

    fn problems(&self) -> Vec<String> {
        match self {
            DataSpec::Ar1 { phi, length } => {
                let mut out = Vec::new();
                if !(phi.abs() < 1.0) {
                    out.push(format!("data.phi: coefficient must satisfy |phi| < 1 (got {phi})"));
                }
                if *length == 0 {
                    out.push("data.length must be positive".into());
                }
                out
            }
            DataSpec::Csv { path, .. } if !path.is_file() => {
                vec![format!("data.path: file not found: {}", path.display())]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Fsnet,
    FsnetNoMemory,
    FsnetNaive,
    FsnetLargeMemory,
    Onlinetcn,
    Er,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::Fsnet,
        LearnerKind::FsnetNoMemory,
        LearnerKind::FsnetNaive,
        LearnerKind::FsnetLargeMemory,
        LearnerKind::Onlinetcn,
        LearnerKind::Er,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LearnerKind::Fsnet => "fsnet",
            LearnerKind::FsnetNoMemory => "fsnet-no-memory",
            LearnerKind::FsnetNaive => "fsnet-naive",
            LearnerKind::FsnetLargeMemory => "fsnet-large-memory",
            LearnerKind::Onlinetcn => "onlinetcn",
            LearnerKind::Er => "er",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            LearnerKind::Fsnet => Some(Variant::Full),
            LearnerKind::FsnetNoMemory => Some(Variant::NoMemory),
            LearnerKind::FsnetNaive => Some(Variant::Naive),
            LearnerKind::FsnetLargeMemory => Some(Variant::LargeMemory),
            _ => None,
        }
    }

    pub fn from_variant(v: Variant) -> Self {
        match v {
            Variant::Full => LearnerKind::Fsnet,
            Variant::NoMemory => LearnerKind::FsnetNoMemory,
            Variant::Naive => LearnerKind::FsnetNaive,
            Variant::LargeMemory => LearnerKind::FsnetLargeMemory,
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LearnerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| {
                let names: Vec<_> = LearnerKind::ALL.iter().map(|k| k.label()).collect();
                format!("unknown learner {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub filters: usize,
    pub kernel_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { num_blocks: 10, filters: 64, kernel_size: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub learner: LearnerKind,
    pub horizon: usize,
    pub lookback: usize,
    pub warmup_ratio: f64,
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    pub fsnet: FsnetHyperparams,
    pub optimizer: AdamWConfig,
    pub er: ErConfig,
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Writes per-step trigger records.
    pub verbose: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSpec::SAbrupt,
            learner: LearnerKind::Fsnet,
            horizon: 1,
            lookback: 60,
            warmup_ratio: 0.25,
            seeds: vec![0],
            model: ModelConfig::default(),
            fsnet: FsnetHyperparams::default(),
            optimizer: AdamWConfig::default(),
            er: ErConfig::default(),
            out_dir: PathBuf::from("results"),
            threads: 1,
            verbose: false,
        }
    }
}

/// Sets `a.b.c = value` in a TOML table. The value is parsed as TOML and
/// kept as a string when that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("override key {key:?} is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override key {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text (empty for all defaults), applies overrides in
    /// order, and rejects unknown keys.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::Config(msgs) => Error::Config(msgs.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Every violated constraint.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.data.problems();
        if self.horizon == 0 {
            out.push("horizon must be at least 1".into());
        }
        if self.lookback == 0 {
            out.push("lookback must be at least 1".into());
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            out.push(format!("warmup_ratio must lie in (0, 1) (got {})", self.warmup_ratio));
        }
        if self.seeds.is_empty() {
            out.push("seeds must not be empty".into());
        }
        if self.threads == 0 {
            out.push("threads must be at least 1".into());
        }
        let m = self.model;
        for (name, v) in [("model.num_blocks", m.num_blocks), ("model.filters", m.filters), ("model.kernel_size", m.kernel_size)] {
            if v == 0 {
                out.push(format!("{name} must be at least 1"));
            }
        }
        if m.num_blocks > 30 {
            out.push("model.num_blocks must be at most 30".into());
        }
        if self.learner.variant().is_some() {
            out.extend(self.fsnet.problems().into_iter().map(|p| format!("fsnet: {p}")));
        }
        if self.learner == LearnerKind::Er {
            out.extend(self.er.problems());
        }
        let o = self.optimizer;
        if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
            out.push("optimizer: need lr > 0, betas in [0, 1), eps > 0, weight_decay >= 0".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() { Ok(()) } else { Err(Error::Config(p)) }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn tcn_config(&self, input_dim: usize) -> TcnConfig {
        TcnConfig {
            input_dim,
            lookback: self.lookback,
            horizon: self.horizon,
            num_blocks: self.model.num_blocks,
            filters: self.model.filters,
            kernel_size: self.model.kernel_size,
        }
    }

    /// Stem shared by every output file of this configuration.
    pub fn stem(&self) -> String {
        format!("{}_{}_H{}", self.data.slug(), self.learner.label(), self.horizon)
    }
}

/// A fresh learner of the configured kind for `seed`.
pub fn build_learner(config: &ExperimentConfig, input_dim: usize, seed: u64) -> Result<Box<dyn Learner>> {
    let tcn = config.tcn_config(input_dim);
    Ok(match config.learner {
        LearnerKind::Onlinetcn => Box::new(OnlineTcn::new(tcn, config.optimizer, seed)?),
        LearnerKind::Er => Box::new(Er::new(tcn, config.optimizer, config.er, seed)?),
        kind => Box::new(make_variant(kind.variant().expect("fsnet kind"), tcn, config.fsnet, config.optimizer, seed)?),
    })
}

/// Warm-up and online windows for one seed.
pub struct PreparedData {
    pub warmup: Vec<StreamSample>,
    pub online: Vec<StreamSample>,
    pub input_dim: usize,
}

pub fn prepare_data(config: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let series = config.data.load(seed)?;
    let split = split_and_normalize(&series, config.warmup_ratio)?;
    let (e, h) = (config.lookback, config.horizon);
    let warmup = split.warmup();
    if warmup.len() < e + h {
        return Err(Error::Data(format!(
            "warm-up portion has {} rows, fewer than look-back {e} + horizon {h}",
            warmup.len()
        )));
    }
    let online_src = split.online_with_context(e);
    Ok(PreparedData {
        warmup: window_iter(&warmup, e, h)?.collect(),
        online: window_iter(&online_src, e, h)?.collect(),
        input_dim: series.width(),
    })
}

/// Result of one (configuration, seed) cell.
#[derive(Debug)]
pub struct CellResult {
    pub seed: u64,
    pub metrics: RunMetrics,
    pub param_counts: ParamCounts,
    /// Set when the learner diverged; `metrics` then covers the rounds before it.
    pub aborted: Option<Error>,
}

/// Warm-up followed by the online run, without writing files.
pub fn run_cell(config: &ExperimentConfig, seed: u64) -> Result<CellResult> {
    let data = prepare_data(config, seed)?;
    let mut learner = build_learner(config, data.input_dim, seed)?;
    warmup_train(learner.as_mut(), &data.warmup)?;
    let options = RunOptions { record_events: config.verbose };
    let (metrics, aborted) = match online_run(learner.as_mut(), &data.online, options) {
        Ok(m) => (m, None),
        Err(a) => (a.metrics, Some(a.error)),
    };
    Ok(CellResult { seed, metrics, param_counts: learner.param_counts(), aborted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub cum_mse: f64,
    pub cum_mae: f64,
    pub online_steps: usize,
    pub trigger_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub learner: String,
    pub data: String,
    pub horizon: usize,
    pub lookback: usize,
    pub seeds: Vec<SeedResult>,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub param_counts: ParamCounts,
    pub wall_time_secs: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn metrics_path(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config.out_dir.join(format!("{}_seed{seed}.metrics.jsonl", config.stem()))
}

pub fn loss_curve_path(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config.out_dir.join(format!("{}_seed{seed}.loss_curve.csv", config.stem()))
}

pub fn triggers_path(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config.out_dir.join(format!("{}_seed{seed}.triggers.jsonl", config.stem()))
}

pub fn summary_path(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join(format!("{}.summary.json", config.stem()))
}

fn write_cell(config: &ExperimentConfig, cell: &CellResult) -> Result<()> {
    write_atomic(&metrics_path(config, cell.seed), cell.metrics.to_jsonl().as_bytes())?;
    write_atomic(&loss_curve_path(config, cell.seed), cell.metrics.loss_curve_csv().as_bytes())?;
    if config.verbose {
        write_atomic(&triggers_path(config, cell.seed), cell.metrics.events_jsonl().as_bytes())?;
    }
    Ok(())
}

/// Validates, runs every seed (in parallel up to `threads`), writes the
/// per-seed files and the summary, and returns the summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let cells: Vec<Result<CellResult>> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let cell = run_cell(config, seed)?;
                write_cell(config, &cell)?;
                Ok(cell)
            })
            .collect()
    });
    let mut done = Vec::with_capacity(cells.len());
    for c in cells {
        let mut c = c?;
        if let Some(e) = c.aborted.take() {
            return Err(e);
        }
        done.push(c);
    }

    let seeds: Vec<SeedResult> = done
        .iter()
        .map(|c| SeedResult {
            seed: c.seed,
            cum_mse: c.metrics.cum_mse,
            cum_mae: c.metrics.cum_mae,
            online_steps: c.metrics.len(),
            trigger_events: c.metrics.total_triggers(),
        })
        .collect();
    let (mean_mse, std_mse) = mean_std(&seeds.iter().map(|s| s.cum_mse).collect::<Vec<_>>());
    let (mean_mae, std_mae) = mean_std(&seeds.iter().map(|s| s.cum_mae).collect::<Vec<_>>());
    let summary = ExperimentSummary {
        config_hash: config.hash(),
        learner: config.learner.label().into(),
        data: config.data.label(),
        horizon: config.horizon,
        lookback: config.lookback,
        seeds,
        mean_mse,
        std_mse,
        mean_mae,
        std_mae,
        param_counts: done[0].param_counts,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    write_atomic(&summary_path(config), json.as_bytes())?;
    Ok(summary)
}
