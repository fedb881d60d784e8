use super::Series;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population mean and standard deviation per column, std floored.
    pub fn fit(series: &Series) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Data("cannot fit normalisation statistics on zero rows".into()));
        }
        let n = series.len() as f64;
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for j in 0..series.width() {
            let m = series.column(j).sum::<f64>() / n;
            let var = series.column(j).map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(NormStats { mean, std })
    }

    fn map(&self, series: &Series, f: impl Fn(f64, f64, f64) -> f64) -> Result<Series> {
        if series.width() != self.mean.len() {
            return Err(Error::Data(format!(
                "series has {} columns, statistics have {}",
                series.width(),
                self.mean.len()
            )));
        }
        let w = series.width();
        let values = series
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.mean[i % w], self.std[i % w]))
            .collect();
        Series::new(series.columns().to_vec(), values)
    }

    pub fn normalize(&self, series: &Series) -> Result<Series> {
        self.map(series, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, series: &Series) -> Result<Series> {
        self.map(series, |v, m, s| v * s + m)
    }
}

/// A normalised series split into warm-up and online portions.
#[derive(Debug, Clone)]
pub struct Split {
    /// The whole series on the normalised scale.
    pub normalized: Series,
    pub warmup_len: usize,
    pub stats: NormStats,
}

impl Split {
    pub fn warmup(&self) -> Series {
        self.normalized.slice(0, self.warmup_len)
    }

    pub fn online(&self) -> Series {
        self.normalized.slice(self.warmup_len, self.normalized.len())
    }

    /// Online portion preceded by up to `lookback` warm-up rows, so the
    /// first online target starts right after the warm-up.
    pub fn online_with_context(&self, lookback: usize) -> Series {
        let start = self.warmup_len.saturating_sub(lookback);
        self.normalized.slice(start, self.normalized.len())
    }
}

/// Splits at `floor(T · warmup_ratio)` and normalises both portions with
/// statistics of the warm-up portion only.
pub fn split_and_normalize(series: &Series, warmup_ratio: f64) -> Result<Split> {
    if !(0.0..1.0).contains(&warmup_ratio) {
        return Err(Error::Data(format!("warm-up ratio {warmup_ratio} outside [0, 1)")));
    }
    let warmup_len = (series.len() as f64 * warmup_ratio).floor() as usize;
    if warmup_len == 0 {
        return Err(Error::Data(format!(
            "series of {} rows is too short: the warm-up portion is empty",
            series.len()
        )));
    }
    if warmup_len == series.len() {
        return Err(Error::Data("series is too short: the online portion is empty".into()));
    }
    let stats = NormStats::fit(&series.slice(0, warmup_len))?;
    Ok(Split { normalized: stats.normalize(series)?, warmup_len, stats })
}
