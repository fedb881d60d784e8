//! Synthetic drift streams, CSV ingestion, normalisation and windowing.

mod ar;
mod csv_io;
mod manifest;
mod normalize;
mod synthetic;
mod window;

pub use ar::{gen_ar1, lag1_autocorrelation, ArCoefficient};
pub use csv_io::{load_csv, write_csv};
pub use manifest::DatasetManifest;
pub use normalize::{split_and_normalize, NormStats, Split, STD_FLOOR};
pub use synthetic::{gen_s_abrupt, gen_s_gradual, ProcessSpan, StreamSpec};
pub use window::{window_iter, StreamSample, Windows};

use crate::error::{Error, Result};

/// A multivariate series stored row-major as `[T × n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    columns: Vec<String>,
    values: Vec<f64>,
}

impl Series {
    pub fn new(columns: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Data("a series needs at least one column".into()));
        }
        if !values.len().is_multiple_of(columns.len()) {
            return Err(Error::Data(format!(
                "{} values do not fill rows of {} columns",
                values.len(),
                columns.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at row {}", i / columns.len())));
        }
        Ok(Series { columns, values })
    }

    /// Single-column series.
    pub fn univariate(name: &str, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![name.to_string()], values)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.width();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.width()).copied()
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Series {
        let n = self.width();
        Series {
            columns: self.columns.clone(),
            values: self.values[start * n..end * n].to_vec(),
        }
    }
}
