use super::Series;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A look-back window `[n × E]` and the following `H` rows `[H × n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub lookback: Tensor,
    pub target: Tensor,
    /// Position of the first look-back row in the source series.
    pub index: usize,
}

/// Stride-1 sliding windows over a series.
#[derive(Debug, Clone)]
pub struct Windows<'a> {
    series: &'a Series,
    lookback: usize,
    horizon: usize,
    next: usize,
    count: usize,
}

impl Iterator for Windows<'_> {
    type Item = StreamSample;

    fn next(&mut self) -> Option<StreamSample> {
        if self.next >= self.count {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let (s, e, h) = (self.series, self.lookback, self.horizon);
        let n = s.width();
        let lookback = Tensor::from_fn(&[n, e], |k| s.row(i + k % e)[k / e]);
        let target = Tensor::new(vec![h, n], s.values()[(i + e) * n..(i + e + h) * n].to_vec())
            .expect("series values are finite");
        Some(StreamSample { lookback, target, index: i })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Windows<'_> {}

/// Sample `i` covers rows `[i, i+E)` as input and `[i+E, i+E+H)` as target.
pub fn window_iter(series: &Series, lookback: usize, horizon: usize) -> Result<Windows<'_>> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::Data("look-back and horizon must be positive".into()));
    }
    if series.len() < lookback + horizon {
        return Err(Error::Data(format!(
            "series of {} rows is shorter than look-back {lookback} + horizon {horizon}",
            series.len()
        )));
    }
    Ok(Windows {
        series,
        lookback,
        horizon,
        next: 0,
        count: series.len() - lookback - horizon + 1,
    })
}
