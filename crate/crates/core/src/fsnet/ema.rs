use crate::tensor::{Result, Tensor, TensorError};

fn check_coeff(op: &'static str, coeff: f64) -> Result<()> {
    if (0.0..=1.0).contains(&coeff) {
        Ok(())
    } else {
        Err(TensorError::InvalidParameter {
            op,
            msg: format!("EMA coefficient {coeff} outside [0, 1]"),
        })
    }
}

/// `coeff · prev + (1 − coeff) · current`.
pub fn ema_update(prev: &Tensor, current: &Tensor, coeff: f64) -> Result<Tensor> {
    const OP: &str = "ema_update";
    check_coeff(OP, coeff)?;
    prev.ensure_same_shape(current, OP)?;
    let mut out = prev.clone();
    ema_in_place(out.data_mut(), current.data(), coeff);
    out.ensure_finite(OP)?;
    Ok(out)
}

/// In-place form of [`ema_update`] over equal-length slices.
pub(crate) fn ema_in_place(prev: &mut [f64], current: &[f64], coeff: f64) {
    debug_assert_eq!(prev.len(), current.len());
    let rest = 1.0 - coeff;
    for (p, c) in prev.iter_mut().zip(current) {
        *p = coeff * *p + rest * c;
    }
}
