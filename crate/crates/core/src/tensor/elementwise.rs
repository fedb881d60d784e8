use super::{check_dim, Result, Tensor};

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor::from_parts(
        x.shape().to_vec(),
        x.data().iter().map(|&v| v.max(0.0)).collect(),
    )
}

/// Passes `grad_out` where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    grad_out.ensure_same_shape(input, "relu_backward")?;
    Ok(Tensor::from_parts(
        input.shape().to_vec(),
        grad_out
            .data()
            .iter()
            .zip(input.data())
            .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    ))
}

pub fn mul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.ensure_same_shape(b, "mul_forward")?;
    let out = Tensor::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
    );
    out.ensure_finite("mul_forward")?;
    Ok(out)
}

/// Returns `(∂/∂a, ∂/∂b)` for `a ⊙ b`.
pub fn mul_backward(grad_out: &Tensor, a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    a.ensure_same_shape(b, "mul_backward")?;
    grad_out.ensure_same_shape(a, "mul_backward")?;
    Ok((mul_forward(grad_out, b)?, mul_forward(grad_out, a)?))
}

/// Multiplies channel `c` of `x: [C × T]` by `scale[c]`.
pub fn scale_channels(x: &Tensor, scale: &[f64]) -> Result<Tensor> {
    const OP: &str = "scale_channels";
    x.ensure_rank(OP, 2)?;
    check_dim(OP, "C", x.dim(0), scale.len())?;
    let t = x.dim(1);
    let mut data = x.data().to_vec();
    for (row, &s) in data.chunks_exact_mut(t).zip(scale) {
        row.iter_mut().for_each(|v| *v *= s);
    }
    let out = Tensor::from_parts(x.shape().to_vec(), data);
    out.ensure_finite(OP)?;
    Ok(out)
}

/// Returns `(∂/∂x, ∂/∂scale)` for [`scale_channels`].
pub fn scale_channels_backward(
    grad_out: &Tensor,
    x: &Tensor,
    scale: &[f64],
) -> Result<(Tensor, Vec<f64>)> {
    const OP: &str = "scale_channels_backward";
    grad_out.ensure_same_shape(x, OP)?;
    let gx = scale_channels(grad_out, scale)?;
    let t = x.dim(1);
    let gs = grad_out
        .data()
        .chunks_exact(t)
        .zip(x.data().chunks_exact(t))
        .map(|(g, v)| super::linear::dot(g, v))
        .collect();
    Ok((gx, gs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::ones(&[3]), &x).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Keep inputs away from the ReLU kink.
        let x = Tensor::from_fn(&[3, 4], |_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        });
        let b = Tensor::from_fn(&[3, 4], |_| rng.random_range(-1.0..1.0));
        let probe = Tensor::from_fn(&[3, 4], |_| rng.random_range(-1.0..1.0));
        let scale = vec![0.5, -1.5, 2.0];
        let dotp = |t: &Tensor| -> f64 { t.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum() };

        let g = relu_backward(&probe, &x).unwrap();
        let n = central_difference(&x, 1e-5, |xx| dotp(&relu_forward(xx)));
        assert!(relative_error(g.data(), n.data()) < 1e-6);

        let (ga, gb) = mul_backward(&probe, &x, &b).unwrap();
        let na = central_difference(&x, 1e-5, |xx| dotp(&mul_forward(xx, &b).unwrap()));
        let nb = central_difference(&b, 1e-5, |bb| dotp(&mul_forward(&x, bb).unwrap()));
        assert!(relative_error(ga.data(), na.data()) < 1e-6);
        assert!(relative_error(gb.data(), nb.data()) < 1e-6);

        let (gx, gs) = scale_channels_backward(&probe, &x, &scale).unwrap();
        let nx = central_difference(&x, 1e-5, |xx| dotp(&scale_channels(xx, &scale).unwrap()));
        let s = Tensor::vector(scale.clone()).unwrap();
        let ns = central_difference(&s, 1e-5, |ss| dotp(&scale_channels(&x, ss.data()).unwrap()));
        assert!(relative_error(gx.data(), nx.data()) < 1e-6);
        assert!(relative_error(&gs, ns.data()) < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        assert!(mul_forward(&Tensor::zeros(&[2]), &Tensor::zeros(&[3])).is_err());
        assert!(scale_channels(&Tensor::zeros(&[2, 3]), &[1.0]).is_err());
    }
}
