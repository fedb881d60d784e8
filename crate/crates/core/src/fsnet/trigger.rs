/// Guards the cosine denominator against zero norms.
pub const COSINE_EPS: f64 = 1e-12;

/// `a · b / (‖a‖ ‖b‖ + ε)`; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt() + COSINE_EPS)
}

/// Fires when the slow and fast gradient EMAs point in strongly opposing
/// directions: `cos(ĝ, ĝ′) < −τ`.
pub fn trigger_check(g_hat: &[f64], g_hat_prime: &[f64], tau: f64) -> bool {
    cosine(g_hat, g_hat_prime) < -tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_geometry() {
        let g = [1.0, -2.0, 0.5];
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert!(!trigger_check(&g, &g, 0.75));
        assert!(trigger_check(&g, &neg, 0.75));
        assert!(!trigger_check(&[1.0, 0.0], &[0.0, 3.0], 0.75));
        assert!(!trigger_check(&[0.0; 3], &[0.0; 3], 0.75));
        assert!(!trigger_check(&[0.0; 3], &g, 0.0));
    }

    #[test]
    fn tau_one_never_fires() {
        let g = [1.0, 2.0];
        assert!(!trigger_check(&g, &[-1.0, -2.0], 1.0));
    }

    proptest! {
        #[test]
        fn raising_tau_never_creates_a_trigger(
            a in prop::collection::vec(-5.0..5.0f64, 6),
            b in prop::collection::vec(-5.0..5.0f64, 6),
            t1 in 0.0..1.0f64,
            t2 in 0.0..1.0f64,
        ) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            if trigger_check(&a, &b, hi) {
                prop_assert!(trigger_check(&a, &b, lo));
            }
        }
    }
}
