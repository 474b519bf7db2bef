//! Central finite-difference verification of analytic gradients.
//!
//! The checker only ever evaluates the forward function, so it stays
//! independent of the backward implementation it validates.

/// Central-difference gradient of a scalar function of a flat vector.
pub fn central_diff<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Worst relative error between two gradient vectors, with the denominator
/// floored at 1 so near-zero entries compare absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let g = central_diff(f, &[1.0, -2.0, 0.5], 1e-5);
        let expect = [2.0, -4.0, 1.0];
        assert!(max_rel_err(&expect, &g) < 1e-9);
    }
}
