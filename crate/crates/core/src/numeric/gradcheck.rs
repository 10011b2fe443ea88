use super::Real;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<T: Real>(mut f: impl FnMut(&[T]) -> T, x: &[T], eps: T) -> Result<Vec<T>> {
    if !(eps > T::zero()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    let two_eps = eps + eps;
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                what: "finite-difference objective",
                index: i,
            });
        }
        grad.push((up - down) / two_eps);
    }
    Ok(grad)
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square() {
        let g = finite_diff_grad(|x: &[f64]| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_is_flat() {
        let g = finite_diff_grad(|_: &[f64]| 4.2, &[1.0, -3.0, 8.0], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_of_cubes() {
        let g = finite_diff_grad(
            |x: &[f64]| x.iter().map(|v| v * v * v).sum(),
            &[1.0, 2.0],
            1e-5,
        )
        .unwrap();
        assert!((g[0] - 3.0).abs() < 1e-6);
        assert!((g[1] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn reports_offending_index() {
        let err = finite_diff_grad(
            |x: &[f64]| if x[1] > 0.5 { f64::NAN } else { 0.0 },
            &[0.0, 0.5],
            1e-3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }
}
