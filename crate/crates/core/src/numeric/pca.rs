use super::{linalg::symmetric_eigenvalues, DenseMatrix, Real};
use crate::error::{Error, Result};

/// Sample covariance of the rows of `points` (divisor `T - 1`).
pub fn covariance<T: Real>(points: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let (n, d) = points.shape();
    if n < 2 {
        return Err(Error::invalid(format!(
            "covariance needs >= 2 points, got {n}"
        )));
    }
    let mut mean = vec![T::zero(); d];
    for p in points.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    let inv_n = T::one() / T::of(n as f64);
    mean.iter_mut().for_each(|m| *m *= inv_n);

    let mut cov = DenseMatrix::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for p in points.iter_rows() {
        for ((c, &x), &m) in centered.iter_mut().zip(p).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let inv = T::one() / T::of((n - 1) as f64);
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] * inv;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Fraction of total variance carried by each principal component,
/// sorted descending.
pub fn pca_explained_variance<T: Real>(points: &DenseMatrix<T>) -> Result<Vec<T>> {
    let cov = covariance(points)?;
    let mut ev: Vec<T> = symmetric_eigenvalues(&cov)?
        .into_iter()
        .map(|x| x.max(T::zero()))
        .collect();
    let total: T = ev.iter().copied().sum();
    let trace: T = (0..cov.rows()).map(|i| cov[(i, i)]).sum();
    if !(total > T::zero()) || !(trace > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    ev.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    ev.iter_mut().for_each(|x| *x /= total);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RandomSource;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn collinear_points_are_rank_one() {
        let pts =
            DenseMatrix::from_fn(20, 2, |r, c| if c == 0 { r as f64 } else { 2.0 * r as f64 });
        let ev = pca_explained_variance(&pts).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-10);
        assert!(ev[1].abs() < 1e-10);
    }

    #[test]
    fn isotropic_sample_splits_evenly() {
        let mut rng = RandomSource::new(42);
        let pts = DenseMatrix::from_fn(10_000, 3, |_, _| StandardNormal.sample(&mut rng));
        let ev: Vec<f64> = pca_explained_variance(&pts).unwrap();
        for r in &ev {
            assert!((r - 1.0 / 3.0).abs() < 0.02, "{ev:?}");
        }
        let total: f64 = ev.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn degenerate_inputs_error() {
        let constant = DenseMatrix::filled(5, 3, 2.5);
        assert!(matches!(
            pca_explained_variance(&constant),
            Err(Error::ZeroVariance)
        ));
        let single = DenseMatrix::filled(1, 3, 1.0);
        assert!(pca_explained_variance(&single).is_err());
    }
}
