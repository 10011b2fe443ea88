use super::{DenseMatrix, Real};
use crate::error::{Error, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if m.is_empty() {
        return Err(Error::Empty("softmax_rows input"));
    }
    let mut out = m.clone();
    for r in 0..m.rows() {
        if m.row(r).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "softmax row",
                index: r,
            });
        }
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// Softmax of a finite vector, in place.
pub fn softmax_in_place<T: Real>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn logsumexp<T: Real>(v: &[T]) -> Result<T> {
    if v.is_empty() {
        return Err(Error::Empty("logsumexp input"));
    }
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return Ok(max);
    }
    let s: T = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + s.ln())
}

/// `log softmax(v)[k]`.
pub fn log_softmax_at<T: Real>(v: &[T], k: usize) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = v.iter().map(|&x| (x - max).exp()).sum();
    v[k] - max - s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        let m = DenseMatrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_rows(&m).unwrap().as_slice(), &[0.5, 0.5]);
        let m = DenseMatrix::from_vec(1, 2, vec![1000.0, 1000.0]).unwrap();
        assert_eq!(softmax_rows(&m).unwrap().as_slice(), &[0.5, 0.5]);
        let m = DenseMatrix::from_vec(1, 3, vec![0.0, 2f64.ln(), 4f64.ln()]).unwrap();
        let s = softmax_rows(&m).unwrap();
        for (got, want) in s.as_slice().iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_non_finite_with_row() {
        let m = DenseMatrix::from_vec(2, 2, vec![0.0, 1.0, f64::NAN, 0.0]).unwrap();
        match softmax_rows(&m) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(softmax_rows(&DenseMatrix::<f64>::zeros(0, 0)).is_err());
    }

    #[test]
    fn logsumexp_examples() {
        assert_eq!(logsumexp(&[0.0]).unwrap(), 0.0);
        let a = -700.0;
        assert!((logsumexp(&[a, a]).unwrap() - (a + 2f64.ln())).abs() < 1e-12);
        let v = [1f64.ln(), 2f64.ln(), 3f64.ln()];
        assert!((logsumexp(&v).unwrap() - 6f64.ln()).abs() < 1e-12 * 6f64.ln());
        assert!(logsumexp::<f64>(&[]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let m = DenseMatrix::from_vec(1, 3, vec![0.0f32, 1.0, 2.0]).unwrap();
        let s: f32 = softmax_rows(&m).unwrap().as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-1000.0f64..1000.0, 12)) {
            let m = DenseMatrix::from_vec(3, 4, vals).unwrap();
            let s = softmax_rows(&m).unwrap();
            for r in s.iter_rows() {
                let total: f64 = r.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn logsumexp_bounds(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let lse = logsumexp(&v).unwrap();
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lse >= max);
            prop_assert!(lse <= max + (v.len() as f64).ln() + 1e-12);
        }
    }
}
