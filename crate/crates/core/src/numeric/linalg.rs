//! Small dense symmetric-matrix kernels: Cholesky, inverses, Jacobi eigenvalues.

use super::{DenseMatrix, Real};
use crate::error::{Error, Result};

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!(
            "cholesky of {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite("cholesky pivot"));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn solve_lower<T: Real>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Inverse of a lower-triangular matrix.
pub fn invert_lower<T: Real>(l: &DenseMatrix<T>) -> DenseMatrix<T> {
    let n = l.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![T::zero(); n];
        e[c] = T::one();
        let col = solve_lower(l, &e);
        for r in 0..n {
            inv[(r, c)] = col[r];
        }
    }
    inv
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let l = cholesky(a)?;
    let li = invert_lower(&l);
    // a⁻¹ = L⁻ᵀ L⁻¹
    let mut out = li.transpose().matmul(&li)?;
    symmetrize(&mut out);
    Ok(out)
}

pub fn symmetrize<T: Real>(a: &mut DenseMatrix<T>) {
    let n = a.rows();
    let half = T::of(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let m = (a[(i, j)] + a[(j, i)]) * half;
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// `log det(a)` given its Cholesky factor.
pub fn chol_log_det<T: Real>(l: &DenseMatrix<T>) -> T {
    (0..l.rows()).map(|i| l[(i, i)].ln()).sum::<T>() * T::of(2.0)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, unsorted.
pub fn symmetric_eigenvalues<T: Real>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape("eigenvalues of a non-square matrix".into()));
    }
    let mut m = a.clone();
    symmetrize(&mut m);
    let tol = T::epsilon() * T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)] * m[(i, j)];
                total += v;
                if i != j {
                    off += v;
                }
            }
        }
        if off <= tol * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| m[(i, i)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd();
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        let not_pd = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(cholesky(&not_pd).is_err());
    }

    #[test]
    fn inverse_is_inverse() {
        let a = spd();
        let inv = spd_inverse(&a).unwrap();
        let id = a.matmul(&inv).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_matches_trace_and_det() {
        let a = spd();
        let ev = symmetric_eigenvalues(&a).unwrap();
        let trace: f64 = ev.iter().sum();
        assert!((trace - 9.0).abs() < 1e-12);
        let det: f64 = ev.iter().product();
        let l = cholesky(&a).unwrap();
        assert!((det.ln() - chol_log_det(&l)).abs() < 1e-12);
        let diag = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(symmetric_eigenvalues(&diag).unwrap(), vec![2.0, 5.0]);
    }
}
