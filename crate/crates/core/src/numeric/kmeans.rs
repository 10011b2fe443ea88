//! Lloyd's k-means with k-means++ seeding.

use super::{squared_distance, DenseMatrix, RandomSource, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KMeansFit<T> {
    pub assignments: Vec<usize>,
    pub centroids: DenseMatrix<T>,
    /// Within-cluster sum of squares after each update step.
    pub sse_history: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> KMeansFit<T> {
    pub fn sse(&self) -> T {
        self.sse_history.last().copied().unwrap_or_else(T::zero)
    }
}

pub fn kmeans<T: Real>(
    points: &DenseMatrix<T>,
    k: usize,
    rng: &mut RandomSource,
    max_iters: usize,
) -> Result<KMeansFit<T>> {
    let (n, d) = points.shape();
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k-means with k={k} > {n} points")));
    }
    if d == 0 {
        return Err(Error::invalid("k-means on zero-dimensional points"));
    }

    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut dist = vec![T::zero(); n];
    let mut sse_history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (i, p) in points.iter_rows().enumerate() {
            let (best, best_d) = nearest(p, &centroids);
            if best != assignments[i] {
                changed = true;
                assignments[i] = best;
            }
            dist[i] = best_d;
        }
        if !changed {
            break;
        }
        iterations += 1;

        let mut sums = DenseMatrix::<T>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter_rows().enumerate() {
            counts[assignments[i]] += 1;
            for (s, &x) in sums.row_mut(assignments[i]).iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = T::one() / T::of(counts[c] as f64);
                for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from its own centroid, not already used to reseed
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .fold(None::<(usize, T)>, |acc, i| match acc {
                        Some((_, bd)) if dist[i] <= bd => acc,
                        _ => Some((i, dist[i])),
                    })
                    .map_or(0, |(i, _)| i);
                taken.push(far);
                centroids.row_mut(c).copy_from_slice(points.row(far));
            }
        }

        let sse = points
            .iter_rows()
            .zip(&assignments)
            .map(|(p, &a)| squared_distance(p, centroids.row(a)))
            .sum::<T>();
        sse_history.push(sse);
    }

    Ok(KMeansFit {
        assignments,
        centroids,
        sse_history,
        iterations,
    })
}

fn nearest<T: Real>(p: &[T], centroids: &DenseMatrix<T>) -> (usize, T) {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, row) in centroids.iter_rows().enumerate() {
        let d = squared_distance(p, row);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    (best, best_d)
}

fn seed_plus_plus<T: Real>(
    points: &DenseMatrix<T>,
    k: usize,
    rng: &mut RandomSource,
) -> DenseMatrix<T> {
    let (n, d) = points.shape();
    let mut centroids = DenseMatrix::zeros(k, d);
    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = points
        .iter_rows()
        .map(|p| squared_distance(p, points.row(first)).to_f64_lossy())
        .collect();

    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            rng.categorical(&d2)
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.below(free.len())]
        };
        chosen[pick] = true;
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.iter_rows().enumerate() {
            let nd = squared_distance(p, points.row(pick)).to_f64_lossy();
            if nd < d2[i] {
                d2[i] = nd;
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> DenseMatrix<f64> {
        let mut rows = vec![vec![0.0, 0.0]; 10];
        rows.extend(vec![vec![100.0, 100.0]; 10]);
        DenseMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn separated_blobs() {
        for seed in 0..20 {
            let fit = kmeans(&blobs(), 2, &mut RandomSource::new(seed), 100).unwrap();
            let mut cs: Vec<Vec<f64>> = fit.centroids.iter_rows().map(<[f64]>::to_vec).collect();
            cs.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            assert!(cs[0].iter().all(|x| x.abs() < 1e-9));
            assert!(cs[1].iter().all(|x| (x - 100.0).abs() < 1e-9));
            assert!(fit.assignments[..10]
                .iter()
                .all(|&a| a == fit.assignments[0]));
            assert!(fit.assignments[10..]
                .iter()
                .all(|&a| a == fit.assignments[10]));
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = DenseMatrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]])
            .unwrap();
        let fit = kmeans(&pts, 1, &mut RandomSource::new(3), 50).unwrap();
        assert!((fit.centroids[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((fit.centroids[(0, 1)] - 3.0).abs() < 1e-12);
        assert!(fit.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn k_equals_n_has_zero_sse() {
        let pts = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![-2.0]]).unwrap();
        let fit = kmeans(&pts, 4, &mut RandomSource::new(9), 50).unwrap();
        assert_eq!(fit.sse(), 0.0);
        let mut a = fit.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let pts = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(kmeans(&pts, 3, &mut RandomSource::new(0), 10).is_err());
        assert!(kmeans(
            &DenseMatrix::<f64>::zeros(3, 0),
            1,
            &mut RandomSource::new(0),
            10
        )
        .is_err());
    }

    #[test]
    fn sse_never_increases() {
        let mut rng = RandomSource::new(11);
        let pts = DenseMatrix::from_fn(300, 3, |_, _| rng.uniform() * 10.0);
        for seed in 0..10 {
            let fit = kmeans(&pts, 7, &mut RandomSource::new(seed), 200).unwrap();
            for w in fit.sse_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.sse_history);
            }
        }
    }

    #[test]
    fn duplicate_points_are_handled() {
        let pts = DenseMatrix::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        let fit = kmeans(&pts, 3, &mut RandomSource::new(2), 10).unwrap();
        assert_eq!(fit.sse(), 0.0);
        assert_eq!(fit.assignments.len(), 5);
    }
}
