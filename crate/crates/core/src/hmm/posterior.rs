//! Conjugate posterior draws: Dirichlet rows for transitions and discrete
//! emissions, Normal-Inverse-Wishart for Gaussian emissions.

use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::StateSequence;
use crate::error::{Error, Result};
use crate::numeric::linalg::{cholesky, invert_lower, spd_inverse, symmetrize};
use crate::numeric::{DenseMatrix, RandomSource};

type Matrix = DenseMatrix<f64>;

/// `counts[i][j]` = number of steps with `x_t = i` and `x_{t+1} = j`.
pub fn count_transitions(states: &StateSequence, n: usize) -> Matrix {
    let mut counts = Matrix::zeros(n, n);
    for w in states.as_slice().windows(2) {
        counts[(w[0], w[1])] += 1.0;
    }
    counts
}

/// `counts[i][v]` = number of steps where state `i` emitted symbol `v`.
pub fn count_emissions(
    states: &StateSequence,
    obs: &[usize],
    n: usize,
    vocab_size: usize,
) -> Matrix {
    let mut counts = Matrix::zeros(n, vocab_size);
    for (&x, &y) in states.as_slice().iter().zip(obs) {
        counts[(x, y)] += 1.0;
    }
    counts
}

/// One Dirichlet draw with the given positive parameters.
pub fn sample_dirichlet(params: &[f64], rng: &mut RandomSource) -> Vec<f64> {
    let mut draw: Vec<f64> = params
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draw.iter().sum();
    if total > 0.0 && total.is_finite() {
        draw.iter_mut().for_each(|x| *x /= total);
    } else {
        // all gamma variates underflowed; put the mass on the largest parameter
        let top = params
            .iter()
            .enumerate()
            .fold(0, |best, (i, &a)| if a > params[best] { i } else { best });
        draw.iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = if i == top { 1.0 } else { 0.0 });
    }
    draw
}

/// Independent rows `Dirichlet(counts[i] + concentration)`.
pub fn sample_dirichlet_rows(
    counts: &Matrix,
    concentration: f64,
    rng: &mut RandomSource,
) -> Result<Matrix> {
    if !(concentration > 0.0) {
        return Err(Error::invalid("Dirichlet concentration must be positive"));
    }
    if counts.as_slice().iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::invalid("counts must be non-negative"));
    }
    let mut out = Matrix::zeros(counts.rows(), counts.cols());
    let mut params = vec![0.0; counts.cols()];
    for r in 0..counts.rows() {
        for (p, &c) in params.iter_mut().zip(counts.row(r)) {
            *p = c + concentration;
        }
        out.row_mut(r)
            .copy_from_slice(&sample_dirichlet(&params, rng));
    }
    Ok(out)
}

pub fn sample_transitions(counts: &Matrix, alpha: f64, rng: &mut RandomSource) -> Result<Matrix> {
    sample_dirichlet_rows(counts, alpha, rng)
}

pub fn sample_emissions_discrete(
    counts: &Matrix,
    beta: f64,
    rng: &mut RandomSource,
) -> Result<Matrix> {
    sample_dirichlet_rows(counts, beta, rng)
}

/// Normal-Inverse-Wishart parameters `(mu, kappa, nu, psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub mu: Vec<f64>,
    pub kappa: f64,
    pub nu: f64,
    pub psi: Matrix,
}

impl NiwParams {
    /// Zero mean, `kappa = 1`, `nu = d + 2`, identity scale.
    pub fn default_for(d: usize) -> Self {
        Self {
            mu: vec![0.0; d],
            kappa: 1.0,
            nu: d as f64 + 2.0,
            psi: Matrix::identity(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.psi.shape() != (d, d) {
            return Err(Error::Shape(
                "NIW scale matrix does not match mean dimension".into(),
            ));
        }
        if !(self.kappa > 0.0) || !(self.nu > d as f64 - 1.0) {
            return Err(Error::invalid("NIW needs kappa > 0 and nu > d - 1"));
        }
        cholesky(&self.psi).map_err(|_| Error::NotPositiveDefinite("NIW scale matrix"))?;
        Ok(())
    }

    /// Conjugate update with the rows of `obs`.
    pub fn posterior(&self, obs: &[&[f64]]) -> NiwParams {
        let d = self.dim();
        let n = obs.len();
        if n == 0 {
            return self.clone();
        }
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        for y in obs {
            for (m, &v) in mean.iter_mut().zip(y.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut scatter = Matrix::zeros(d, d);
        for y in obs {
            for i in 0..d {
                let di = y[i] - mean[i];
                for j in 0..d {
                    scatter[(i, j)] += di * (y[j] - mean[j]);
                }
            }
        }
        let kappa = self.kappa + nf;
        let nu = self.nu + nf;
        let mu: Vec<f64> = self
            .mu
            .iter()
            .zip(&mean)
            .map(|(&m0, &m)| (self.kappa * m0 + nf * m) / kappa)
            .collect();
        let shrink = self.kappa * nf / kappa;
        let mut psi = self.psi.clone();
        for i in 0..d {
            for j in 0..d {
                psi[(i, j)] +=
                    scatter[(i, j)] + shrink * (mean[i] - self.mu[i]) * (mean[j] - self.mu[j]);
            }
        }
        symmetrize(&mut psi);
        NiwParams { mu, kappa, nu, psi }
    }

    /// `Σ ~ IW(nu, psi)`, then `μ ~ N(mu, Σ / kappa)`.
    pub fn sample(&self, rng: &mut RandomSource) -> Result<(Vec<f64>, Matrix)> {
        let sigma = sample_inverse_wishart(self.nu, &self.psi, rng)?;
        let l = cholesky(&sigma)?;
        let scale = 1.0 / self.kappa.sqrt();
        let z: Vec<f64> = (0..self.dim())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let lz = l.matvec(&z);
        let mu = self
            .mu
            .iter()
            .zip(&lz)
            .map(|(&m, &v)| m + scale * v)
            .collect();
        Ok((mu, sigma))
    }
}

/// Bartlett draw `W ~ Wishart(nu, psi⁻¹)`, returned as `Σ = W⁻¹`.
pub fn sample_inverse_wishart(nu: f64, psi: &Matrix, rng: &mut RandomSource) -> Result<Matrix> {
    let d = psi.rows();
    let psi_inv =
        spd_inverse(psi).map_err(|_| Error::NotPositiveDefinite("inverse-Wishart scale"))?;
    let l = cholesky(&psi_inv).map_err(|_| Error::NotPositiveDefinite("inverse-Wishart scale"))?;
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        let shape = (nu - i as f64) / 2.0;
        let chi2: f64 = Gamma::new(shape, 2.0)
            .map_err(|_| Error::invalid("inverse-Wishart degrees of freedom too small"))?
            .sample(rng);
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    // W = (L A)(L A)ᵀ, so Σ = (L A)⁻ᵀ (L A)⁻¹
    let la = l.matmul(&a)?;
    let inv = invert_lower(&la);
    let mut sigma = inv.transpose().matmul(&inv)?;
    symmetrize(&mut sigma);
    if sigma.first_non_finite().is_some() {
        return Err(Error::NotPositiveDefinite("sampled covariance"));
    }
    Ok(sigma)
}

/// Per-state `(μ_i, Σ_i)` from the NIW posterior given that state's observations.
pub fn sample_emissions_continuous(
    obs_by_state: &[Vec<&[f64]>],
    prior: &NiwParams,
    rng: &mut RandomSource,
) -> Result<Vec<(Vec<f64>, Matrix)>> {
    prior.validate()?;
    obs_by_state
        .iter()
        .map(|group| prior.posterior(group).sample(rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_counts() {
        let c = count_transitions(&StateSequence(vec![0, 1, 0, 1]), 2);
        assert_eq!(c.as_slice(), &[0.0, 2.0, 1.0, 0.0]);
        let c = count_transitions(&StateSequence(vec![2; 9]), 3);
        assert_eq!(c[(2, 2)], 8.0);
        assert_eq!(c.as_slice().iter().sum::<f64>(), 8.0);
    }

    #[test]
    fn transition_counts_total() {
        let mut rng = RandomSource::new(1);
        let s = StateSequence((0..500).map(|_| rng.below(4)).collect());
        assert_eq!(
            count_transitions(&s, 4).as_slice().iter().sum::<f64>(),
            499.0
        );
    }

    fn mean_of_draws(counts: &Matrix, conc: f64, draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = RandomSource::new(seed);
        let mut acc = vec![0.0; counts.cols()];
        for _ in 0..draws {
            let m = sample_dirichlet_rows(counts, conc, &mut rng).unwrap();
            for (a, &v) in acc.iter_mut().zip(m.row(0)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / draws as f64).collect()
    }

    #[test]
    fn dirichlet_posterior_mean() {
        let counts = Matrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        let m = mean_of_draws(&counts, 1.0, 10_000, 2);
        assert!(
            (m[0] - 4.0 / 6.0).abs() < 0.01 && (m[1] - 2.0 / 6.0).abs() < 0.01,
            "{m:?}"
        );

        let zeros = Matrix::zeros(1, 4);
        let m = mean_of_draws(&zeros, 1.0, 10_000, 3);
        assert!(m.iter().all(|v| (v - 0.25).abs() < 0.01), "{m:?}");

        // emissions over a wider alphabet
        let counts = Matrix::from_rows(&[vec![3.0, 1.0, 0.0, 6.0, 0.0]]).unwrap();
        let m = mean_of_draws(&counts, 1.0, 10_000, 4);
        let want = [4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0, 7.0 / 15.0, 1.0 / 15.0];
        for (a, b) in m.iter().zip(want) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn dirichlet_concentrates_with_data() {
        let counts = Matrix::from_rows(&[vec![700_000.0, 300_000.0]]).unwrap();
        let mut rng = RandomSource::new(5);
        for _ in 0..20 {
            let row = sample_transitions(&counts, 1.0, &mut rng).unwrap();
            assert!((row[(0, 0)] - 0.7).abs() < 0.005);
            assert!((row.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let counts = Matrix::from_rows(&[vec![0.0, 600_000.0, 400_000.0]]).unwrap();
        let row = sample_emissions_discrete(&counts, 0.1, &mut rng).unwrap();
        assert!((row[(0, 1)] - 0.6).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_concentration() {
        let mut rng = RandomSource::new(0);
        assert!(sample_transitions(&Matrix::zeros(2, 2), 0.0, &mut rng).is_err());
    }

    #[test]
    fn niw_update_matches_closed_form() {
        // 1-d: prior mu0 = 0.5, kappa0 = 2, nu0 = 3, psi0 = 1.5; data 1, 2, 4
        let prior = NiwParams {
            mu: vec![0.5],
            kappa: 2.0,
            nu: 3.0,
            psi: Matrix::filled(1, 1, 1.5),
        };
        let data = [[1.0], [2.0], [4.0]];
        let refs: Vec<&[f64]> = data.iter().map(|r| &r[..]).collect();
        let post = prior.posterior(&refs);
        // ybar = 7/3, S = (4/3)^2 + (1/3)^2 + (5/3)^2 = 42/9
        let ybar = 7.0 / 3.0;
        let s = 42.0 / 9.0;
        assert!((post.kappa - 5.0).abs() < 1e-12);
        assert!((post.nu - 6.0).abs() < 1e-12);
        assert!((post.mu[0] - (2.0 * 0.5 + 3.0 * ybar) / 5.0).abs() < 1e-12);
        let psi = 1.5 + s + (2.0 * 3.0 / 5.0) * (ybar - 0.5) * (ybar - 0.5);
        assert!((post.psi[(0, 0)] - psi).abs() < 1e-12);
    }

    #[test]
    fn empty_group_uses_prior() {
        let prior = NiwParams::default_for(2);
        assert_eq!(prior.posterior(&[]), prior);
    }

    #[test]
    fn niw_posterior_concentrates() {
        let mut rng = RandomSource::new(7);
        let truth = [1.0, -2.0];
        let data: Vec<[f64; 2]> = (0..100_000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [truth[0] + a, truth[1] + b]
            })
            .collect();
        let refs: Vec<&[f64]> = data.iter().map(|r| &r[..]).collect();
        let draws =
            sample_emissions_continuous(&[refs], &NiwParams::default_for(2), &mut rng).unwrap();
        let (mu, sigma) = &draws[0];
        let err_mu = ((mu[0] - truth[0]).powi(2) + (mu[1] - truth[1]).powi(2)).sqrt();
        assert!(err_mu <= 0.05, "{mu:?}");
        let diff = Matrix::from_fn(2, 2, |i, j| sigma[(i, j)] - if i == j { 1.0 } else { 0.0 });
        assert!(diff.frobenius_norm() <= 0.1, "{sigma:?}");
    }

    #[test]
    fn inverse_wishart_mean() {
        // E[Σ] = psi / (nu - d - 1)
        let psi = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let nu = 10.0;
        let mut rng = RandomSource::new(8);
        let mut acc = Matrix::zeros(2, 2);
        let draws = 20_000;
        for _ in 0..draws {
            let s = sample_inverse_wishart(nu, &psi, &mut rng).unwrap();
            for (a, &v) in acc.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *a += v / draws as f64;
            }
        }
        for (got, &p) in acc.as_slice().iter().zip(psi.as_slice()) {
            assert!((got - p / 7.0).abs() < 0.01, "{acc:?}");
        }
    }
}
