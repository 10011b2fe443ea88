use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linalg::{chol_log_det, cholesky, solve_lower};
use crate::numeric::DenseMatrix;

type Matrix = DenseMatrix<f64>;

/// Sampled hidden-state path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence(pub Vec<usize>);

impl StateSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Filtered state distributions `P(x_t | y_1..y_t)`, one row per step.
pub type StateDistSeq = Matrix;

/// Common surface of the discrete- and continuous-emission HMMs.
pub trait HiddenMarkov {
    type Obs: ?Sized;

    fn n_states(&self) -> usize;
    fn transitions(&self) -> &Matrix;
    fn initial(&self) -> &[f64];
    fn obs_len(obs: &Self::Obs) -> usize;

    /// Writes `P(y_t | x_t = j) / exp(shift)` into `out` and returns `shift`,
    /// chosen so the largest entry is 1 (or `-inf` when every state gives
    /// the observation zero probability).
    fn scaled_emissions(&self, obs: &Self::Obs, t: usize, out: &mut [f64]) -> Result<f64>;
}

pub(crate) fn check_stochastic_rows(m: &Matrix, what: &str) -> Result<()> {
    for (r, row) in m.iter_rows().enumerate() {
        let s: f64 = row.iter().sum();
        if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (s - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "{what} row {r} is not a probability distribution"
            )));
        }
    }
    Ok(())
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    let s: f64 = v.iter().sum();
    if v.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!(
            "{what} is not a probability distribution"
        )));
    }
    Ok(())
}

/// HMM with categorical emissions over character ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    transitions: Matrix,
    emissions: Matrix,
    /// `emissions` transposed, so a symbol's column is contiguous.
    by_symbol: Matrix,
    initial: Vec<f64>,
}

impl DiscreteHmm {
    pub fn new(transitions: Matrix, emissions: Matrix, initial: Vec<f64>) -> Result<Self> {
        let n = initial.len();
        if n == 0 || transitions.shape() != (n, n) || emissions.rows() != n || emissions.cols() == 0
        {
            return Err(Error::Shape(format!(
                "discrete HMM with {n} initial probs, {:?} transitions, {:?} emissions",
                transitions.shape(),
                emissions.shape()
            )));
        }
        check_stochastic_rows(&transitions, "transition")?;
        check_stochastic_rows(&emissions, "emission")?;
        check_distribution(&initial, "initial distribution")?;
        let by_symbol = emissions.transpose();
        Ok(Self {
            transitions,
            emissions,
            by_symbol,
            initial,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.emissions.cols()
    }

    pub fn emissions(&self) -> &Matrix {
        &self.emissions
    }

    /// Distribution of the next symbol given the filtered state
    /// distribution `p` at the current step.
    pub fn next_symbol_distribution(&self, p: &[f64]) -> Vec<f64> {
        let pred = self.transitions.matvec_t(p);
        self.emissions.matvec_t(&pred)
    }

    /// Relabels states so new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_states();
        let t = Matrix::from_fn(n, n, |i, j| self.transitions[(perm[i], perm[j])]);
        let e = Matrix::from_fn(n, self.vocab_size(), |i, v| self.emissions[(perm[i], v)]);
        let pi = perm.iter().map(|&k| self.initial[k]).collect();
        Self::new(t, e, pi)
    }
}

impl HiddenMarkov for DiscreteHmm {
    type Obs = [usize];

    fn n_states(&self) -> usize {
        self.initial.len()
    }

    fn transitions(&self) -> &Matrix {
        &self.transitions
    }

    fn initial(&self) -> &[f64] {
        &self.initial
    }

    fn obs_len(obs: &[usize]) -> usize {
        obs.len()
    }

    fn scaled_emissions(&self, obs: &[usize], t: usize, out: &mut [f64]) -> Result<f64> {
        let y = obs[t];
        if y >= self.vocab_size() {
            return Err(Error::invalid(format!(
                "symbol {y} at t={t} outside vocabulary"
            )));
        }
        out.copy_from_slice(self.by_symbol.row(y));
        Ok(0.0)
    }
}

/// HMM with multivariate-normal emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousHmm {
    transitions: Matrix,
    initial: Vec<f64>,
    means: Matrix,
    covariances: Vec<Matrix>,
    factors: Vec<Matrix>,
    log_dets: Vec<f64>,
}

impl ContinuousHmm {
    pub fn new(
        transitions: Matrix,
        initial: Vec<f64>,
        means: Matrix,
        covariances: Vec<Matrix>,
    ) -> Result<Self> {
        let n = initial.len();
        let d = means.cols();
        if n == 0
            || transitions.shape() != (n, n)
            || means.rows() != n
            || covariances.len() != n
            || covariances.iter().any(|c| c.shape() != (d, d))
        {
            return Err(Error::Shape(
                "continuous HMM parameter shapes disagree".into(),
            ));
        }
        check_stochastic_rows(&transitions, "transition")?;
        check_distribution(&initial, "initial distribution")?;
        let factors = covariances
            .iter()
            .map(cholesky)
            .collect::<Result<Vec<_>>>()?;
        let log_dets = factors.iter().map(chol_log_det).collect();
        Ok(Self {
            transitions,
            initial,
            means,
            covariances,
            factors,
            log_dets,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn covariances(&self) -> &[Matrix] {
        &self.covariances
    }

    pub fn log_density(&self, state: usize, y: &[f64]) -> f64 {
        mvn_log_pdf_chol(
            y,
            self.means.row(state),
            &self.factors[state],
            self.log_dets[state],
        )
    }
}

impl HiddenMarkov for ContinuousHmm {
    type Obs = Matrix;

    fn n_states(&self) -> usize {
        self.initial.len()
    }

    fn transitions(&self) -> &Matrix {
        &self.transitions
    }

    fn initial(&self) -> &[f64] {
        &self.initial
    }

    fn obs_len(obs: &Matrix) -> usize {
        obs.rows()
    }

    fn scaled_emissions(&self, obs: &Matrix, t: usize, out: &mut [f64]) -> Result<f64> {
        if obs.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "observations have dimension {}, model expects {}",
                obs.cols(),
                self.dim()
            )));
        }
        let y = obs.row(t);
        let mut max = f64::NEG_INFINITY;
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.log_density(j, y);
            max = max.max(*o);
        }
        if max == f64::NEG_INFINITY || !max.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        for o in out.iter_mut() {
            *o = (*o - max).exp();
        }
        Ok(max)
    }
}

/// Multivariate-normal log-density from the Cholesky factor of the covariance.
pub fn mvn_log_pdf_chol(y: &[f64], mean: &[f64], chol: &Matrix, log_det: f64) -> f64 {
    let diff: Vec<f64> = y.iter().zip(mean).map(|(a, b)| a - b).collect();
    let z = solve_lower(chol, &diff);
    let maha: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * (y.len() as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + maha)
}

pub fn mvn_log_pdf(y: &[f64], mean: &[f64], cov: &Matrix) -> Result<f64> {
    let l = cholesky(cov)?;
    Ok(mvn_log_pdf_chol(y, mean, &l, chol_log_det(&l)))
}
