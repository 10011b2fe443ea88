//! Blocked Gibbs sampling: alternate parameter draws given states with an
//! FFBS draw of the whole state path given parameters.

use serde::{Deserialize, Serialize};

use super::filter::ffbs_with_loglik;
use super::model::{ContinuousHmm, DiscreteHmm, StateSequence};
use super::posterior::{
    count_emissions, count_transitions, sample_emissions_continuous, sample_emissions_discrete,
    sample_transitions, NiwParams,
};
use crate::error::{Error, Result};
use crate::numeric::{kmeans, DenseMatrix, RandomSource};

type Matrix = DenseMatrix<f64>;

const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmHyper {
    /// Dirichlet concentration for transition rows and the initial distribution.
    pub alpha: f64,
    /// Dirichlet concentration for discrete emission rows.
    pub beta: f64,
    /// Prior for Gaussian emissions; `None` means [`NiwParams::default_for`] the data dimension.
    pub niw: Option<NiwParams>,
}

impl Default for HmmHyper {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            niw: None,
        }
    }
}

impl HmmHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::invalid(
                "HMM concentrations alpha and beta must be positive",
            ));
        }
        if let Some(niw) = &self.niw {
            niw.validate()?;
        }
        Ok(())
    }

    fn niw_for(&self, d: usize) -> Result<NiwParams> {
        match &self.niw {
            Some(p) if p.dim() != d => Err(Error::Shape(format!(
                "NIW prior has dimension {}, observations have {d}",
                p.dim()
            ))),
            Some(p) => Ok(p.clone()),
            None => Ok(NiwParams::default_for(d)),
        }
    }
}

/// Per-iteration monitoring: mean log-likelihood per observation of the
/// training data under that iteration's sampled parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GibbsTrace {
    pub train_loglik: Vec<f64>,
}

/// Independent uniform draws over `0..n`.
pub fn init_states_discrete(len: usize, n: usize, rng: &mut RandomSource) -> Result<StateSequence> {
    if len == 0 || n == 0 {
        return Err(Error::invalid(
            "state initialization needs a nonempty sequence and n >= 1",
        ));
    }
    Ok(StateSequence((0..len).map(|_| rng.below(n)).collect()))
}

/// k-means cluster labels of the rows of `hidden`.
pub fn init_states_continuous(
    hidden: &Matrix,
    n: usize,
    rng: &mut RandomSource,
) -> Result<StateSequence> {
    let fit = kmeans(hidden, n, rng, KMEANS_MAX_ITERS)?;
    Ok(StateSequence(fit.assignments))
}

/// `pi0[i] = (1[x_1 = i] + α) / (1 + nα)`
pub fn initial_distribution(states: &StateSequence, n: usize, alpha: f64) -> Vec<f64> {
    let first = states.as_slice()[0];
    let denom = 1.0 + n as f64 * alpha;
    (0..n)
        .map(|i| (if i == first { 1.0 } else { 0.0 } + alpha) / denom)
        .collect()
}

fn check_run(n: usize, iters: usize, hyper: &HmmHyper) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("HMM needs at least one state"));
    }
    if iters == 0 {
        return Err(Error::invalid(
            "Gibbs sampling needs at least one iteration",
        ));
    }
    hyper.validate()
}

fn sample_discrete_params(
    states: &StateSequence,
    obs: &[usize],
    n: usize,
    vocab_size: usize,
    hyper: &HmmHyper,
    rng: &mut RandomSource,
) -> Result<DiscreteHmm> {
    let t = sample_transitions(&count_transitions(states, n), hyper.alpha, rng)?;
    let e = sample_emissions_discrete(
        &count_emissions(states, obs, n, vocab_size),
        hyper.beta,
        rng,
    )?;
    DiscreteHmm::new(t, e, initial_distribution(states, n, hyper.alpha))
}

/// Gibbs sampler for a categorical-emission HMM over symbols `0..vocab_size`.
/// Returns the final sample.
pub fn gibbs_train_discrete(
    obs: &[usize],
    vocab_size: usize,
    n: usize,
    iters: usize,
    hyper: &HmmHyper,
    rng: &mut RandomSource,
) -> Result<(DiscreteHmm, GibbsTrace)> {
    check_run(n, iters, hyper)?;
    if obs.is_empty() {
        return Err(Error::Empty("HMM training sequence"));
    }
    if let Some(&bad) = obs.iter().find(|&&y| y >= vocab_size) {
        return Err(Error::invalid(format!(
            "symbol {bad} outside vocabulary of {vocab_size}"
        )));
    }
    let mut states = init_states_discrete(obs.len(), n, rng)?;
    let mut trace = GibbsTrace::default();
    let mut model = None;
    for it in 0..iters {
        let m = sample_discrete_params(&states, obs, n, vocab_size, hyper, rng)?;
        let (next, ll) = ffbs_with_loglik(&m, obs, rng)?;
        let mean = ll / obs.len() as f64;
        log::debug!("gibbs iter {it}: train loglik {mean:.4}");
        trace.train_loglik.push(mean);
        states = next;
        model = Some(m);
    }
    Ok((model.expect("iters >= 1"), trace))
}

fn sample_continuous_params(
    states: &StateSequence,
    obs: &Matrix,
    n: usize,
    hyper: &HmmHyper,
    prior: &NiwParams,
    rng: &mut RandomSource,
) -> Result<ContinuousHmm> {
    let t = sample_transitions(&count_transitions(states, n), hyper.alpha, rng)?;
    let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for (row, &x) in obs.iter_rows().zip(states.as_slice()) {
        groups[x].push(row);
    }
    let draws = sample_emissions_continuous(&groups, prior, rng)?;
    let d = obs.cols();
    let mut means = Matrix::zeros(n, d);
    let mut covs = Vec::with_capacity(n);
    for (i, (mu, sigma)) in draws.into_iter().enumerate() {
        means.row_mut(i).copy_from_slice(&mu);
        covs.push(sigma);
    }
    ContinuousHmm::new(t, initial_distribution(states, n, hyper.alpha), means, covs)
}

/// Gibbs sampler for a Gaussian-emission HMM over the rows of `obs`,
/// initialized from k-means labels. Returns the final sample.
pub fn gibbs_train_continuous(
    obs: &Matrix,
    n: usize,
    iters: usize,
    hyper: &HmmHyper,
    rng: &mut RandomSource,
) -> Result<(ContinuousHmm, GibbsTrace)> {
    check_run(n, iters, hyper)?;
    if obs.rows() == 0 || obs.cols() == 0 {
        return Err(Error::Empty("HMM training observations"));
    }
    if let Some(i) = obs.first_non_finite() {
        return Err(Error::NonFinite {
            what: "HMM observation",
            index: i,
        });
    }
    let prior = hyper.niw_for(obs.cols())?;
    let mut states = init_states_continuous(obs, n, rng)?;
    let mut trace = GibbsTrace::default();
    let mut model = None;
    for it in 0..iters {
        let m = sample_continuous_params(&states, obs, n, hyper, &prior, rng)?;
        let (next, ll) = ffbs_with_loglik(&m, obs, rng)?;
        let mean = ll / obs.rows() as f64;
        log::debug!("gibbs iter {it}: train loglik {mean:.4}");
        trace.train_loglik.push(mean);
        states = next;
        model = Some(m);
    }
    Ok((model.expect("iters >= 1"), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::HiddenMarkov;

    #[test]
    fn discrete_init_is_uniform() {
        let mut rng = RandomSource::new(1);
        let s = init_states_discrete(100_000, 4, &mut rng).unwrap();
        for k in 0..4 {
            let f = s.as_slice().iter().filter(|&&x| x == k).count() as f64 / 1e5;
            assert!((f - 0.25).abs() < 0.01);
        }
        assert!(init_states_discrete(10, 1, &mut rng)
            .unwrap()
            .0
            .iter()
            .all(|&x| x == 0));
        let a = init_states_discrete(50, 3, &mut RandomSource::new(9)).unwrap();
        let b = init_states_discrete(50, 3, &mut RandomSource::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn continuous_init_separates_blobs() {
        let mut rows = vec![vec![0.0, 0.1]; 20];
        rows.extend(vec![vec![50.0, 49.0]; 20]);
        let hidden = Matrix::from_rows(&rows).unwrap();
        let s = init_states_continuous(&hidden, 2, &mut RandomSource::new(2)).unwrap();
        assert!(s.0[..20].iter().all(|&x| x == s.0[0]));
        assert!(s.0[20..].iter().all(|&x| x == s.0[20]));
        assert_ne!(s.0[0], s.0[20]);
        let one = init_states_continuous(&hidden, 1, &mut RandomSource::new(2)).unwrap();
        assert!(one.0.iter().all(|&x| x == 0));
    }

    #[test]
    fn initial_distribution_is_smoothed() {
        let pi = initial_distribution(&StateSequence(vec![2, 0, 1]), 3, 1.0);
        assert_eq!(pi, vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn single_state_emissions_are_smoothed_frequencies() {
        let mut rng = RandomSource::new(3);
        let obs: Vec<usize> = (0..20_000)
            .map(|_| if rng.uniform() < 0.3 { 0 } else { 1 })
            .collect();
        let ones = obs.iter().filter(|&&y| y == 1).count() as f64;
        let hyper = HmmHyper::default();
        let (m, trace) = gibbs_train_discrete(&obs, 2, 1, 5, &hyper, &mut rng).unwrap();
        let want = (ones + hyper.beta) / (obs.len() as f64 + 2.0 * hyper.beta);
        assert!((m.emissions()[(0, 1)] - want).abs() < 0.01);
        assert!(trace.train_loglik.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn continuous_gibbs_runs() {
        let mut rng = RandomSource::new(4);
        let obs = Matrix::from_fn(400, 2, |t, j| {
            let centre = if (t / 50) % 2 == 0 { -3.0 } else { 3.0 };
            centre + (j as f64) + rng.uniform() - 0.5
        });
        let (m, trace) =
            gibbs_train_continuous(&obs, 2, 10, &HmmHyper::default(), &mut rng).unwrap();
        assert_eq!(m.n_states(), 2);
        assert_eq!(trace.train_loglik.len(), 10);
        assert!(trace.train_loglik.iter().all(|v| v.is_finite()));
        let mut firsts: Vec<f64> = (0..2).map(|i| m.means()[(i, 0)]).collect();
        firsts.sort_by(f64::total_cmp);
        assert!(
            (firsts[0] + 3.0).abs() < 0.3 && (firsts[1] - 3.0).abs() < 0.3,
            "{firsts:?}"
        );
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = RandomSource::new(0);
        let h = HmmHyper::default();
        assert!(gibbs_train_discrete(&[0, 5], 2, 2, 3, &h, &mut rng).is_err());
        assert!(gibbs_train_discrete(&[0, 1], 2, 2, 0, &h, &mut rng).is_err());
        let bad = HmmHyper { alpha: 0.0, ..h };
        assert!(gibbs_train_discrete(&[0, 1], 2, 2, 3, &bad, &mut rng).is_err());
    }
}
