//! Forward filtering, forward-filtering backward-sampling, and the
//! one-step-ahead predictive score.
//!
//! Filtering is normalized at every step and emissions arrive shifted by
//! their log-maximum, so long sequences neither underflow nor overflow.

use super::model::{HiddenMarkov, StateDistSeq, StateSequence};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, RandomSource};

/// Filtered distributions plus the log-likelihood of the observations.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub dists: StateDistSeq,
    pub log_likelihood: f64,
}

fn normalize_step(q: &mut [f64], t: usize) -> Result<f64> {
    let s: f64 = q.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ImpossibleObservation { t });
    }
    q.iter_mut().for_each(|x| *x /= s);
    Ok(s.ln())
}

/// `pred[j] = Σ_i p[i] · A[i, j]`
fn predict(transitions: &DenseMatrix<f64>, p: &[f64], pred: &mut [f64]) {
    pred.iter_mut().for_each(|x| *x = 0.0);
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        for (o, &a) in pred.iter_mut().zip(transitions.row(i)) {
            *o += pi * a;
        }
    }
}

/// Runs the forward recursion, calling `visit(t, p_t)` after each step.
fn forward_each<M: HiddenMarkov + ?Sized>(
    model: &M,
    obs: &M::Obs,
    mut visit: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<f64> {
    let len = M::obs_len(obs);
    if len == 0 {
        return Err(Error::Empty("observation sequence"));
    }
    let n = model.n_states();
    let a = model.transitions();
    let mut p = vec![0.0; n];
    let mut pred = model.initial().to_vec();
    let mut e = vec![0.0; n];
    let mut loglik = 0.0;
    for t in 0..len {
        if t > 0 {
            predict(a, &p, &mut pred);
        }
        let shift = model.scaled_emissions(obs, t, &mut e)?;
        if shift == f64::NEG_INFINITY {
            return Err(Error::ImpossibleObservation { t });
        }
        for ((q, &w), &x) in p.iter_mut().zip(&pred).zip(&e) {
            *q = w * x;
        }
        loglik += normalize_step(&mut p, t)? + shift;
        visit(t, &p)?;
    }
    Ok(loglik)
}

/// `p_t = P(x_t | y_1..y_t)` for every step.
pub fn forward_filter<M: HiddenMarkov + ?Sized>(model: &M, obs: &M::Obs) -> Result<FilterResult> {
    let len = M::obs_len(obs);
    let n = model.n_states();
    let mut dists = DenseMatrix::zeros(len, n);
    let log_likelihood = forward_each(model, obs, |t, p| {
        dists.row_mut(t).copy_from_slice(p);
        Ok(())
    })?;
    Ok(FilterResult {
        dists,
        log_likelihood,
    })
}

/// One exact draw from `P(x_1..x_T | y_1..y_T)`.
pub fn ffbs_sample<M: HiddenMarkov + ?Sized>(
    model: &M,
    obs: &M::Obs,
    rng: &mut RandomSource,
) -> Result<StateSequence> {
    ffbs_with_loglik(model, obs, rng).map(|(s, _)| s)
}

/// FFBS draw together with the observation log-likelihood from the forward pass.
pub(crate) fn ffbs_with_loglik<M: HiddenMarkov + ?Sized>(
    model: &M,
    obs: &M::Obs,
    rng: &mut RandomSource,
) -> Result<(StateSequence, f64)> {
    let FilterResult {
        dists: filtered,
        log_likelihood,
    } = forward_filter(model, obs)?;
    let len = filtered.rows();
    let n = model.n_states();
    let a = model.transitions();
    let mut states = vec![0usize; len];
    states[len - 1] = rng.categorical(filtered.row(len - 1));
    let mut w = vec![0.0; n];
    for t in (0..len - 1).rev() {
        let next = states[t + 1];
        for (i, (wi, &p)) in w.iter_mut().zip(filtered.row(t)).enumerate() {
            *wi = p * a[(i, next)];
        }
        if !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::ImpossibleObservation { t });
        }
        states[t] = rng.categorical(&w);
    }
    Ok((StateSequence(states), log_likelihood))
}

/// Mean over `t` of `ln P(y_{t+1} | p_t)`, with
/// `P(y_{t+1} | p_t) = Σ_i Σ_j p_t[i] A[i, j] P(y_{t+1} | x = j)`.
/// The prediction for step `t+1` only sees `y_1..y_t`.
pub fn predictive_loglik<M: HiddenMarkov + ?Sized>(model: &M, obs: &M::Obs) -> Result<f64> {
    let len = M::obs_len(obs);
    if len < 2 {
        return Err(Error::invalid(
            "predictive score needs at least 2 observations",
        ));
    }
    let n = model.n_states();
    let a = model.transitions();
    let mut pred = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut total = 0.0;
    forward_each(model, obs, |t, p| {
        if t + 1 < len {
            predict(a, p, &mut pred);
            let shift = model.scaled_emissions(obs, t + 1, &mut e)?;
            let s: f64 = pred.iter().zip(&e).map(|(w, x)| w * x).sum();
            total += s.ln() + shift;
        }
        Ok(())
    })?;
    Ok(total / (len - 1) as f64)
}

/// Per-step `ln P(y_{t+1} | p_t)` for `t = 0..len-1`.
pub fn predictive_logliks<M: HiddenMarkov + ?Sized>(model: &M, obs: &M::Obs) -> Result<Vec<f64>> {
    let len = M::obs_len(obs);
    let n = model.n_states();
    let a = model.transitions();
    let mut pred = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut out = Vec::with_capacity(len.saturating_sub(1));
    forward_each(model, obs, |t, p| {
        if t + 1 < len {
            predict(a, p, &mut pred);
            let shift = model.scaled_emissions(obs, t + 1, &mut e)?;
            let s: f64 = pred.iter().zip(&e).map(|(w, x)| w * x).sum();
            out.push(s.ln() + shift);
        }
        Ok(())
    })?;
    Ok(out)
}
