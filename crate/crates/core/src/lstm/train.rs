//! Truncated-BPTT SGD shared by the LSTM and both hybrids.

use std::ops::Range;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub hidden_dim: usize,
    pub layers: usize,
    pub bptt_len: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub clip_threshold: f64,
    pub init_scale: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 5,
            layers: 1,
            bptt_len: 100,
            epochs: 10,
            lr0: 1.0,
            clip_threshold: 5.0,
            init_scale: 0.08,
        }
    }
}

impl LstmConfig {
    pub fn with_hidden(hidden_dim: usize) -> Self {
        Self {
            hidden_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.layers == 0 || self.bptt_len == 0 {
            return Err(Error::invalid(
                "hidden_dim, layers and bptt_len must all be >= 1",
            ));
        }
        if !(self.lr0 > 0.0) || !(self.clip_threshold > 0.0) {
            return Err(Error::invalid("lr0 and clip_threshold must be positive"));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean training log-likelihood per character (nats), one per epoch.
    pub epoch_loglik: Vec<f64>,
    /// Learning rate used during each epoch.
    pub epoch_lr: Vec<f64>,
    pub validation_loglik: Option<f64>,
}

/// A collection of named parameter tensors that SGD can update.
pub trait ParamSet<T: Real>: Clone {
    fn tensors(&self) -> Vec<(String, &[T])>;
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;
    fn zeros_like(&self) -> Self;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn flatten(&self) -> Vec<T> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    fn assign_flat(&mut self, flat: &[T]) {
        let mut pos = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[pos..pos + t.len()]);
            pos += t.len();
        }
        debug_assert_eq!(pos, flat.len());
    }

    fn l2_norm(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    /// `self += alpha * other`
    fn add_scaled(&mut self, alpha: T, other: &Self) {
        let src = other.tensors();
        for (dst, (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, &v) in dst.iter_mut().zip(s) {
                *d += alpha * v;
            }
        }
    }

    fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// A next-character objective over a sequence of ids, evaluated window by
/// window with recurrent state carried between windows.
pub trait Objective<T: Real> {
    type Params: ParamSet<T>;
    type State: Clone;

    fn initial_state(&self, params: &Self::Params) -> Self::State;

    /// Mean NLL of predicting `ids[t+1]` for `t` in `window.start..window.end-1`,
    /// its gradient, and the state after consuming `ids[window.start..window.end-1]`.
    fn loss_grad(
        &self,
        params: &Self::Params,
        ids: &[usize],
        window: Range<usize>,
        state: &Self::State,
    ) -> Result<(T, Self::Params, Self::State)>;
}

/// Rescales `grads` so its global L2 norm is at most `threshold`.
pub fn clip_gradients<T: Real, P: ParamSet<T>>(grads: &mut P, threshold: T) {
    let norm = grads.l2_norm();
    if norm > threshold {
        grads.scale(threshold / norm);
        // rounding can leave the norm a few ulps above the threshold; pull it
        // under so a second clip is a no-op
        let shrink = T::one() - T::epsilon();
        while grads.l2_norm() > threshold {
            grads.scale(shrink);
        }
    }
}

/// Halve the rate when per-character perplexity rose by more than one.
pub fn next_learning_rate(lr: f64, prev_loglik: f64, cur_loglik: f64) -> f64 {
    if (-cur_loglik).exp() > (-prev_loglik).exp() + 1.0 {
        lr / 2.0
    } else {
        lr
    }
}

/// Plain SGD over successive windows of `range`, `config.epochs` epochs.
pub fn sgd_fit<T: Real, O: Objective<T>>(
    objective: &O,
    params: &mut O::Params,
    config: &LstmConfig,
    ids: &[usize],
    range: Range<usize>,
) -> Result<TrainTrace> {
    config.validate()?;
    if range.len() < 2 || range.end > ids.len() {
        return Err(Error::invalid("training range needs at least 2 characters"));
    }
    let mut trace = TrainTrace::default();
    let mut lr = config.lr0;
    let clip = T::of(config.clip_threshold);
    for epoch in 0..config.epochs {
        let mut state = objective.initial_state(params);
        let mut total = 0.0;
        let mut count = 0usize;
        let mut start = range.start;
        while start + 1 < range.end {
            let end = (start + config.bptt_len + 1).min(range.end);
            let (nll, mut grads, next) = objective.loss_grad(params, ids, start..end, &state)?;
            let nll = nll.to_f64_lossy();
            if !nll.is_finite() {
                return Err(Error::NonFinite {
                    what: "training loss (window start)",
                    index: start,
                });
            }
            let n = end - start - 1;
            total += nll * n as f64;
            count += n;
            clip_gradients(&mut grads, clip);
            params.add_scaled(-T::of(lr), &grads);
            state = next;
            start = end - 1;
        }
        let loglik = -total / count as f64;
        trace.epoch_loglik.push(loglik);
        trace.epoch_lr.push(lr);
        debug!("epoch {}: train loglik {loglik:.4}, lr {lr}", epoch + 1);
        if epoch >= 1 {
            lr = next_learning_rate(lr, trace.epoch_loglik[epoch - 1], loglik);
        }
    }
    Ok(trace)
}
