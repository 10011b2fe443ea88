//! Hybrid whose HMM is a differentiable forward filter over softmaxed
//! logits, trained by SGD together with the LSTM.
//!
//! The filter runs on the same inputs as the LSTM: after consuming `y_t` it
//! holds `p_t = P(x_t | y_0..=y_t)`, which joins `h_t` at the output layer.
//! Across training windows the filter value is carried but its gradient is
//! cut, like the LSTM state.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::sequential::HybridParams;
use crate::error::{Error, Result};
use crate::lstm::{
    check_window, sgd_fit, xent_grad, EncodedCorpus, Linear, LstmConfig, LstmCore, LstmState,
    Objective, ParamSet, TrainTrace,
};
use crate::numeric::{
    log_softmax_at, softmax_in_place, softmax_rows, DenseMatrix, RandomSource, Real,
};

/// Spread of the uniform draw for the HMM logits at initialization; wide
/// enough that the states start out distinguishable.
const HMM_LOGIT_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHybridParams<T> {
    pub core: LstmCore<T>,
    /// `n × n`; row-softmax gives the transition matrix.
    pub trans_logits: DenseMatrix<T>,
    /// `n × V`; row-softmax gives the emission matrix.
    pub emit_logits: DenseMatrix<T>,
    /// Softmax gives the initial distribution.
    pub init_logits: Vec<T>,
    /// `V × (h + n)`.
    pub output: Linear<T>,
}

impl<T: Real> JointHybridParams<T> {
    pub fn zeros(vocab_size: usize, hidden: usize, layers: usize, n_hmm: usize) -> Self {
        Self {
            core: LstmCore::zeros(vocab_size, hidden, layers),
            trans_logits: DenseMatrix::zeros(n_hmm, n_hmm),
            emit_logits: DenseMatrix::zeros(n_hmm, vocab_size),
            init_logits: vec![T::zero(); n_hmm],
            output: Linear::zeros(vocab_size, hidden + n_hmm),
        }
    }

    /// LSTM and output layer as [`HybridParams::init`]; HMM logits uniform
    /// in `±HMM_LOGIT_SCALE`.
    pub fn init(
        vocab_size: usize,
        n_hmm: usize,
        config: &LstmConfig,
        rng: &mut RandomSource,
    ) -> Self {
        let base = HybridParams::<T>::init(vocab_size, n_hmm, config, rng);
        let mut r = rng.substream("joint-hmm-init");
        let mut draw = |_, _| T::of((2.0 * r.uniform() - 1.0) * HMM_LOGIT_SCALE);
        let trans_logits = DenseMatrix::from_fn(n_hmm, n_hmm, &mut draw);
        let emit_logits = DenseMatrix::from_fn(n_hmm, vocab_size, &mut draw);
        let init_logits = (0..n_hmm).map(|i| draw(i, 0)).collect();
        Self {
            core: base.core,
            trans_logits,
            emit_logits,
            init_logits,
            output: base.output,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.core.vocab_size()
    }

    pub fn hidden_dim(&self) -> usize {
        self.core.hidden_dim()
    }

    pub fn n_hmm(&self) -> usize {
        self.init_logits.len()
    }

    pub fn zero_state(&self) -> JointState<T> {
        JointState {
            lstm: self.core.zero_state(),
            filter: None,
        }
    }

    /// Softmaxed `(transitions, emissions, initial)`.
    pub fn hmm_probabilities(&self) -> Result<(DenseMatrix<T>, DenseMatrix<T>, Vec<T>)> {
        let a = softmax_rows(&self.trans_logits)?;
        let b = softmax_rows(&self.emit_logits)?;
        if self.init_logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "initial logits",
                index: 0,
            });
        }
        let mut pi = self.init_logits.clone();
        softmax_in_place(&mut pi);
        Ok((a, b, pi))
    }
}

impl<T: Real> ParamSet<T> for JointHybridParams<T> {
    fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out = self.core.tensors();
        out.push(("output.w".into(), self.output.weight.as_slice()));
        out.push(("output.b".into(), &self.output.bias));
        out.push(("hmm.trans_logits".into(), self.trans_logits.as_slice()));
        out.push(("hmm.emit_logits".into(), self.emit_logits.as_slice()));
        out.push(("hmm.init_logits".into(), &self.init_logits));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = self.core.tensors_mut();
        out.push(self.output.weight.as_mut_slice());
        out.push(&mut self.output.bias);
        out.push(self.trans_logits.as_mut_slice());
        out.push(self.emit_logits.as_mut_slice());
        out.push(&mut self.init_logits);
        out
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(
            self.vocab_size(),
            self.hidden_dim(),
            self.core.num_layers(),
            self.n_hmm(),
        )
    }
}

/// LSTM state plus the last filtered distribution (`None` before the first
/// character, in which case the filter starts from the initial distribution).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState<T> {
    pub lstm: LstmState<T>,
    pub filter: Option<Vec<T>>,
}

struct FilterTrace<T> {
    preds: DenseMatrix<T>,
    sums: Vec<T>,
    dists: DenseMatrix<T>,
}

fn run_filter<T: Real>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    pi: &[T],
    ids: &[usize],
    prev: Option<&[T]>,
) -> Result<FilterTrace<T>> {
    let n = pi.len();
    let mut preds = DenseMatrix::zeros(ids.len(), n);
    let mut dists = DenseMatrix::zeros(ids.len(), n);
    let mut sums = Vec::with_capacity(ids.len());
    for (t, &y) in ids.iter().enumerate() {
        if y >= b.cols() {
            return Err(Error::invalid(format!(
                "character id {y} outside vocabulary"
            )));
        }
        let before: Option<Vec<T>> = if t == 0 {
            prev.map(<[T]>::to_vec)
        } else {
            Some(dists.row(t - 1).to_vec())
        };
        let pred = preds.row_mut(t);
        match before {
            Some(p) => {
                for (j, out) in pred.iter_mut().enumerate() {
                    *out = (0..n).map(|i| p[i] * a[(i, j)]).sum();
                }
            }
            None => pred.copy_from_slice(pi),
        }
        let mut s = T::zero();
        let row = dists.row_mut(t);
        for j in 0..n {
            row[j] = preds[(t, j)] * b[(j, y)];
            s += row[j];
        }
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::ImpossibleObservation { t });
        }
        row.iter_mut().for_each(|x| *x /= s);
        sums.push(s);
    }
    Ok(FilterTrace { preds, sums, dists })
}

#[derive(Debug, Clone)]
pub struct JointForward<T> {
    pub hidden: DenseMatrix<T>,
    /// Filtered distribution after each id.
    pub dists: DenseMatrix<T>,
    pub logits: DenseMatrix<T>,
    pub state: JointState<T>,
}

fn concat<T: Real>(buf: &mut [T], h: &[T], p: &[T]) {
    let (l, r) = buf.split_at_mut(h.len());
    l.copy_from_slice(h);
    r.copy_from_slice(p);
}

pub fn joint_hybrid_forward<T: Real>(
    params: &JointHybridParams<T>,
    ids: &[usize],
    state0: &JointState<T>,
) -> Result<JointForward<T>> {
    let (a, b, pi) = params.hmm_probabilities()?;
    let filt = run_filter(&a, &b, &pi, ids, state0.filter.as_deref())?;
    let (hidden, lstm) = params.core.run(ids, &state0.lstm)?;
    let mut logits = DenseMatrix::zeros(ids.len(), params.vocab_size());
    let mut x = vec![T::zero(); params.hidden_dim() + params.n_hmm()];
    for t in 0..ids.len() {
        concat(&mut x, hidden.row(t), filt.dists.row(t));
        params.output.forward_into(&x, logits.row_mut(t));
    }
    let filter = ids
        .last()
        .map(|_| filt.dists.row(ids.len() - 1).to_vec())
        .or_else(|| state0.filter.clone());
    Ok(JointForward {
        hidden,
        dists: filt.dists,
        logits,
        state: JointState { lstm, filter },
    })
}

/// `d logits = p ⊙ (g - g·p)` for each row.
fn softmax_backward_rows<T: Real>(probs: &DenseMatrix<T>, grad: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = DenseMatrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let g = grad.row(r);
        let gp: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for (o, (&pj, &gj)) in out.row_mut(r).iter_mut().zip(p.iter().zip(g)) {
            *o = pj * (gj - gp);
        }
    }
    out
}

/// Mean next-character NLL over the window, gradients for every parameter
/// group, and the carried state.
pub fn joint_loss_grad<T: Real>(
    params: &JointHybridParams<T>,
    ids: &[usize],
    state0: &JointState<T>,
) -> Result<(T, JointHybridParams<T>, JointState<T>)> {
    check_window(ids.len())?;
    let inputs = &ids[..ids.len() - 1];
    let len = inputs.len();
    let n = params.n_hmm();
    let h = params.hidden_dim();
    let v = params.vocab_size();
    let (a, b, pi) = params.hmm_probabilities()?;
    let filt = run_filter(&a, &b, &pi, inputs, state0.filter.as_deref())?;
    let trace = params.core.forward_trace(inputs, &state0.lstm)?;

    let scale = T::one() / T::of(len as f64);
    let mut grads = params.zeros_like();
    let mut d_hidden = DenseMatrix::zeros(len, h);
    let mut d_dists = DenseMatrix::zeros(len, n);
    let mut x = vec![T::zero(); h + n];
    let mut logits = vec![T::zero(); v];
    let mut d_logits = vec![T::zero(); v];
    let mut nll = T::zero();
    for t in 0..len {
        concat(&mut x, trace.hidden.row(t), filt.dists.row(t));
        params.output.forward_into(&x, &mut logits);
        nll -= xent_grad(&logits, ids[t + 1], scale, &mut d_logits);
        let dx = params
            .output
            .backward_accumulate(&x, &d_logits, &mut grads.output);
        d_hidden.row_mut(t).copy_from_slice(&dx[..h]);
        d_dists.row_mut(t).copy_from_slice(&dx[h..]);
    }
    grads.core = params.core.backward(&trace, &d_hidden);

    // back through the normalized filter
    let mut d_a = DenseMatrix::zeros(n, n);
    let mut d_b = DenseMatrix::zeros(n, v);
    let mut d_pi = vec![T::zero(); n];
    let mut dq = vec![T::zero(); n];
    let mut d_pred = vec![T::zero(); n];
    for t in (0..len).rev() {
        let y = inputs[t];
        let p = filt.dists.row(t);
        let g = d_dists.row(t);
        let gp: T = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
        let s = filt.sums[t];
        for j in 0..n {
            dq[j] = (g[j] - gp) / s;
            d_b[(j, y)] += dq[j] * filt.preds[(t, j)];
            d_pred[j] = dq[j] * b[(j, y)];
        }
        if t > 0 {
            for i in 0..n {
                let prev = filt.dists[(t - 1, i)];
                let mut acc = T::zero();
                for j in 0..n {
                    d_a[(i, j)] += prev * d_pred[j];
                    acc += a[(i, j)] * d_pred[j];
                }
                d_dists[(t - 1, i)] += acc;
            }
        } else if let Some(prev) = &state0.filter {
            // the carried value still passes through A; only its own gradient is cut
            for (i, &w) in prev.iter().enumerate() {
                for j in 0..n {
                    d_a[(i, j)] += w * d_pred[j];
                }
            }
        } else {
            for (d, &g) in d_pi.iter_mut().zip(&d_pred) {
                *d += g;
            }
        }
    }
    grads.trans_logits = softmax_backward_rows(&a, &d_a);
    grads.emit_logits = softmax_backward_rows(&b, &d_b);
    let pi_m = DenseMatrix::from_vec(1, n, pi)?;
    grads.init_logits =
        softmax_backward_rows(&pi_m, &DenseMatrix::from_vec(1, n, d_pi)?).into_vec();

    let state = JointState {
        lstm: trace.final_state,
        filter: Some(filt.dists.row(len - 1).to_vec()),
    };
    Ok((nll * scale, grads, state))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct JointObjective;

impl<T: Real> Objective<T> for JointObjective {
    type Params = JointHybridParams<T>;
    type State = JointState<T>;

    fn initial_state(&self, params: &JointHybridParams<T>) -> JointState<T> {
        params.zero_state()
    }

    fn loss_grad(
        &self,
        params: &JointHybridParams<T>,
        ids: &[usize],
        window: Range<usize>,
        state: &JointState<T>,
    ) -> Result<(T, JointHybridParams<T>, JointState<T>)> {
        joint_loss_grad(params, &ids[window], state)
    }
}

pub fn train_joint_hybrid<T: Real>(
    config: &LstmConfig,
    corpus: &EncodedCorpus,
    n_hmm: usize,
    rng: &mut RandomSource,
) -> Result<(JointHybridParams<T>, TrainTrace)> {
    config.validate()?;
    if n_hmm == 0 {
        return Err(Error::invalid("joint hybrid needs at least one HMM state"));
    }
    let mut params: JointHybridParams<T> =
        JointHybridParams::init(corpus.vocab_size(), n_hmm, config, rng);
    let mut trace = sgd_fit(
        &JointObjective,
        &mut params,
        config,
        &corpus.ids,
        corpus.train.clone(),
    )?;
    trace.validation_loglik =
        Some(eval_joint_hybrid(&params, corpus, corpus.valid.clone())?.to_f64_lossy());
    Ok((params, trace))
}

/// Mean log P(next char) over `range`; LSTM and filter both start fresh at
/// `range.start`.
pub fn eval_joint_hybrid<T: Real>(
    params: &JointHybridParams<T>,
    corpus: &EncodedCorpus,
    range: Range<usize>,
) -> Result<T> {
    check_window(range.len())?;
    let ids = &corpus.ids[range.clone()];
    let out = joint_hybrid_forward(params, &ids[..ids.len() - 1], &params.zero_state())?;
    let total: T = (0..ids.len() - 1)
        .map(|t| log_softmax_at(out.logits.row(t), ids[t + 1]))
        .sum();
    Ok(total / T::of((ids.len() - 1) as f64))
}
