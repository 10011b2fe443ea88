//! LSTM whose output layer also reads the filtered state distribution of a
//! separately trained, frozen HMM.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{forward_filter, DiscreteHmm, HiddenMarkov, StateDistSeq};
use crate::lstm::sgd_fit;
use crate::lstm::{
    check_window, xent_grad, EncodedCorpus, Linear, LstmConfig, LstmCore, LstmParams, LstmState,
    Objective, ParamSet, TrainTrace,
};
use crate::numeric::{log_softmax_at, DenseMatrix, RandomSource, Real};

/// Filtered HMM state distributions for every corpus position; row `t`
/// has seen `y_0..=y_t` only.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmFeatureTrack {
    pub dists: StateDistSeq,
}

impl HmmFeatureTrack {
    pub fn n_states(&self) -> usize {
        self.dists.cols()
    }

    pub fn len(&self) -> usize {
        self.dists.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.rows() == 0
    }

    /// Every row `1/n`.
    pub fn uniform(len: usize, n: usize) -> Self {
        Self {
            dists: DenseMatrix::filled(len, n, 1.0 / n as f64),
        }
    }

    fn check_covers(&self, range: &Range<usize>, n_hmm: usize) -> Result<()> {
        if range.end > self.len() {
            return Err(Error::Shape(format!(
                "HMM track has {} rows, positions up to {} requested",
                self.len(),
                range.end
            )));
        }
        if self.n_states() != n_hmm {
            return Err(Error::Shape(format!(
                "HMM track has {} states, model expects {n_hmm}",
                self.n_states()
            )));
        }
        Ok(())
    }
}

/// Forward filter of `hmm` over the whole corpus, train and validation
/// contiguously.
pub fn precompute_hmm_track(hmm: &DiscreteHmm, corpus: &EncodedCorpus) -> Result<HmmFeatureTrack> {
    if hmm.vocab_size() != corpus.vocab_size() {
        return Err(Error::Shape(format!(
            "HMM vocabulary {} differs from corpus vocabulary {}",
            hmm.vocab_size(),
            corpus.vocab_size()
        )));
    }
    let dists = forward_filter(hmm, &corpus.ids[..])?.dists;
    debug_assert_eq!(dists.cols(), hmm.n_states());
    Ok(HmmFeatureTrack { dists })
}

/// LSTM core plus an output layer over `[h_t, p_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridParams<T> {
    pub core: LstmCore<T>,
    pub n_hmm: usize,
    /// `V × (h + n_hmm)`; the first `h` columns read the LSTM.
    pub output: Linear<T>,
}

impl<T: Real> HybridParams<T> {
    pub fn zeros(vocab_size: usize, hidden: usize, layers: usize, n_hmm: usize) -> Self {
        Self {
            core: LstmCore::zeros(vocab_size, hidden, layers),
            n_hmm,
            output: Linear::zeros(vocab_size, hidden + n_hmm),
        }
    }

    /// Same LSTM weights as [`LstmParams::init`] under the same rng, plus
    /// freshly drawn HMM columns.
    pub fn init(
        vocab_size: usize,
        n_hmm: usize,
        config: &LstmConfig,
        rng: &mut RandomSource,
    ) -> Self {
        let lstm = LstmParams::init(vocab_size, config, rng);
        let mut cols = rng.substream("hybrid-output-init");
        let extra = Linear::<T>::init(vocab_size, n_hmm, config.init_scale, &mut cols);
        Self::widen(lstm, &extra.weight)
    }

    /// Hybrid that ignores its HMM input: HMM columns all zero.
    pub fn from_lstm(lstm: LstmParams<T>, n_hmm: usize) -> Self {
        let v = lstm.vocab_size();
        Self::widen(lstm, &DenseMatrix::zeros(v, n_hmm))
    }

    fn widen(lstm: LstmParams<T>, hmm_cols: &DenseMatrix<T>) -> Self {
        let h = lstm.hidden_dim();
        let n = hmm_cols.cols();
        let v = lstm.vocab_size();
        let w = &lstm.output.weight;
        let weight = DenseMatrix::from_fn(v, h + n, |r, c| {
            if c < h {
                w[(r, c)]
            } else {
                hmm_cols[(r, c - h)]
            }
        });
        Self {
            core: lstm.core,
            n_hmm: n,
            output: Linear {
                weight,
                bias: lstm.output.bias,
            },
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.core.vocab_size()
    }

    pub fn hidden_dim(&self) -> usize {
        self.core.hidden_dim()
    }

    pub fn zero_state(&self) -> LstmState<T> {
        self.core.zero_state()
    }
}

impl<T: Real> ParamSet<T> for HybridParams<T> {
    fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out = self.core.tensors();
        out.push(("output.w".into(), self.output.weight.as_slice()));
        out.push(("output.b".into(), &self.output.bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = self.core.tensors_mut();
        out.push(self.output.weight.as_mut_slice());
        out.push(&mut self.output.bias);
        out
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(
            self.vocab_size(),
            self.hidden_dim(),
            self.core.num_layers(),
            self.n_hmm,
        )
    }
}

/// Writes `[h, p]` into `buf`, casting the f64 track row to `T`.
pub(crate) fn concat_into<T: Real>(buf: &mut [T], h: &[T], p: &[f64]) {
    let (left, right) = buf.split_at_mut(h.len());
    left.copy_from_slice(h);
    for (dst, &x) in right.iter_mut().zip(p) {
        *dst = T::of(x);
    }
}

#[derive(Debug, Clone)]
pub struct HybridForward<T> {
    pub hidden: DenseMatrix<T>,
    pub logits: DenseMatrix<T>,
    pub state: LstmState<T>,
}

/// `logits_t = W [h_t, p_t] + b`, with `features` row `t` aligned to `ids[t]`.
pub fn hybrid_forward<T: Real>(
    params: &HybridParams<T>,
    ids: &[usize],
    features: &StateDistSeq,
    state0: &LstmState<T>,
) -> Result<HybridForward<T>> {
    if features.rows() != ids.len() || features.cols() != params.n_hmm {
        return Err(Error::Shape(format!(
            "features {:?} not aligned with {} ids and {} HMM states",
            features.shape(),
            ids.len(),
            params.n_hmm
        )));
    }
    let (hidden, state) = params.core.run(ids, state0)?;
    let mut logits = DenseMatrix::zeros(ids.len(), params.vocab_size());
    let mut x = vec![T::zero(); params.hidden_dim() + params.n_hmm];
    for t in 0..ids.len() {
        concat_into(&mut x, hidden.row(t), features.row(t));
        params.output.forward_into(&x, logits.row_mut(t));
    }
    Ok(HybridForward {
        hidden,
        logits,
        state,
    })
}

/// Mean next-character NLL over `ids`, gradients, and the carried state.
/// `features` row `t` goes with input `ids[t]`, so it needs `ids.len() - 1`
/// rows at least.
pub fn hybrid_loss_grad<T: Real>(
    params: &HybridParams<T>,
    ids: &[usize],
    features: &StateDistSeq,
    state0: &LstmState<T>,
) -> Result<(T, HybridParams<T>, LstmState<T>)> {
    check_window(ids.len())?;
    let inputs = &ids[..ids.len() - 1];
    let n = inputs.len();
    if features.rows() < n || features.cols() != params.n_hmm {
        return Err(Error::Shape("HMM features not aligned with window".into()));
    }
    let trace = params.core.forward_trace(inputs, state0)?;
    let h = params.hidden_dim();
    let scale = T::one() / T::of(n as f64);
    let mut grads = params.zeros_like();
    let mut d_hidden = DenseMatrix::zeros(n, h);
    let mut x = vec![T::zero(); h + params.n_hmm];
    let mut logits = vec![T::zero(); params.vocab_size()];
    let mut d_logits = vec![T::zero(); params.vocab_size()];
    let mut nll = T::zero();
    for t in 0..n {
        concat_into(&mut x, trace.hidden.row(t), features.row(t));
        params.output.forward_into(&x, &mut logits);
        nll -= xent_grad(&logits, ids[t + 1], scale, &mut d_logits);
        let dx = params
            .output
            .backward_accumulate(&x, &d_logits, &mut grads.output);
        d_hidden.row_mut(t).copy_from_slice(&dx[..h]);
    }
    grads.core = params.core.backward(&trace, &d_hidden);
    Ok((nll * scale, grads, trace.final_state))
}

/// Sequential-hybrid objective reading a cached track indexed by corpus position.
#[derive(Debug, Clone, Copy)]
pub struct SequentialObjective<'a> {
    pub track: &'a HmmFeatureTrack,
}

impl<T: Real> Objective<T> for SequentialObjective<'_> {
    type Params = HybridParams<T>;
    type State = LstmState<T>;

    fn initial_state(&self, params: &HybridParams<T>) -> LstmState<T> {
        params.zero_state()
    }

    fn loss_grad(
        &self,
        params: &HybridParams<T>,
        ids: &[usize],
        window: Range<usize>,
        state: &LstmState<T>,
    ) -> Result<(T, HybridParams<T>, LstmState<T>)> {
        self.track.check_covers(&window, params.n_hmm)?;
        let feats = self.track.dists.slice_rows(window.start..window.end - 1);
        hybrid_loss_grad(params, &ids[window], &feats, state)
    }
}

/// Trains LSTM and augmented output layer on a fixed track; the HMM that
/// produced it is not touched.
pub fn train_sequential_hybrid_on_track<T: Real>(
    config: &LstmConfig,
    corpus: &EncodedCorpus,
    track: &HmmFeatureTrack,
    rng: &mut RandomSource,
) -> Result<(HybridParams<T>, TrainTrace)> {
    config.validate()?;
    track.check_covers(&(0..corpus.len()), track.n_states())?;
    let mut params: HybridParams<T> =
        HybridParams::init(corpus.vocab_size(), track.n_states(), config, rng);
    let objective = SequentialObjective { track };
    let mut trace = sgd_fit(
        &objective,
        &mut params,
        config,
        &corpus.ids,
        corpus.train.clone(),
    )?;
    trace.validation_loglik =
        Some(eval_hybrid(&params, corpus, corpus.valid.clone(), track)?.to_f64_lossy());
    Ok((params, trace))
}

pub fn train_sequential_hybrid<T: Real>(
    config: &LstmConfig,
    corpus: &EncodedCorpus,
    hmm: &DiscreteHmm,
    rng: &mut RandomSource,
) -> Result<(HybridParams<T>, TrainTrace)> {
    let track = precompute_hmm_track(hmm, corpus)?;
    train_sequential_hybrid_on_track(config, corpus, &track, rng)
}

/// Mean log P(next char) over `range`, LSTM from a zero state at
/// `range.start`, HMM features read from the full-corpus track.
pub fn eval_hybrid<T: Real>(
    params: &HybridParams<T>,
    corpus: &EncodedCorpus,
    range: Range<usize>,
    track: &HmmFeatureTrack,
) -> Result<T> {
    check_window(range.len())?;
    track.check_covers(&range, params.n_hmm)?;
    let mut state = params.zero_state();
    let mut x = vec![T::zero(); params.hidden_dim() + params.n_hmm];
    let mut logits = vec![T::zero(); params.vocab_size()];
    let mut total = T::zero();
    for t in range.start..range.end - 1 {
        params.core.step(corpus.ids[t], &mut state)?;
        concat_into(&mut x, state.top_hidden(), track.dists.row(t));
        params.output.forward_into(&x, &mut logits);
        total += log_softmax_at(&logits, corpus.ids[t + 1]);
    }
    Ok(total / T::of((range.len() - 1) as f64))
}
