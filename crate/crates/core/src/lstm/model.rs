use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::cell::{Linear, LstmCore, LstmState};
use super::corpus::EncodedCorpus;
use super::train::{sgd_fit, LstmConfig, Objective, ParamSet, TrainTrace};
use crate::error::{Error, Result};
use crate::numeric::{log_softmax_at, DenseMatrix, RandomSource, Real};

/// Character LSTM language model: embedding, LSTM stack, softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams<T> {
    pub core: LstmCore<T>,
    pub output: Linear<T>,
}

impl<T: Real> LstmParams<T> {
    pub fn zeros(vocab_size: usize, hidden: usize, layers: usize) -> Self {
        Self {
            core: LstmCore::zeros(vocab_size, hidden, layers),
            output: Linear::zeros(vocab_size, hidden),
        }
    }

    pub fn init(vocab_size: usize, config: &LstmConfig, rng: &mut RandomSource) -> Self {
        let mut rng = rng.substream("lstm-init");
        let core = LstmCore::init(
            vocab_size,
            config.hidden_dim,
            config.layers,
            config.init_scale,
            &mut rng,
        );
        let output = Linear::init(vocab_size, config.hidden_dim, config.init_scale, &mut rng);
        Self { core, output }
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

impl<T: Real> ParamSet<T> for LstmParams<T> {
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
        Self::zeros(self.vocab_size(), self.hidden_dim(), self.core.num_layers())
    }
}

/// Output of [`lstm_forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub hidden: DenseMatrix<T>,
    pub logits: DenseMatrix<T>,
    pub state: LstmState<T>,
}

/// Hidden states and next-character logits for every position of `ids`.
pub fn lstm_forward<T: Real>(
    params: &LstmParams<T>,
    ids: &[usize],
    state0: &LstmState<T>,
) -> Result<ForwardOutput<T>> {
    let (hidden, state) = params.core.run(ids, state0)?;
    let v = params.vocab_size();
    let mut logits = DenseMatrix::zeros(ids.len(), v);
    for t in 0..ids.len() {
        params.output.forward_into(hidden.row(t), logits.row_mut(t));
    }
    Ok(ForwardOutput {
        hidden,
        logits,
        state,
    })
}

/// Log-probability of `target` under softmax(`logits`) and, scaled by
/// `scale`, the gradient of its negation with respect to the logits.
pub(crate) fn xent_grad<T: Real>(logits: &[T], target: usize, scale: T, d_logits: &mut [T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (d, &z) in d_logits.iter_mut().zip(logits) {
        *d = (z - max).exp();
        sum += *d;
    }
    for d in d_logits.iter_mut() {
        *d = *d / sum * scale;
    }
    d_logits[target] -= scale;
    logits[target] - max - sum.ln()
}

pub(crate) fn check_window(len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::invalid(format!(
            "window of length {len}; need at least 2"
        )));
    }
    Ok(())
}

/// Mean next-character NLL over a window, exact gradients, and the state
/// after consuming all but the last id. No gradient flows into `state0`.
pub fn lstm_loss_grad<T: Real>(
    params: &LstmParams<T>,
    ids: &[usize],
    state0: &LstmState<T>,
) -> Result<(T, LstmParams<T>, LstmState<T>)> {
    check_window(ids.len())?;
    let inputs = &ids[..ids.len() - 1];
    let trace = params.core.forward_trace(inputs, state0)?;
    let n = inputs.len();
    let scale = T::one() / T::of(n as f64);
    let v = params.vocab_size();
    let mut grads = params.zeros_like();
    let mut d_hidden = DenseMatrix::zeros(n, params.hidden_dim());
    let mut logits = vec![T::zero(); v];
    let mut d_logits = vec![T::zero(); v];
    let mut nll = T::zero();
    for t in 0..n {
        let h = trace.hidden.row(t);
        params.output.forward_into(h, &mut logits);
        nll -= xent_grad(&logits, ids[t + 1], scale, &mut d_logits);
        let dh = params
            .output
            .backward_accumulate(h, &d_logits, &mut grads.output);
        d_hidden.row_mut(t).copy_from_slice(&dh);
    }
    grads.core = params.core.backward(&trace, &d_hidden);
    Ok((nll * scale, grads, trace.final_state))
}

/// Plain LSTM objective for [`sgd_fit`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LstmObjective;

impl<T: Real> Objective<T> for LstmObjective {
    type Params = LstmParams<T>;
    type State = LstmState<T>;

    fn initial_state(&self, params: &LstmParams<T>) -> LstmState<T> {
        params.zero_state()
    }

    fn loss_grad(
        &self,
        params: &LstmParams<T>,
        ids: &[usize],
        window: Range<usize>,
        state: &LstmState<T>,
    ) -> Result<(T, LstmParams<T>, LstmState<T>)> {
        lstm_loss_grad(params, &ids[window], state)
    }
}

pub fn train_lstm<T: Real>(
    config: &LstmConfig,
    corpus: &EncodedCorpus,
    rng: &mut RandomSource,
) -> Result<(LstmParams<T>, TrainTrace)> {
    config.validate()?;
    let mut params: LstmParams<T> = LstmParams::init(corpus.vocab_size(), config, rng);
    let mut trace = sgd_fit(
        &LstmObjective,
        &mut params,
        config,
        &corpus.ids,
        corpus.train.clone(),
    )?;
    trace.validation_loglik =
        Some(eval_loglik(&params, corpus, corpus.valid.clone())?.to_f64_lossy());
    Ok((params, trace))
}

/// Sum of next-character log-probabilities over `ids` starting from
/// `state0`, the number of predictions, and the state after consuming all
/// but the last id. Chaining calls over adjacent pieces that overlap by one
/// id reproduces a single pass.
pub fn score_sequence<T: Real>(
    params: &LstmParams<T>,
    ids: &[usize],
    state0: &LstmState<T>,
) -> Result<(T, usize, LstmState<T>)> {
    if ids.is_empty() {
        return Ok((T::zero(), 0, state0.clone()));
    }
    let mut state = state0.clone();
    let mut logits = vec![T::zero(); params.vocab_size()];
    let mut total = T::zero();
    for t in 0..ids.len() - 1 {
        params.core.step(ids[t], &mut state)?;
        params.output.forward_into(state.top_hidden(), &mut logits);
        if ids[t + 1] >= logits.len() {
            return Err(Error::invalid(format!(
                "character id {} outside vocabulary",
                ids[t + 1]
            )));
        }
        total += log_softmax_at(&logits, ids[t + 1]);
    }
    Ok((total, ids.len() - 1, state))
}

/// Mean log P(next char) in nats over `range`, from a zero state at its start.
pub fn eval_loglik<T: Real>(
    params: &LstmParams<T>,
    corpus: &EncodedCorpus,
    range: Range<usize>,
) -> Result<T> {
    check_window(range.len())?;
    let (total, n, _) = score_sequence(params, &corpus.ids[range], &params.zero_state())?;
    Ok(total / T::of(n as f64))
}

/// Top-layer hidden state after each position of `range`.
pub fn extract_hidden_states<T: Real>(
    params: &LstmParams<T>,
    corpus: &EncodedCorpus,
    range: Range<usize>,
) -> Result<DenseMatrix<T>> {
    let (hidden, _) = params.core.run(&corpus.ids[range], &params.zero_state())?;
    Ok(hidden)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::encode_corpus;
    use crate::numeric::{finite_diff_grad, max_relative_error, sigmoid};

    fn random_params(v: usize, h: usize, layers: usize, seed: u64) -> LstmParams<f64> {
        let mut rng = RandomSource::new(seed);
        let mut p = LstmParams::zeros(v, h, layers);
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = rng.uniform() - 0.5;
            }
        }
        p
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = LstmParams::<f64>::zeros(7, 3, 1);
        let out = lstm_forward(&p, &[0, 3, 6, 1], &p.zero_state()).unwrap();
        assert!(out.logits.as_slice().iter().all(|&x| x == 0.0));
        assert!(out.hidden.as_slice().iter().all(|&x| x == 0.0));
        let (nll, _, _) = lstm_loss_grad(&p, &[0, 3, 6, 1, 2], &p.zero_state()).unwrap();
        assert!((nll - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_single_step() {
        // h = 1, V = 1; embedding 0.5 with hand-picked gate weights
        let mut p = LstmParams::<f64>::zeros(1, 1, 1);
        p.core.embedding[(0, 0)] = 0.5;
        let layer = &mut p.core.layers[0];
        // (i, f, g, o)
        let wx = [2.0, -1.0, 3.0, 10.0];
        let b = [0.1, 0.2, -0.3, 0.0];
        for r in 0..4 {
            layer.w_x[(r, 0)] = wx[r];
            layer.w_h[(r, 0)] = 7.0; // h_prev = 0, so these never matter
            layer.b[r] = b[r];
        }
        let mut state = p.zero_state();
        state.layers[0].c[0] = 0.4;
        let out = lstm_forward(&p, &[0], &state).unwrap();
        let i = sigmoid(2.0 * 0.5 + 0.1);
        let f = sigmoid(-1.0 * 0.5 + 0.2);
        let g = f64::tanh(3.0 * 0.5 - 0.3);
        let o = sigmoid(10.0 * 0.5);
        let c = f * 0.4 + i * g;
        let h = o * c.tanh();
        assert!((out.hidden[(0, 0)] - h).abs() < 1e-12);
        assert!((out.state.layers[0].c[0] - c).abs() < 1e-12);
    }

    #[test]
    fn chained_state_matches_single_pass() {
        let p = random_params(5, 3, 2, 1);
        let ids = [0, 1, 4, 2, 2, 3, 0, 1];
        let full = lstm_forward(&p, &ids, &p.zero_state()).unwrap();
        let a = lstm_forward(&p, &ids[..3], &p.zero_state()).unwrap();
        let b = lstm_forward(&p, &ids[3..], &a.state).unwrap();
        let joined: Vec<u64> = a
            .logits
            .as_slice()
            .iter()
            .chain(b.logits.as_slice())
            .map(|x| x.to_bits())
            .collect();
        let whole: Vec<u64> = full.logits.as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(joined, whole);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases: &[(usize, usize, usize, usize)] = &[(5, 3, 1, 6), (4, 2, 2, 5), (6, 4, 1, 8)];
        for (k, &(v, h, layers, len)) in cases.iter().enumerate() {
            let p = random_params(v, h, layers, 10 + k as u64);
            let mut rng = RandomSource::new(99 + k as u64);
            let ids: Vec<usize> = (0..len).map(|_| rng.below(v)).collect();
            let mut state0 = p.zero_state();
            for l in &mut state0.layers {
                l.h.iter_mut().for_each(|x| *x = rng.uniform() - 0.5);
                l.c.iter_mut().for_each(|x| *x = rng.uniform() - 0.5);
            }
            let (_, grads, _) = lstm_loss_grad(&p, &ids, &state0).unwrap();
            let numeric = finite_diff_grad(
                |flat: &[f64]| {
                    let mut q = p.clone();
                    q.assign_flat(flat);
                    lstm_loss_grad(&q, &ids, &state0).unwrap().0
                },
                &p.flatten(),
                1e-5,
            )
            .unwrap();
            let err = max_relative_error(&grads.flatten(), &numeric, 1e-6);
            assert!(err < 1e-4, "case {k}: max relative error {err}");
        }
    }

    #[test]
    fn eval_is_deterministic_and_chains() {
        let corpus = encode_corpus("the cat sat on the mat, the end.", 0.2).unwrap();
        let p = random_params(corpus.vocab_size(), 3, 1, 4);
        let a = eval_loglik(&p, &corpus, 0..corpus.len()).unwrap();
        let b = eval_loglik(&p, &corpus, 0..corpus.len()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());

        let (s1, n1, st) = score_sequence(&p, &corpus.ids[..10], &p.zero_state()).unwrap();
        let (s2, n2, _) = score_sequence(&p, &corpus.ids[9..], &st).unwrap();
        let chained = (s1 + s2) / (n1 + n2) as f64;
        assert!((chained - a).abs() < 1e-12);

        let zero = LstmParams::<f64>::zeros(corpus.vocab_size(), 3, 1);
        let ll = eval_loglik(&zero, &corpus, corpus.train.clone()).unwrap();
        assert!((ll + (corpus.vocab_size() as f64).ln()).abs() < 1e-12);
        assert!(eval_loglik(&zero, &corpus, 0..1).is_err());
    }

    #[test]
    fn hidden_extraction_matches_forward() {
        let corpus = encode_corpus("abcabcabcaab", 0.25).unwrap();
        let p = random_params(corpus.vocab_size(), 5, 1, 8);
        let hs = extract_hidden_states(&p, &corpus, corpus.train.clone()).unwrap();
        let out = lstm_forward(&p, corpus.train_ids(), &p.zero_state()).unwrap();
        assert_eq!(hs, out.hidden);
        assert_eq!(hs.cols(), 5);
        let zero = LstmParams::<f64>::zeros(corpus.vocab_size(), 5, 1);
        let hz = extract_hidden_states(&zero, &corpus, 0..corpus.len()).unwrap();
        assert!(hz.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_out_of_vocab_and_short_windows() {
        let p = LstmParams::<f64>::zeros(3, 2, 1);
        assert!(lstm_forward(&p, &[0, 3], &p.zero_state()).is_err());
        assert!(lstm_loss_grad(&p, &[1], &p.zero_state()).is_err());
    }

    #[test]
    fn training_improves_on_train_data() {
        let text = "abcd".repeat(200);
        let corpus = encode_corpus(&text, 0.1).unwrap();
        let config = LstmConfig {
            hidden_dim: 4,
            epochs: 3,
            bptt_len: 20,
            ..LstmConfig::default()
        };
        let mut rng = RandomSource::new(3);
        let untrained = LstmParams::<f64>::init(corpus.vocab_size(), &config, &mut rng.clone());
        let (trained, trace) = train_lstm::<f64>(&config, &corpus, &mut rng).unwrap();
        assert_eq!(trace.epoch_loglik.len(), 3);
        let before = eval_loglik(&untrained, &corpus, corpus.train.clone()).unwrap();
        let after = eval_loglik(&trained, &corpus, corpus.train.clone()).unwrap();
        assert!(after > before, "{after} <= {before}");
        // learning rate is lr0 / 2^k
        for &lr in &trace.epoch_lr {
            assert_eq!(lr.log2().fract(), 0.0);
        }
    }

    #[test]
    fn single_precision_forward_runs() {
        let p = LstmParams::<f32>::zeros(4, 2, 1);
        let out = lstm_forward(&p, &[0, 1, 2], &p.zero_state()).unwrap();
        assert_eq!(out.logits.shape(), (3, 4));
    }
}
