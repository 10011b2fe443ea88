//! Character scoring with a Gaussian-emission HMM over LSTM hidden states.
//!
//! The HMM is fit to the top-layer hidden vectors; each state also carries a
//! categorical distribution over characters, estimated from filtered state
//! weights on the training text. The next-character prediction after step
//! `t` is `Σ_j (p_t A)_j C[j, y]`, so it only sees characters up to `t`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::hmm::{
    forward_filter, gibbs_train_continuous, ContinuousHmm, GibbsTrace, HiddenMarkov, HmmHyper,
};
use crate::lstm::{check_window, EncodedCorpus, LstmParams};
use crate::numeric::{DenseMatrix, RandomSource};

type Matrix = DenseMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousHmmLm {
    pub lstm: LstmParams<f64>,
    pub hmm: ContinuousHmm,
    /// `n × V`, rows sum to one.
    pub char_emissions: Matrix,
}

fn hidden_over(
    lstm: &LstmParams<f64>,
    corpus: &EncodedCorpus,
    range: Range<usize>,
) -> Result<Matrix> {
    let (hidden, _) = lstm.core.run(&corpus.ids[range], &lstm.zero_state())?;
    Ok(hidden)
}

impl ContinuousHmmLm {
    pub fn fit(
        lstm: LstmParams<f64>,
        corpus: &EncodedCorpus,
        n: usize,
        iters: usize,
        hyper: &HmmHyper,
        rng: &mut RandomSource,
    ) -> Result<(Self, GibbsTrace)> {
        let hidden = hidden_over(&lstm, corpus, corpus.train.clone())?;
        let (hmm, trace) = gibbs_train_continuous(&hidden, n, iters, hyper, rng)?;
        let dists = forward_filter(&hmm, &hidden)?.dists;
        let v = corpus.vocab_size();
        let mut counts = Matrix::filled(n, v, hyper.beta);
        for (row, &y) in dists.iter_rows().zip(corpus.train_ids()) {
            for (j, &p) in row.iter().enumerate() {
                counts[(j, y)] += p;
            }
        }
        for r in 0..n {
            let s: f64 = counts.row(r).iter().sum();
            counts.row_mut(r).iter_mut().for_each(|x| *x /= s);
        }
        Ok((
            Self {
                lstm,
                hmm,
                char_emissions: counts,
            },
            trace,
        ))
    }

    pub fn n_states(&self) -> usize {
        self.hmm.n_states()
    }

    /// Mean log P(next char) over `range`, LSTM and filter starting fresh.
    pub fn eval_loglik(&self, corpus: &EncodedCorpus, range: Range<usize>) -> Result<f64> {
        check_window(range.len())?;
        if corpus.vocab_size() != self.char_emissions.cols() {
            return Err(Error::Shape(
                "corpus vocabulary differs from the model's".into(),
            ));
        }
        let ids = &corpus.ids[range.clone()];
        let hidden = hidden_over(&self.lstm, corpus, range)?;
        let dists = forward_filter(&self.hmm, &hidden)?.dists;
        let a = self.hmm.transitions();
        let mut total = 0.0;
        for t in 0..ids.len() - 1 {
            let pred = a.matvec_t(dists.row(t));
            let y = ids[t + 1];
            let p: f64 = pred
                .iter()
                .enumerate()
                .map(|(j, &w)| w * self.char_emissions[(j, y)])
                .sum();
            total += p.ln();
        }
        Ok(total / (ids.len() - 1) as f64)
    }
}
