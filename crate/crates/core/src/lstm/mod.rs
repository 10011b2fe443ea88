//! Character-level LSTM language model with truncated BPTT.

mod cell;
mod corpus;
mod model;
mod train;

pub use cell::{CoreTrace, LayerState, Linear, LstmCore, LstmLayer, LstmState};
pub use corpus::{encode_corpus, EncodedCorpus, Vocab};
pub(crate) use model::{check_window, xent_grad};
pub use model::{
    eval_loglik, extract_hidden_states, lstm_forward, lstm_loss_grad, score_sequence, train_lstm,
    ForwardOutput, LstmObjective, LstmParams,
};
pub use train::{
    clip_gradients, next_learning_rate, sgd_fit, LstmConfig, Objective, ParamSet, TrainTrace,
};
