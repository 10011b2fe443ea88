//! One experiment: load a corpus, train one method, score both splits.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{count_parameters, save_checkpoint, Checkpoint, TrainedModel};
use super::continuous::ContinuousHmmLm;
use super::dataset::{dataset_label, load_dataset, DEFAULT_VALID_FRACTION};
use crate::error::{Error, Result};
use crate::hmm::{gibbs_train_discrete, predictive_loglik, HmmHyper};
use crate::hybrid::{
    eval_hybrid, eval_joint_hybrid, precompute_hmm_track, train_joint_hybrid,
    train_sequential_hybrid,
};
use crate::lstm::{eval_loglik, train_lstm, EncodedCorpus, LstmConfig, LstmParams};
use crate::numeric::RandomSource;

pub const DEFAULT_DISCRETE_ITERS: usize = 100;
pub const DEFAULT_CONTINUOUS_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lstm,
    DiscreteHmm,
    ContinuousHmm,
    Hybrid,
    JointHybrid,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Lstm,
        Method::DiscreteHmm,
        Method::ContinuousHmm,
        Method::Hybrid,
        Method::JointHybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lstm => "lstm",
            Method::DiscreteHmm => "discrete_hmm",
            Method::ContinuousHmm => "continuous_hmm",
            Method::Hybrid => "hybrid",
            Method::JointHybrid => "joint_hybrid",
        }
    }

    /// Name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Lstm => "LSTM",
            Method::DiscreteHmm => "Discrete HMM",
            Method::ContinuousHmm => "Continuous HMM",
            Method::Hybrid => "Hybrid",
            Method::JointHybrid => "Joint hybrid",
        }
    }

    pub fn uses_lstm(self) -> bool {
        self != Method::DiscreteHmm
    }

    pub fn uses_hmm(self) -> bool {
        self != Method::Lstm
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Registry name (`shakespeare`, `linux`, `ptb`, `sample`) or a file path.
    pub dataset: String,
    pub method: Method,
    pub hidden_dim: Option<usize>,
    pub hmm_states: Option<usize>,
    pub seed: u64,
    /// SGD epochs; defaults to the LSTM recipe's.
    pub epochs: Option<usize>,
    /// Gibbs iterations; defaults depend on the emission type.
    pub iters: Option<usize>,
    pub valid_fraction: f64,
    pub layers: usize,
    /// Where to write the checkpoint, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, method: Method) -> Self {
        Self {
            dataset: dataset.into(),
            method,
            hidden_dim: None,
            hmm_states: None,
            seed: 0,
            epochs: None,
            iters: None,
            valid_fraction: DEFAULT_VALID_FRACTION,
            layers: 1,
            checkpoint_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.uses_lstm() && self.hidden_dim.is_none() {
            return Err(Error::invalid(format!(
                "method `{}` needs --hidden-dim",
                self.method
            )));
        }
        if self.method.uses_hmm() && self.hmm_states.is_none() {
            return Err(Error::invalid(format!(
                "method `{}` needs --hmm-states",
                self.method
            )));
        }
        if self.hidden_dim == Some(0) || self.hmm_states == Some(0) {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.layers == 0 {
            return Err(Error::invalid("layers must be at least 1"));
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0) {
            return Err(Error::invalid("valid fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn lstm_config(&self) -> LstmConfig {
        let mut c =
            LstmConfig::with_hidden(self.hidden_dim.unwrap_or(LstmConfig::default().hidden_dim));
        c.layers = self.layers;
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        c
    }

    pub fn gibbs_iters(&self) -> usize {
        self.iters.unwrap_or(match self.method {
            Method::ContinuousHmm => DEFAULT_CONTINUOUS_ITERS,
            _ => DEFAULT_DISCRETE_ITERS,
        })
    }

    /// Short description used in error context and log lines.
    pub fn label(&self) -> String {
        let mut s = format!("{} on {}", self.method, self.dataset);
        if let Some(h) = self.hidden_dim.filter(|_| self.method.uses_lstm()) {
            s.push_str(&format!(", h={h}"));
        }
        if let Some(n) = self.hmm_states.filter(|_| self.method.uses_hmm()) {
            s.push_str(&format!(", n={n}"));
        }
        s.push_str(&format!(", seed {}", self.seed));
        s
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub dataset: String,
    pub method: Method,
    pub parameter_count: usize,
    pub h: Option<usize>,
    pub n_hmm: Option<usize>,
    /// Mean natural-log probability of the next character, validation split.
    pub validation_ll: f64,
    pub training_ll: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl ResultsRow {
    /// Equality ignoring the wall-clock time.
    pub fn same_result(&self, other: &ResultsRow) -> bool {
        ResultsRow {
            wall_time_s: 0.0,
            ..self.clone()
        } == ResultsRow {
            wall_time_s: 0.0,
            ..other.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub row: ResultsRow,
    pub checkpoint: Checkpoint,
}

fn train_model(config: &ExperimentConfig, corpus: &EncodedCorpus) -> Result<TrainedModel> {
    let root = RandomSource::new(config.seed);
    let mut lstm_rng = root.substream("lstm");
    let mut hmm_rng = root.substream("hmm");
    let lstm_config = config.lstm_config();
    let hyper = HmmHyper::default();
    let n = config.hmm_states.unwrap_or(1);
    Ok(match config.method {
        Method::Lstm => TrainedModel::Lstm(train_lstm(&lstm_config, corpus, &mut lstm_rng)?.0),
        Method::DiscreteHmm => {
            let (hmm, _) = gibbs_train_discrete(
                corpus.train_ids(),
                corpus.vocab_size(),
                n,
                config.gibbs_iters(),
                &hyper,
                &mut hmm_rng,
            )?;
            TrainedModel::DiscreteHmm(hmm)
        }
        Method::ContinuousHmm => {
            let lstm: LstmParams<f64> = train_lstm(&lstm_config, corpus, &mut lstm_rng)?.0;
            let (m, _) =
                ContinuousHmmLm::fit(lstm, corpus, n, config.gibbs_iters(), &hyper, &mut hmm_rng)?;
            TrainedModel::ContinuousHmm(Box::new(m))
        }
        Method::Hybrid => {
            let (hmm, _) = gibbs_train_discrete(
                corpus.train_ids(),
                corpus.vocab_size(),
                n,
                config.gibbs_iters(),
                &hyper,
                &mut hmm_rng,
            )?;
            let (params, _) = train_sequential_hybrid(&lstm_config, corpus, &hmm, &mut lstm_rng)?;
            TrainedModel::SequentialHybrid { params, hmm }
        }
        Method::JointHybrid => {
            TrainedModel::JointHybrid(train_joint_hybrid(&lstm_config, corpus, n, &mut lstm_rng)?.0)
        }
    })
}

/// Mean next-character log-likelihood of `model` on `range`.
pub fn evaluate_model(
    model: &TrainedModel,
    corpus: &EncodedCorpus,
    range: std::ops::Range<usize>,
) -> Result<f64> {
    match model {
        TrainedModel::Lstm(p) => eval_loglik(p, corpus, range),
        TrainedModel::DiscreteHmm(h) => predictive_loglik(h, &corpus.ids[range]),
        TrainedModel::ContinuousHmm(m) => m.eval_loglik(corpus, range),
        TrainedModel::SequentialHybrid { params, hmm } => {
            let track = precompute_hmm_track(hmm, corpus)?;
            eval_hybrid(params, corpus, range, &track)
        }
        TrainedModel::JointHybrid(p) => eval_joint_hybrid(p, corpus, range),
    }
}

/// Trains and scores one configuration; deterministic given the config and
/// the corpus bytes. Writes a checkpoint when `checkpoint_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let corpus = load_dataset(&config.dataset, config.valid_fraction)?;
    run_experiment_on(config, &corpus)
}

/// [`run_experiment`] on an already loaded corpus.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    corpus: &EncodedCorpus,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let ctx = || config.label();
    let start = Instant::now();
    log::info!("training {}", ctx());
    let model = train_model(config, corpus).map_err(|e| e.context(ctx()))?;
    let validation_ll =
        evaluate_model(&model, corpus, corpus.valid.clone()).map_err(|e| e.context(ctx()))?;
    let training_ll =
        evaluate_model(&model, corpus, corpus.train.clone()).map_err(|e| e.context(ctx()))?;
    for (what, v) in [("validation", validation_ll), ("training", training_ll)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "log-likelihood",
                index: 0,
            }
            .context(format!("{}: {what} score", ctx())));
        }
    }
    let row = ResultsRow {
        dataset: dataset_label(&config.dataset),
        method: config.method,
        parameter_count: count_parameters(&model),
        h: config.hidden_dim.filter(|_| config.method.uses_lstm()),
        n_hmm: config.hmm_states.filter(|_| config.method.uses_hmm()),
        validation_ll,
        training_ll,
        seed: config.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let checkpoint = Checkpoint {
        model,
        vocab: corpus.vocab.clone(),
        config: serde_json::to_value(config).expect("config serializes"),
    };
    if let Some(dir) = &config.checkpoint_dir {
        save_checkpoint(&checkpoint, dir).map_err(|e| e.context(ctx()))?;
    }
    Ok(ExperimentOutcome { row, checkpoint })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::encode_corpus;

    fn tiny() -> EncodedCorpus {
        encode_corpus(
            &"the quick brown fox jumps over the lazy dog. ".repeat(20),
            0.1,
        )
        .unwrap()
    }

    fn quick(method: Method) -> ExperimentConfig {
        ExperimentConfig {
            hidden_dim: Some(3),
            hmm_states: Some(2),
            epochs: Some(1),
            iters: Some(3),
            seed: 7,
            ..ExperimentConfig::new("tiny", method)
        }
    }

    #[test]
    fn every_method_runs_and_repeats() {
        let corpus = tiny();
        for m in Method::ALL {
            let a = run_experiment_on(&quick(m), &corpus).unwrap();
            let b = run_experiment_on(&quick(m), &corpus).unwrap();
            assert!(a.row.same_result(&b.row), "{m}");
            assert!(a.row.validation_ll < 0.0 && a.row.parameter_count > 0);
        }
    }

    #[test]
    fn missing_fields_are_usage_errors() {
        let c = ExperimentConfig::new("sample", Method::Hybrid);
        assert_eq!(c.validate().unwrap_err().class(), crate::ErrorClass::Usage);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
