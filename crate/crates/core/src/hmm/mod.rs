//! Bayesian hidden Markov models over character ids or real vectors,
//! trained by blocked Gibbs sampling.

mod filter;
mod gibbs;
mod model;
mod posterior;

pub use filter::{
    ffbs_sample, forward_filter, predictive_loglik, predictive_logliks, FilterResult,
};
pub use gibbs::{
    gibbs_train_continuous, gibbs_train_discrete, init_states_continuous, init_states_discrete,
    initial_distribution, GibbsTrace, HmmHyper,
};
pub use model::{
    mvn_log_pdf, ContinuousHmm, DiscreteHmm, HiddenMarkov, StateDistSeq, StateSequence,
};
pub use posterior::{
    count_emissions, count_transitions, sample_dirichlet, sample_emissions_continuous,
    sample_emissions_discrete, sample_inverse_wishart, sample_transitions, NiwParams,
};
