//! The `visualize` pipeline: train a small LSTM and HMM, then render state
//! colorings, a hidden-dimension tree and a PCA summary into one HTML page.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dataset::{dataset_label, load_dataset, DEFAULT_VALID_FRACTION};
use crate::error::{Error, Result};
use crate::hmm::{gibbs_train_discrete, HmmHyper};
use crate::hybrid::precompute_hmm_track;
use crate::interpret::{
    char_window_samples, cluster_states, escape_html, fit_state_dim_tree, hmm_state_labels,
    pca_report, render_tree, CharWindowSample, ColoredText, Palette, PcaReport, RegressionTree,
    TreeFormat, DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF, DEFAULT_WINDOW,
};
use crate::lstm::{extract_hidden_states, train_lstm, EncodedCorpus, LstmConfig, LstmParams};
use crate::numeric::{DenseMatrix, RandomSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizeConfig {
    pub dataset: String,
    pub hidden_dim: usize,
    pub hmm_states: usize,
    pub clusters: usize,
    pub seed: u64,
    pub epochs: usize,
    pub iters: usize,
    pub valid_fraction: f64,
    /// Characters of the corpus shown in each colored panel.
    pub excerpt_chars: usize,
    /// Hidden dimension explained by the tree.
    pub tree_dim: usize,
}

impl Default for VisualizeConfig {
    fn default() -> Self {
        Self {
            dataset: super::dataset::SAMPLE_NAME.to_string(),
            hidden_dim: 5,
            hmm_states: 10,
            clusters: 10,
            seed: 0,
            epochs: 10,
            iters: 100,
            valid_fraction: DEFAULT_VALID_FRACTION,
            excerpt_chars: 3000,
            tree_dim: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VisualizeReport {
    pub html: String,
    pub hmm_labels: Vec<usize>,
    pub cluster_labels: Vec<usize>,
    pub tree: RegressionTree,
    pub pca: PcaReport,
}

/// Samples pairing each position `t` of `range` with the value of hidden
/// dimension `dim` after reading `t-1` (zero before the first character),
/// so a sample's features are exactly the characters the state has read.
fn dimension_samples(
    hidden: &DenseMatrix<f64>,
    corpus: &EncodedCorpus,
    range: std::ops::Range<usize>,
    dim: usize,
) -> Result<Vec<CharWindowSample>> {
    if dim >= hidden.cols() {
        return Err(Error::invalid(format!(
            "hidden dimension {dim} out of range (width {})",
            hidden.cols()
        )));
    }
    if range.end > hidden.rows() {
        return Err(Error::Shape(format!(
            "range end {} past {} hidden rows",
            range.end,
            hidden.rows()
        )));
    }
    let targets: Vec<f64> = range
        .clone()
        .map(|t| if t == 0 { 0.0 } else { hidden[(t - 1, dim)] })
        .collect();
    let ids = &corpus.ids[..range.end];
    let all = char_window_samples(
        ids,
        corpus.vocab_size(),
        &vec![0.0; ids.len()],
        DEFAULT_WINDOW,
    )?;
    Ok(all
        .into_iter()
        .skip(range.start)
        .zip(targets)
        .map(|(s, target)| CharWindowSample { target, ..s })
        .collect())
}

/// Tree predicting hidden dimension `dim` over `range` from the preceding
/// characters. `hidden` holds the states for the whole corpus.
pub fn hidden_dimension_tree(
    hidden: &DenseMatrix<f64>,
    corpus: &EncodedCorpus,
    range: std::ops::Range<usize>,
    dim: usize,
    max_depth: usize,
    min_leaf: usize,
) -> Result<RegressionTree> {
    fit_state_dim_tree(
        &dimension_samples(hidden, corpus, range, dim)?,
        max_depth,
        min_leaf,
    )
}

fn lstm_config(config: &VisualizeConfig) -> LstmConfig {
    LstmConfig {
        epochs: config.epochs,
        ..LstmConfig::with_hidden(config.hidden_dim)
    }
}

/// The tree `visualize` renders, without the HMM, clustering and HTML work.
pub fn fit_hidden_tree(config: &VisualizeConfig, corpus: &EncodedCorpus) -> Result<RegressionTree> {
    let root = RandomSource::new(config.seed);
    let (lstm, _): (LstmParams<f64>, _) =
        train_lstm(&lstm_config(config), corpus, &mut root.substream("lstm"))?;
    let hidden = extract_hidden_states(&lstm, corpus, 0..corpus.len())?;
    hidden_dimension_tree(
        &hidden,
        corpus,
        corpus.train.clone(),
        config.tree_dim,
        DEFAULT_MAX_DEPTH,
        DEFAULT_MIN_LEAF,
    )
}

pub fn visualize_report(config: &VisualizeConfig) -> Result<VisualizeReport> {
    let corpus = load_dataset(&config.dataset, config.valid_fraction)?;
    visualize_corpus(config, &corpus)
}

pub fn visualize_corpus(
    config: &VisualizeConfig,
    corpus: &EncodedCorpus,
) -> Result<VisualizeReport> {
    let palette = Palette::default();
    if config.hmm_states > palette.len() || config.clusters > palette.len() {
        return Err(Error::invalid(format!(
            "the palette has {} colors; use at most that many states and clusters",
            palette.len()
        )));
    }
    let root = RandomSource::new(config.seed);
    let (lstm, lstm_trace) = train_lstm(&lstm_config(config), corpus, &mut root.substream("lstm"))?;
    let (hmm, hmm_trace) = gibbs_train_discrete(
        corpus.train_ids(),
        corpus.vocab_size(),
        config.hmm_states,
        config.iters,
        &HmmHyper::default(),
        &mut root.substream("hmm"),
    )?;

    let hidden = extract_hidden_states(&lstm, corpus, 0..corpus.len())?;
    let track = precompute_hmm_track(&hmm, corpus)?;
    let hmm_labels = hmm_state_labels(&track.dists);
    let cluster_labels = cluster_states(&hidden, config.clusters, &mut root.substream("kmeans"))?;
    let tree = hidden_dimension_tree(
        &hidden,
        corpus,
        corpus.train.clone(),
        config.tree_dim,
        DEFAULT_MAX_DEPTH,
        DEFAULT_MIN_LEAF,
    )?;
    let pca = pca_report(&hidden)?;

    let n = config.excerpt_chars.min(corpus.len());
    let excerpt = corpus.text(0..n);
    let hmm_panel = ColoredText::new(&excerpt, hmm_labels[..n].to_vec(), palette.clone())?;
    let cluster_panel = ColoredText::new(&excerpt, cluster_labels[..n].to_vec(), palette.clone())?;

    let mut html = String::new();
    let title = format!("State report: {}", dataset_label(&config.dataset));
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>\n\
         body {{ font-family: sans-serif; margin: 2em; }}\n\
         pre.corpus {{ font-family: monospace; line-height: 1.3; white-space: pre-wrap; }}\n\
         pre.tree {{ background: #f4f4f4; padding: 1em; }}\n\
         table {{ border-collapse: collapse; }} td, th {{ border: 1px solid #ccc; padding: 0.2em 0.6em; text-align: right; }}\n\
         {}</style>\n</head>\n<body>\n<h1>{}</h1>\n",
        escape_html(&title),
        palette.css(),
        escape_html(&title)
    );
    let _ = writeln!(
        html,
        "<p>{} characters, vocabulary {}, LSTM h={} ({} epochs, validation {:.4} nats/char), HMM with {} states ({} Gibbs iterations, final train {:.4} nats/char).</p>",
        corpus.len(),
        corpus.vocab_size(),
        config.hidden_dim,
        config.epochs,
        lstm_trace.validation_loglik.unwrap_or(f64::NAN),
        config.hmm_states,
        config.iters,
        hmm_trace.train_loglik.last().copied().unwrap_or(f64::NAN)
    );
    let _ = writeln!(
        html,
        "<h2>HMM states (most probable filtered state)</h2>\n{}",
        hmm_panel.html_fragment()
    );
    let _ = writeln!(
        html,
        "<h2>k-means clusters of LSTM states (k={})</h2>\n{}",
        config.clusters,
        cluster_panel.html_fragment()
    );
    let _ = writeln!(
        html,
        "<h2>Decision tree for hidden dimension {} (training MSE {:.6})</h2>\n<pre class=\"tree\">{}</pre>",
        config.tree_dim,
        tree_mse(&hidden, corpus, config.tree_dim, &tree)?,
        escape_html(&render_tree(&tree, &corpus.vocab, TreeFormat::Text))
    );
    html.push_str("<h2>PCA of LSTM states</h2>\n<table>\n<tr><th>component</th><th>ratio</th><th>cumulative</th></tr>\n");
    for (i, (r, c)) in pca.ratios.iter().zip(&pca.cumulative).enumerate() {
        let _ = writeln!(
            html,
            "<tr><td>{}</td><td>{r:.4}</td><td>{c:.4}</td></tr>",
            i + 1
        );
    }
    let _ = writeln!(
        html,
        "</table>\n<p>{} components reach 99% of the variance.</p>\n</body>\n</html>",
        pca.components_for_99
    );
    Ok(VisualizeReport {
        html,
        hmm_labels,
        cluster_labels,
        tree,
        pca,
    })
}

fn tree_mse(
    hidden: &DenseMatrix<f64>,
    corpus: &EncodedCorpus,
    dim: usize,
    tree: &RegressionTree,
) -> Result<f64> {
    Ok(tree.mse(&dimension_samples(
        hidden,
        corpus,
        corpus.train.clone(),
        dim,
    )?))
}
