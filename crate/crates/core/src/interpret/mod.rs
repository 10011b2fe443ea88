//! Tools for reading what hidden states track: state labels over the text,
//! colored renderings, per-dimension regression trees and PCA summaries.

mod render;
mod tree;

pub use render::{
    escape_html, render_colored_text, strip_ansi, strip_html, ColoredText, Palette, Swatch,
    TextFormat,
};
pub use tree::{
    char_window_samples, fit_state_dim_tree, render_tree, CharWindowSample, RegressionTree,
    TreeFormat, TreeNode, DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF, DEFAULT_WINDOW,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hmm::StateDistSeq;
use crate::numeric::{kmeans, pca_explained_variance, DenseMatrix, RandomSource};

const KMEANS_MAX_ITERS: usize = 100;

/// k-means cluster id of each hidden-state row.
pub fn cluster_states(
    hidden: &DenseMatrix<f64>,
    k: usize,
    rng: &mut RandomSource,
) -> Result<Vec<usize>> {
    Ok(kmeans(hidden, k, rng, KMEANS_MAX_ITERS)?.assignments)
}

/// Most probable state per step; ties go to the lowest id.
pub fn hmm_state_labels(track: &StateDistSeq) -> Vec<usize> {
    track
        .iter_rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |best, (j, &p)| if p > row[best] { j } else { best })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    /// Explained-variance ratio per component, descending.
    pub ratios: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Fewest components reaching 99% of the variance.
    pub components_for_99: usize,
}

pub fn pca_report(hidden: &DenseMatrix<f64>) -> Result<PcaReport> {
    let ratios = pca_explained_variance(hidden)?;
    let cumulative: Vec<f64> = ratios
        .iter()
        .scan(0.0, |acc, &r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    let components_for_99 = cumulative
        .iter()
        .position(|&c| c >= 0.99 - 1e-12)
        .map_or(ratios.len(), |i| i + 1);
    Ok(PcaReport {
        ratios,
        cumulative,
        components_for_99,
    })
}
