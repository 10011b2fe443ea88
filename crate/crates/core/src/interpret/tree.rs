//! Regression trees predicting one hidden dimension from the characters
//! just before each position.
//!
//! Every test asks whether the character at a fixed offset equals a fixed
//! symbol. Splits are chosen greedily by variance reduction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::Vocab;

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_MAX_DEPTH: usize = 4;
pub const DEFAULT_MIN_LEAF: usize = 50;

/// Gains at or below this are treated as zero.
const MIN_GAIN: f64 = 1e-12;

/// One target value with the characters before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharWindowSample {
    pub target: f64,
    /// `preceding[k]` is the symbol at offset `-(k + 1)`; the boundary
    /// symbol (`vocab_size`) stands in before the start of the text.
    pub preceding: Vec<usize>,
}

impl CharWindowSample {
    pub fn at_offset(&self, offset: usize) -> usize {
        self.preceding[offset - 1]
    }
}

/// One sample per position of `ids`, with `targets[t]` as the value at `t`
/// and the `window` characters `t-window..t` as features.
pub fn char_window_samples(
    ids: &[usize],
    vocab_size: usize,
    targets: &[f64],
    window: usize,
) -> Result<Vec<CharWindowSample>> {
    if ids.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} ids but {} targets",
            ids.len(),
            targets.len()
        )));
    }
    if window == 0 {
        return Err(Error::invalid("feature window must be at least 1"));
    }
    Ok((0..ids.len())
        .map(|t| CharWindowSample {
            target: targets[t],
            preceding: (1..=window)
                .map(|o| if t >= o { ids[t - o] } else { vocab_size })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        /// Characters back from the target position (1 = immediately before).
        offset: usize,
        symbol: usize,
        count: usize,
        /// Samples whose character at `offset` equals `symbol`.
        yes: Box<TreeNode>,
        no: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn count(&self) -> usize {
        match self {
            TreeNode::Leaf { count, .. } | TreeNode::Split { count, .. } => *count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: TreeNode,
    pub window: usize,
}

impl RegressionTree {
    pub fn predict(&self, sample: &CharWindowSample) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    offset,
                    symbol,
                    yes,
                    no,
                    ..
                } => {
                    node = if sample.at_offset(*offset) == *symbol {
                        yes
                    } else {
                        no
                    }
                }
            }
        }
    }

    pub fn mse(&self, samples: &[CharWindowSample]) -> f64 {
        let sse: f64 = samples
            .iter()
            .map(|s| (self.predict(s) - s.target).powi(2))
            .sum();
        sse / samples.len() as f64
    }

    pub fn leaves(&self) -> usize {
        fn walk(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { yes, no, .. } => walk(yes) + walk(no),
            }
        }
        walk(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { yes, no, .. } => 1 + walk(yes).max(walk(no)),
            }
        }
        walk(&self.root)
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn add(&mut self, y: f64) {
        self.n += 1;
        self.sum += y;
        self.sum_sq += y * y;
    }

    fn sse(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.sum_sq - self.sum * self.sum / self.n as f64).max(0.0)
    }

    fn minus(&self, o: &Moments) -> Moments {
        Moments {
            n: self.n - o.n,
            sum: self.sum - o.sum,
            sum_sq: self.sum_sq - o.sum_sq,
        }
    }
}

/// Greedy CART. Candidate tests are scanned from the farthest offset to the
/// nearest and by ascending symbol within an offset; among equal gains the
/// first scanned wins.
pub fn fit_state_dim_tree(
    samples: &[CharWindowSample],
    max_depth: usize,
    min_leaf: usize,
) -> Result<RegressionTree> {
    let min_leaf = min_leaf.max(1);
    if samples.len() < 2 * min_leaf {
        return Err(Error::invalid(format!(
            "{} samples; a tree with min_leaf {min_leaf} needs at least {}",
            samples.len(),
            2 * min_leaf
        )));
    }
    let window = samples[0].preceding.len();
    if window == 0 || samples.iter().any(|s| s.preceding.len() != window) {
        return Err(Error::Shape(
            "samples have inconsistent feature windows".into(),
        ));
    }
    if let Some(i) = samples.iter().position(|s| !s.target.is_finite()) {
        return Err(Error::NonFinite {
            what: "tree target",
            index: i,
        });
    }
    let n_symbols = samples
        .iter()
        .flat_map(|s| s.preceding.iter())
        .max()
        .map_or(0, |&m| m + 1);
    let idx: Vec<usize> = (0..samples.len()).collect();
    let root = grow(samples, idx, max_depth, min_leaf, window, n_symbols);
    Ok(RegressionTree { root, window })
}

fn grow(
    samples: &[CharWindowSample],
    idx: Vec<usize>,
    depth_left: usize,
    min_leaf: usize,
    window: usize,
    n_symbols: usize,
) -> TreeNode {
    let mut total = Moments::default();
    for &i in &idx {
        total.add(samples[i].target);
    }
    let leaf = TreeNode::Leaf {
        value: total.sum / total.n as f64,
        count: total.n,
    };
    if depth_left == 0 || idx.len() < 2 * min_leaf {
        return leaf;
    }
    let parent_sse = total.sse();
    let mut best: Option<(f64, usize, usize)> = None;
    let mut per_symbol = vec![Moments::default(); n_symbols];
    for offset in (1..=window).rev() {
        per_symbol.iter_mut().for_each(|m| *m = Moments::default());
        for &i in &idx {
            per_symbol[samples[i].at_offset(offset)].add(samples[i].target);
        }
        for (symbol, yes) in per_symbol.iter().enumerate() {
            if yes.n < min_leaf || total.n - yes.n < min_leaf {
                continue;
            }
            let gain = parent_sse - yes.sse() - total.minus(yes).sse();
            if gain > MIN_GAIN * (1.0 + parent_sse)
                && best.is_none_or(|(g, _, _)| gain > g + MIN_GAIN * (1.0 + g.abs()))
            {
                best = Some((gain, offset, symbol));
            }
        }
    }
    let Some((_, offset, symbol)) = best else {
        return leaf;
    };
    let (yes, no): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| samples[i].at_offset(offset) == symbol);
    TreeNode::Split {
        offset,
        symbol,
        count: total.n,
        yes: Box::new(grow(
            samples,
            yes,
            depth_left - 1,
            min_leaf,
            window,
            n_symbols,
        )),
        no: Box::new(grow(
            samples,
            no,
            depth_left - 1,
            min_leaf,
            window,
            n_symbols,
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    Text,
    Dot,
}

fn symbol_name(vocab: &Vocab, symbol: usize) -> String {
    match vocab.char(symbol) {
        Some(c) => format!("{:?}", c),
        None => "<start>".to_string(),
    }
}

pub fn render_tree(tree: &RegressionTree, vocab: &Vocab, format: TreeFormat) -> String {
    let mut out = String::new();
    match format {
        TreeFormat::Text => text_node(&tree.root, vocab, 0, "", &mut out),
        TreeFormat::Dot => {
            out.push_str("digraph tree {\n  node [shape=box, fontname=\"monospace\"];\n");
            let mut next = 0;
            dot_node(&tree.root, vocab, &mut next, &mut out);
            out.push_str("}\n");
        }
    }
    out
}

fn text_node(node: &TreeNode, vocab: &Vocab, indent: usize, edge: &str, out: &mut String) {
    let pad = "  ".repeat(indent);
    match node {
        TreeNode::Leaf { value, count } => {
            let _ = writeln!(out, "{pad}{edge}leaf {value:.4} (n={count})");
        }
        TreeNode::Split {
            offset,
            symbol,
            count,
            yes,
            no,
        } => {
            let _ = writeln!(
                out,
                "{pad}{edge}char[-{offset}] == {} (n={count})",
                symbol_name(vocab, *symbol)
            );
            text_node(yes, vocab, indent + 1, "yes: ", out);
            text_node(no, vocab, indent + 1, "no: ", out);
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', "\\n")
}

fn dot_node(node: &TreeNode, vocab: &Vocab, next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    match node {
        TreeNode::Leaf { value, count } => {
            let _ = writeln!(out, "  n{id} [label=\"{value:.4}\\nn={count}\"];");
        }
        TreeNode::Split {
            offset,
            symbol,
            count,
            yes,
            no,
        } => {
            let label = dot_escape(&format!(
                "char[-{offset}] == {}\nn={count}",
                symbol_name(vocab, *symbol)
            ));
            let _ = writeln!(out, "  n{id} [label=\"{label}\"];");
            let y = dot_node(yes, vocab, next, out);
            let _ = writeln!(out, "  n{id} -> n{y} [label=\"yes\"];");
            let n = dot_node(no, vocab, next, out);
            let _ = writeln!(out, "  n{id} -> n{n} [label=\"no\"];");
        }
    }
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RandomSource;

    fn samples_from(ids: &[usize], v: usize, targets: &[f64]) -> Vec<CharWindowSample> {
        char_window_samples(ids, v, targets, DEFAULT_WINDOW).unwrap()
    }

    #[test]
    fn window_padding() {
        let s = char_window_samples(&[3, 1, 2], 4, &[0.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(s[0].preceding, vec![4, 4]);
        assert_eq!(s[1].preceding, vec![3, 4]);
        assert_eq!(s[2].preceding, vec![1, 3]);
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let mut rng = RandomSource::new(1);
        let ids: Vec<usize> = (0..500).map(|_| rng.below(6)).collect();
        let tree = fit_state_dim_tree(&samples_from(&ids, 6, &vec![0.7; 500]), 4, 10).unwrap();
        match tree.root {
            TreeNode::Leaf { value, count } => assert!((value - 0.7).abs() < 1e-12 && count == 500),
            ref other => panic!("expected a leaf, got {other:?}"),
        }
        let vocab = Vocab::from_text("abcdef");
        assert_eq!(
            render_tree(&tree, &vocab, TreeFormat::Text).lines().count(),
            1
        );
        assert_eq!(
            render_tree(&tree, &vocab, TreeFormat::Dot)
                .matches("label=")
                .count(),
            1
        );
    }

    #[test]
    fn too_few_samples_errors() {
        let s = samples_from(&[0, 1, 0], 2, &[0.0, 1.0, 0.0]);
        assert!(fit_state_dim_tree(&s, 4, 2).is_err());
    }

    #[test]
    fn mse_non_increasing_in_depth() {
        let mut rng = RandomSource::new(2);
        let ids: Vec<usize> = (0..2000).map(|_| rng.below(5)).collect();
        let targets: Vec<f64> = ids
            .iter()
            .map(|&c| c as f64 * 0.1 + rng.uniform())
            .collect();
        let samples = samples_from(&ids, 5, &targets);
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / targets.len() as f64;
        let mut prev = f64::INFINITY;
        for depth in 0..=4 {
            let mse = fit_state_dim_tree(&samples, depth, 20)
                .unwrap()
                .mse(&samples);
            assert!(mse <= prev + 1e-12 && mse <= var + 1e-12);
            prev = mse;
        }
    }

    #[test]
    fn leaf_counts_sum_to_total() {
        let mut rng = RandomSource::new(3);
        let ids: Vec<usize> = (0..1000).map(|_| rng.below(4)).collect();
        let targets: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
        let tree = fit_state_dim_tree(&samples_from(&ids, 4, &targets), 4, 10).unwrap();
        fn sum(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { count, .. } => *count,
                TreeNode::Split { yes, no, count, .. } => {
                    assert_eq!(yes.count() + no.count(), *count);
                    sum(yes) + sum(no)
                }
            }
        }
        assert_eq!(sum(&tree.root), 1000);
    }
}
