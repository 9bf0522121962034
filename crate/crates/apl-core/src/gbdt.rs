//! Gradient-boosted decision trees for binary classification.
//!
//! Second-order (Newton) boosting on the logistic loss with exact greedy
//! split search and L2 leaf regularization. Candidate thresholds are the
//! midpoints between consecutive distinct feature values; `<=` goes left.
//! Gain ties break toward the lowest feature index, then the lowest
//! threshold, so training is deterministic and schedule-independent.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    /// Prior probability; its logit seeds the ensemble.
    pub base_score: f64,
    /// Fraction of rows drawn (without replacement) per round; `None` uses all.
    pub row_subsample: Option<f64>,
    /// Fraction of features considered per round; `None` uses all.
    pub col_subsample: Option<f64>,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 4,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            base_score: 0.5,
            row_subsample: None,
            col_subsample: None,
        }
    }
}

impl GbdtParams {
    fn validate(&self) {
        assert!(self.rounds >= 1);
        assert!(self.learning_rate > 0.0 && self.learning_rate <= 1.0);
        assert!(self.max_depth >= 1);
        assert!(self.l2_lambda >= 0.0);
        assert!(self.base_score > 0.0 && self.base_score < 1.0);
    }

    pub fn base_logit(&self) -> f64 {
        (self.base_score / (1.0 - self.base_score)).ln()
    }
}

/// Regression tree node; internal nodes route `value <= threshold` left.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: f64,
    },
}

impl TreeNode {
    pub fn evaluate(&self, features: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    #[cfg(test)]
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TreeEnsemble {
    pub params: GbdtParams,
    pub dim: usize,
    pub trees: Vec<TreeNode>,
}

impl TreeEnsemble {
    /// Probability of the positive class, strictly inside (0, 1).
    pub fn predict_score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: features.len(),
            });
        }
        let mut logit = self.params.base_logit();
        for tree in &self.trees {
            logit += self.params.learning_rate * tree.evaluate(features);
        }
        Ok(sigmoid(logit))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self).map_err(|e| Error::Format {
            what: "ensemble json",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<TreeEnsemble> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format {
            what: "ensemble json",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(1e-12, 1.0 - 1e-12)
}

fn logistic_loss(logits: &[f64], labels: &[bool]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let p = sigmoid(z);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// `a` strictly beats `b` under (gain desc, feature asc, threshold asc).
fn beats(a: &SplitCandidate, b: &SplitCandidate) -> bool {
    if a.gain != b.gain {
        return a.gain > b.gain;
    }
    if a.feature != b.feature {
        return a.feature < b.feature;
    }
    a.threshold < b.threshold
}

struct Builder<'a> {
    features: &'a FeatureMatrix,
    /// Row indices per feature, ordered by ascending value (then row).
    sorted: Vec<Vec<u32>>,
    active_features: Vec<usize>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    params: GbdtParams,
}

impl Builder<'_> {
    fn leaf(&self, rows: &[u32]) -> TreeNode {
        let g: f64 = rows.iter().map(|&i| self.grad[i as usize]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i as usize]).sum();
        TreeNode::Leaf {
            leaf: -g / (h + self.params.l2_lambda),
        }
    }

    fn best_split(&self, rows: &[u32], in_node: &[bool]) -> Option<SplitCandidate> {
        let lambda = self.params.l2_lambda;
        let mcw = self.params.min_child_weight;
        let g_total: f64 = rows.iter().map(|&i| self.grad[i as usize]).sum();
        let h_total: f64 = rows.iter().map(|&i| self.hess[i as usize]).sum();
        let parent_term = g_total * g_total / (h_total + lambda);

        exec::best_indexed(
            self.active_features.len(),
            |fi| {
                let feature = self.active_features[fi];
                let column = &self.sorted[feature];
                let mut best: Option<SplitCandidate> = None;
                let mut g_left = 0.0f64;
                let mut h_left = 0.0f64;
                let mut prev_value: Option<f64> = None;
                for &row in column.iter().filter(|&&r| in_node[r as usize]) {
                    let value = self.features.row(row as usize)[feature];
                    if let Some(prev) = prev_value {
                        if value > prev {
                            // candidate boundary between prev and value
                            let g_right = g_total - g_left;
                            let h_right = h_total - h_left;
                            if h_left >= mcw && h_right >= mcw {
                                let gain = 0.5
                                    * (g_left * g_left / (h_left + lambda)
                                        + g_right * g_right / (h_right + lambda)
                                        - parent_term);
                                let candidate = SplitCandidate {
                                    gain,
                                    feature,
                                    threshold: 0.5 * (prev + value),
                                };
                                if gain > 0.0
                                    && !best.as_ref().is_some_and(|b| beats(b, &candidate))
                                {
                                    best = Some(candidate);
                                }
                            }
                        }
                    }
                    g_left += self.grad[row as usize];
                    h_left += self.hess[row as usize];
                    prev_value = Some(value);
                }
                best
            },
            beats,
        )
    }

    fn build(&self, rows: &[u32], in_node: &mut Vec<bool>, depth: usize) -> TreeNode {
        if depth == self.params.max_depth || rows.len() < 2 {
            return self.leaf(rows);
        }
        let Some(split) = self.best_split(rows, in_node) else {
            return self.leaf(rows);
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&i| self.features.row(i as usize)[split.feature] <= split.threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        for &i in &right_rows {
            in_node[i as usize] = false;
        }
        let left = self.build(&left_rows, in_node, depth + 1);
        for &i in &right_rows {
            in_node[i as usize] = true;
        }
        for &i in &left_rows {
            in_node[i as usize] = false;
        }
        let right = self.build(&right_rows, in_node, depth + 1);
        for &i in &left_rows {
            in_node[i as usize] = true;
        }

        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Trains the ensemble and also returns the training logistic loss after
/// every round, for convergence diagnostics.
pub fn train_gbdt_traced(
    features: &FeatureMatrix,
    labels: &[bool],
    params: &GbdtParams,
    seed: u64,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    params.validate();
    assert_eq!(features.len(), labels.len(), "one label per row");
    let n = features.len();
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::DegenerateLabels);
    }

    // presort each feature column once
    let sorted: Vec<Vec<u32>> = exec::map_indexed(features.dim, |f| {
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.sort_by(|&a, &b| {
            features.row(a as usize)[f]
                .partial_cmp(&features.row(b as usize)[f])
                .expect("finite features")
                .then(a.cmp(&b))
        });
        idx
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_logit = params.base_logit();
    let mut logits = vec![base_logit; n];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut loss_trace = Vec::with_capacity(params.rounds);

    let mut builder = Builder {
        features,
        sorted,
        active_features: (0..features.dim).collect(),
        grad: vec![0.0; n],
        hess: vec![0.0; n],
        params: *params,
    };

    for _ in 0..params.rounds {
        for i in 0..n {
            let p = sigmoid(logits[i]);
            builder.grad[i] = p - f64::from(labels[i]);
            builder.hess[i] = p * (1.0 - p);
        }

        let rows: Vec<u32> = match params.row_subsample {
            None => (0..n as u32).collect(),
            Some(f) => {
                let want = ((n as f64 * f).round() as usize).clamp(1, n);
                let mut chosen: Vec<u32> = rand::seq::index::sample(&mut rng, n, want)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect();
                chosen.sort_unstable();
                chosen
            }
        };
        builder.active_features = match params.col_subsample {
            None => (0..features.dim).collect(),
            Some(f) => {
                let want = ((features.dim as f64 * f).round() as usize).clamp(1, features.dim);
                let mut chosen: Vec<usize> =
                    rand::seq::index::sample(&mut rng, features.dim, want).into_vec();
                chosen.sort_unstable();
                chosen
            }
        };

        let mut in_node = vec![false; n];
        for &i in &rows {
            in_node[i as usize] = true;
        }
        let tree = builder.build(&rows, &mut in_node, 0);

        for (i, logit) in logits.iter_mut().enumerate() {
            *logit += params.learning_rate * tree.evaluate(features.row(i));
        }
        loss_trace.push(logistic_loss(&logits, labels));
        trees.push(tree);
    }

    Ok((
        TreeEnsemble {
            params: *params,
            dim: features.dim,
            trees,
        },
        loss_trace,
    ))
}

pub fn train_gbdt(
    features: &FeatureMatrix,
    labels: &[bool],
    params: &GbdtParams,
    seed: u64,
) -> Result<TreeEnsemble> {
    train_gbdt_traced(features, labels, params, seed).map(|(m, _)| m)
}
