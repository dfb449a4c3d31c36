use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Columns, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ids::UserId;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Halvings tried on a tree whose full step would raise the training loss.
const MAX_STEP_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_leaf: usize,
}

impl GbdtParams {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            max_leaves: self.max_leaves,
            min_leaf: self.min_leaf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.max_leaves < 2 || self.max_depth < 1 || self.min_leaf < 1 {
            return Err(Error::Config(format!(
                "tree limits too small: depth {}, leaves {}, min-leaf {}",
                self.max_depth, self.max_leaves, self.min_leaf
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub schema_version: u32,
    pub features: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean logistic loss computed from margins.
pub fn logistic_loss(margins: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // log(1 + e^m) - y*m, evaluated stably
            let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            softplus - f64::from(y) * m
        })
        .sum();
    total / margins.len().max(1) as f64
}

/// Transposes the given rows of a matrix into columns.
pub fn columns_of(matrix: &FeatureMatrix, rows: &[usize]) -> Vec<Vec<f64>> {
    (0..matrix.n_cols())
        .map(|c| rows.iter().map(|&r| matrix.get(r, c)).collect())
        .collect()
}

pub struct FitOutput {
    pub model: GbdtModel,
    /// Training loss after each round, starting with the base score alone.
    pub loss_trace: Vec<f64>,
}

/// Boosts `params.n_trees` trees. After each round `on_round(k, model)` is
/// called with the number of trees fitted so far.
pub fn fit(
    features: Vec<String>,
    cols: &[Vec<f64>],
    labels: &[u8],
    params: &GbdtParams,
    mut on_round: impl FnMut(usize, &GbdtModel),
) -> Result<FitOutput> {
    params.validate()?;
    if cols.len() != features.len() || cols.iter().any(|c| c.len() != labels.len()) {
        return Err(Error::InvalidInput("training columns and labels disagree in shape".into()));
    }
    let n = labels.len();
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }
    let prior = pos as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let data = Columns::new(cols);
    let tree_params = params.tree_params();

    let mut model = GbdtModel {
        schema_version: MODEL_SCHEMA_VERSION,
        features,
        base_score,
        learning_rate: params.learning_rate,
        trees: Vec::with_capacity(params.n_trees),
    };
    let mut margins = vec![base_score; n];
    let mut loss = logistic_loss(&margins, labels);
    let mut loss_trace = vec![loss];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut step = vec![0.0; n];

    for round in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - f64::from(labels[i]);
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let mut tree = fit_tree(&data, &grad, &hess, &tree_params);
        for (i, s) in step.iter_mut().enumerate() {
            *s = tree.predict(|f| cols[f][i]);
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            for i in 0..n {
                trial[i] = margins[i] + params.learning_rate * (scale * step[i]);
            }
            let trial_loss = logistic_loss(&trial, labels);
            if trial_loss <= loss {
                accepted = Some(trial_loss);
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some(new_loss) => {
                if scale != 1.0 {
                    tree.scale_leaves(scale);
                }
                std::mem::swap(&mut margins, &mut trial);
                loss = new_loss;
            }
            None => tree = Tree::leaf(0.0),
        }
        model.trees.push(tree);
        loss_trace.push(loss);
        on_round(round + 1, &model);
    }
    Ok(FitOutput { model, loss_trace })
}

impl GbdtModel {
    /// Margin of one row given as a column accessor, using the first
    /// `n_trees` trees.
    pub fn margin_with(&self, n_trees: usize, row: impl Fn(usize) -> f64) -> f64 {
        let mut m = self.base_score;
        for t in &self.trees[..n_trees.min(self.trees.len())] {
            m += self.learning_rate * t.predict(&row);
        }
        m
    }

    /// Margins for column-major data laid out in manifest order.
    pub fn margins_cols(&self, cols: &[Vec<f64>]) -> Vec<f64> {
        let n = cols.first().map_or(0, Vec::len);
        (0..n).map(|i| self.margin_with(self.trees.len(), |f| cols[f][i])).collect()
    }

    /// Maps manifest positions to matrix columns, failing on any mismatch.
    pub fn column_map(&self, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
        let have: BTreeSet<&String> = matrix.columns.iter().collect();
        let want: BTreeSet<&String> = self.features.iter().collect();
        if have != want || matrix.columns.len() != self.features.len() {
            return Err(Error::ColumnMismatch {
                missing: want.difference(&have).map(|s| s.to_string()).collect(),
                extra: have.difference(&want).map(|s| s.to_string()).collect(),
            });
        }
        Ok(self
            .features
            .iter()
            .map(|f| matrix.column_index(f).expect("checked above"))
            .collect())
    }

    pub fn margins(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        let map = self.column_map(matrix)?;
        Ok((0..matrix.n_rows())
            .map(|r| {
                let row = matrix.row(r);
                self.margin_with(self.trees.len(), |f| row[map[f]])
            })
            .collect())
    }

    pub fn predict_rows(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.margins(matrix)?.into_iter().map(sigmoid).collect())
    }

    /// Probability of the stable class for every row, keyed by user.
    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<BTreeMap<UserId, f64>> {
        Ok(matrix.users.iter().cloned().zip(self.predict_rows(matrix)?).collect())
    }

    /// Manifest indices of features that appear in at least one split.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.trees.iter().flat_map(|t| t.features_used()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
