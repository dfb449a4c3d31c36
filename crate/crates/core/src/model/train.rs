use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbdt::{columns_of, fit, sigmoid, GbdtModel, GbdtParams};
use crate::error::{Error, Result};
use crate::eval::metrics::{auc_slices, threshold_predictions, Confusion};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParamGrid {
    pub n_trees: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub max_leaves: Vec<usize>,
    pub min_leaf: Vec<usize>,
}

impl Default for HyperParamGrid {
    fn default() -> Self {
        HyperParamGrid {
            n_trees: vec![100, 300],
            learning_rate: vec![0.05, 0.1],
            max_depth: vec![3, 6],
            max_leaves: vec![15, 31],
            min_leaf: vec![5, 20],
        }
    }
}

impl HyperParamGrid {
    pub fn single(p: GbdtParams) -> Self {
        HyperParamGrid {
            n_trees: vec![p.n_trees],
            learning_rate: vec![p.learning_rate],
            max_depth: vec![p.max_depth],
            max_leaves: vec![p.max_leaves],
            min_leaf: vec![p.min_leaf],
        }
    }

    /// Every grid point, tree count varying fastest.
    pub fn points(&self) -> Vec<GbdtParams> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rate {
            for &max_depth in &self.max_depth {
                for &max_leaves in &self.max_leaves {
                    for &min_leaf in &self.min_leaf {
                        for &n_trees in &self.n_trees {
                            out.push(GbdtParams {
                                n_trees,
                                learning_rate,
                                max_depth,
                                max_leaves,
                                min_leaf,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let points = self.points();
        if points.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        for p in &points {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            folds: 5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

fn class_indices(labels: &[u8], rows: &[usize]) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for &r in rows {
        by_class[usize::from(labels[r] == 1)].push(r);
    }
    by_class
}

/// Stratified split of row indices into (train, test), both sorted.
pub fn stratified_split(labels: &[u8], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..labels.len()).collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut class in class_indices(labels, &all) {
        class.shuffle(&mut rng);
        let k = (train_fraction * class.len() as f64).round() as usize;
        train.extend_from_slice(&class[..k]);
        test.extend_from_slice(&class[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Stratified k-fold assignment over `rows`; returns validation sets.
pub fn stratified_folds(labels: &[u8], rows: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for mut class in class_indices(labels, rows) {
        class.shuffle(&mut rng);
        for r in class {
            out[next % folds].push(r);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub params: GbdtParams,
    pub fold_auc: Vec<f64>,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub grid: Vec<GridPointResult>,
    pub chosen: GbdtParams,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_auc: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_confusion: Option<Confusion>,
    pub loss_trace: Vec<f64>,
}

pub struct Trained {
    pub model: GbdtModel,
    pub report: TrainingReport,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Grid points that differ only in tree count share one boosting run.
fn shape_key(p: &GbdtParams) -> (u64, usize, usize, usize) {
    // a depth-d tree never has more than 2^d leaves
    let leaves = p.max_leaves.min(1usize.checked_shl(p.max_depth as u32).unwrap_or(usize::MAX));
    (p.learning_rate.to_bits(), p.max_depth, leaves, p.min_leaf)
}

/// Mean CV AUC of every grid point, computed on `rows` only.
pub fn cross_validate(matrix: &FeatureMatrix, labels: &[u8], rows: &[usize], grid: &HyperParamGrid, split: &SplitSpec) -> Result<Vec<GridPointResult>> {
    grid.validate()?;
    split.validate()?;
    let points = grid.points();
    let folds = stratified_folds(labels, rows, split.folds, split.seed.wrapping_add(1));

    let mut shapes: BTreeMap<(u64, usize, usize, usize), (GbdtParams, Vec<usize>)> = BTreeMap::new();
    for p in &points {
        let entry = shapes.entry(shape_key(p)).or_insert((*p, Vec::new()));
        entry.0.n_trees = entry.0.n_trees.max(p.n_trees);
        entry.1.push(p.n_trees);
    }
    let jobs: Vec<((u64, usize, usize, usize), usize)> = shapes
        .keys()
        .flat_map(|k| (0..folds.len()).map(move |f| (*k, f)))
        .collect();

    let names = matrix.columns.clone();
    let results: Vec<Option<BTreeMap<usize, f64>>> = jobs
        .par_iter()
        .map(|(key, f)| -> Result<Option<BTreeMap<usize, f64>>> {
            let (params, checkpoints) = &shapes[key];
            let valid = &folds[*f];
            let fit_rows: Vec<usize> = rows.iter().copied().filter(|r| valid.binary_search(r).is_err()).collect();
            let y_fit: Vec<u8> = fit_rows.iter().map(|&r| labels[r]).collect();
            let y_valid: Vec<u8> = valid.iter().map(|&r| labels[r]).collect();
            let valid_has_both = y_valid.contains(&0) && y_valid.contains(&1);
            if !valid_has_both || !y_fit.contains(&0) || !y_fit.contains(&1) {
                return Ok(None);
            }
            let cols = columns_of(matrix, &fit_rows);
            let valid_cols = columns_of(matrix, valid);
            let mut margins = Vec::new();
            let mut scores = BTreeMap::new();
            let mut auc_err = None;
            fit(names.clone(), &cols, &y_fit, params, |k, model| {
                if margins.is_empty() {
                    margins = vec![model.base_score; valid.len()];
                }
                let tree = model.trees.last().expect("one tree per round");
                for (i, m) in margins.iter_mut().enumerate() {
                    *m += model.learning_rate * tree.predict(|c| valid_cols[c][i]);
                }
                if checkpoints.contains(&k) {
                    match auc_slices(&margins, &y_valid) {
                        Ok(a) => {
                            scores.insert(k, a);
                        }
                        Err(e) => auc_err = Some(e),
                    }
                }
            })?;
            if let Some(e) = auc_err {
                return Err(e);
            }
            Ok(Some(scores))
        })
        .collect::<Result<_>>()?;

    let mut per_job: BTreeMap<((u64, usize, usize, usize), usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for (job, r) in jobs.iter().zip(results) {
        if let Some(r) = r {
            per_job.insert(*job, r);
        }
    }
    points
        .iter()
        .map(|p| {
            let key = shape_key(p);
            let fold_auc: Vec<f64> = (0..folds.len())
                .filter_map(|f| per_job.get(&(key, f)).map(|m| m[&p.n_trees]))
                .collect();
            if fold_auc.is_empty() {
                return Err(Error::InvalidInput(
                    "no cross-validation fold contains both classes".into(),
                ));
            }
            let mean_auc = fold_auc.iter().sum::<f64>() / fold_auc.len() as f64;
            Ok(GridPointResult {
                params: *p,
                fold_auc,
                mean_auc,
            })
        })
        .collect()
}

/// Highest mean AUC; ties go to fewer trees, then the lower learning rate,
/// then grid order.
pub fn select_best(results: &[GridPointResult]) -> Option<GbdtParams> {
    let mut best: Option<&GridPointResult> = None;
    for r in results {
        best = match best {
            None => Some(r),
            Some(b) => {
                let better = r.mean_auc > b.mean_auc
                    || (r.mean_auc == b.mean_auc
                        && (r.params.n_trees, r.params.learning_rate) < (b.params.n_trees, b.params.learning_rate));
                Some(if better { r } else { b })
            }
        };
    }
    best.map(|b| b.params)
}

/// Fits on `rows` with the given parameters; returns the model and its
/// per-round loss trace.
pub fn fit_rows(matrix: &FeatureMatrix, labels: &[u8], rows: &[usize], params: &GbdtParams) -> Result<(GbdtModel, Vec<f64>)> {
    let cols = columns_of(matrix, rows);
    let y: Vec<u8> = rows.iter().map(|&r| labels[r]).collect();
    let out = fit(matrix.columns.clone(), &cols, &y, params, |_, _| {})?;
    Ok((out.model, out.loss_trace))
}

/// Grid search with stratified k-fold CV on `train_rows`, then a refit of
/// the chosen point on all of `train_rows`. `test_rows` (if any) are scored
/// for the report.
pub fn train_on(
    matrix: &FeatureMatrix,
    labels: &[u8],
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
    grid: &HyperParamGrid,
    split: &SplitSpec,
) -> Result<Trained> {
    let y_train: Vec<u8> = train_rows.iter().map(|&r| labels[r]).collect();
    if !y_train.contains(&0) || !y_train.contains(&1) {
        return Err(Error::SingleClass);
    }
    let results = cross_validate(matrix, labels, &train_rows, grid, split)?;
    let chosen = select_best(&results).ok_or_else(|| Error::Config("hyperparameter grid is empty".into()))?;
    let (model, loss_trace) = fit_rows(matrix, labels, &train_rows, &chosen)?;

    let (mut test_auc, mut test_accuracy, mut test_confusion) = (None, None, None);
    if !test_rows.is_empty() {
        let cols = columns_of(matrix, &test_rows);
        let probs: Vec<f64> = model.margins_cols(&cols).into_iter().map(sigmoid).collect();
        let y: Vec<u8> = test_rows.iter().map(|&r| labels[r]).collect();
        test_auc = auc_slices(&probs, &y).ok();
        let c = Confusion::from_predictions(&threshold_predictions(&probs, 0.5), &y);
        test_accuracy = Some(c.accuracy());
        test_confusion = Some(c);
    }
    Ok(Trained {
        model,
        report: TrainingReport {
            grid: results,
            chosen,
            train_rows: train_rows.len(),
            test_rows: test_rows.len(),
            test_auc,
            test_accuracy,
            test_confusion,
            loss_trace,
        },
        train_rows,
        test_rows,
    })
}

/// Stratified train/test split of the matrix, grid search on the training
/// portion and a final refit.
pub fn train(matrix: &FeatureMatrix, grid: &HyperParamGrid, split: &SplitSpec) -> Result<Trained> {
    grid.validate()?;
    split.validate()?;
    let labels = &matrix.labels;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let (train_rows, test_rows) = stratified_split(labels, split.train_fraction, split.seed);
    train_on(matrix, labels, train_rows, test_rows, grid, split)
}
