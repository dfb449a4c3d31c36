//! The train-then-evaluate protocol shared by every report and sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{auc_slices, threshold_predictions, Confusion};
use crate::artifacts::Artifacts;
use crate::error::{Error, Result};
use crate::features::{build_feature_matrix, ChangeRateMode, FeatureMatrix, FeatureSet, FeatureSpec};
use crate::ids::UserId;
use crate::model::{baseline_classify, stratified_split, train_on, GbdtModel, HyperParamGrid, SplitSpec, Trained, TrainingReport};
use crate::scoring::InfluenceKind;
use crate::time::MonthId;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: InfluenceKind,
    pub train_ref: MonthId,
    /// Reference month of a later evaluation cohort. Without one the model
    /// is scored on the held-out part of the training cohort.
    pub eval_ref: Option<MonthId>,
    pub n: usize,
    /// Labeling period of the training labels.
    pub m: usize,
    /// Labeling period of the evaluation labels.
    pub eval_m: usize,
    pub feature_set: FeatureSet,
    pub change_rate: ChangeRateMode,
    pub grid: HyperParamGrid,
    pub split: SplitSpec,
}

impl ExperimentConfig {
    pub fn new(kind: InfluenceKind, train_ref: MonthId, seed: u64) -> Self {
        ExperimentConfig {
            kind,
            train_ref,
            eval_ref: None,
            n: 4,
            m: 6,
            eval_m: 6,
            feature_set: FeatureSet::all(),
            change_rate: ChangeRateMode::TaskKind,
            grid: HyperParamGrid::default(),
            split: SplitSpec {
                seed,
                ..SplitSpec::default()
            },
        }
    }

    fn spec(&self, reference: MonthId, m: usize) -> FeatureSpec {
        FeatureSpec {
            reference,
            n: self.n,
            m,
            kind: self.kind,
            set: self.feature_set.clone(),
            change_rate: self.change_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.eval_ref {
            let first_free = self.train_ref.offset(self.m.max(self.eval_m) as i64);
            if e < first_free {
                return Err(Error::Config(format!(
                    "evaluation month {e} overlaps the training labels (needs {first_free} or later)"
                )));
            }
        }
        self.grid.validate()?;
        self.split.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub kind: InfluenceKind,
    pub train_ref: MonthId,
    pub eval_ref: Option<MonthId>,
    pub protocol: String,
    pub n: usize,
    pub m: usize,
    pub eval_m: usize,
    pub feature_set: String,
    pub categories: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model: String,
    pub auc: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub confusion: Confusion,
    pub rows: usize,
    pub positives: usize,
    pub config: ConfigEcho,
}

pub struct Experiment {
    pub model: GbdtModel,
    pub training: TrainingReport,
    pub report: EvalReport,
    pub baseline: EvalReport,
    /// Rows the model was scored on, with their evaluation labels.
    pub test_matrix: FeatureMatrix,
    pub test_probs: BTreeMap<UserId, f64>,
}

pub fn echo(cfg: &ExperimentConfig) -> ConfigEcho {
    ConfigEcho {
        kind: cfg.kind,
        train_ref: cfg.train_ref,
        eval_ref: cfg.eval_ref,
        protocol: if cfg.eval_ref.is_some() { "later-cohort" } else { "held-out" }.into(),
        n: cfg.n,
        m: cfg.m,
        eval_m: cfg.eval_m,
        feature_set: cfg.feature_set.to_string(),
        categories: cfg.feature_set.categories(cfg.kind).iter().map(ToString::to_string).collect(),
        seed: cfg.split.seed,
    }
}

fn report(model: &str, scores: &[f64], predicted: &[u8], labels: &[u8], threshold: f64, config: ConfigEcho) -> Result<EvalReport> {
    let confusion = Confusion::from_predictions(predicted, labels);
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: model.into(),
        auc: auc_slices(scores, labels)?,
        accuracy: confusion.accuracy(),
        threshold,
        confusion,
        rows: labels.len(),
        positives: labels.iter().filter(|&&l| l == 1).count(),
        config,
    })
}

/// The score-ranking baseline on an evaluation matrix: the top-k users by
/// their reference-month influence score are called stable, k being the
/// true number of stable users. AUC comes from the raw score ordering.
pub fn baseline_report(artifacts: &Artifacts, test: &FeatureMatrix, config: ConfigEcho) -> Result<EvalReport> {
    let month = artifacts.month(test.meta.reference)?;
    let scores: BTreeMap<UserId, f64> = test
        .users
        .iter()
        .map(|u| (u.clone(), month.scores.score(test.meta.kind, u.as_str()) as f64))
        .collect();
    let k = test.positives();
    let out = baseline_classify(&scores, k)?;
    let s: Vec<f64> = test.users.iter().map(|u| scores[u]).collect();
    let predicted: Vec<u8> = test.users.iter().map(|u| out.labels[u]).collect();
    // the cutoff is a rank, not a probability, so no threshold applies
    report("score-ranking", &s, &predicted, &test.labels, 0.0, config)
}

/// The training matrix and the matrix whose rows the model is scored on:
/// the later cohort under the later-cohort protocol, otherwise the training
/// cohort labeled with `eval_m`.
pub fn build_matrices(artifacts: &Artifacts, cfg: &ExperimentConfig) -> Result<(FeatureMatrix, FeatureMatrix)> {
    cfg.validate()?;
    let train = build_feature_matrix(artifacts, &cfg.spec(cfg.train_ref, cfg.m))?;
    let eval = match cfg.eval_ref {
        Some(eval_ref) => build_feature_matrix(artifacts, &cfg.spec(eval_ref, cfg.eval_m))?,
        None if cfg.eval_m == cfg.m => train.clone(),
        None => build_feature_matrix(artifacts, &cfg.spec(cfg.train_ref, cfg.eval_m))?,
    };
    Ok((train, eval))
}

/// Grid search and refit. Returns the trained model and the test rows.
pub fn fit_matrices(train: &FeatureMatrix, eval: &FeatureMatrix, cfg: &ExperimentConfig) -> Result<(Trained, FeatureMatrix)> {
    cfg.validate()?;
    match cfg.eval_ref {
        Some(_) => {
            let all: Vec<usize> = (0..train.n_rows()).collect();
            let trained = train_on(train, &train.labels, all, Vec::new(), &cfg.grid, &cfg.split)?;
            Ok((trained, eval.clone()))
        }
        None => {
            if train.users != eval.users {
                return Err(Error::InvalidInput("held-out evaluation needs the training cohort".into()));
            }
            let eval_pos = eval.positives();
            if eval_pos == 0 || eval_pos == eval.n_rows() {
                return Err(Error::SingleClass);
            }
            // split on the evaluation labels so that every m shares one test set
            let (train_rows, test_rows) = stratified_split(&eval.labels, cfg.split.train_fraction, cfg.split.seed);
            let test = eval.select_rows(&test_rows);
            let trained = train_on(train, &train.labels, train_rows, Vec::new(), &cfg.grid, &cfg.split)?;
            Ok((trained, test))
        }
    }
}

/// Model and baseline reports on the test rows, plus the model's
/// probabilities in row order.
pub fn score_test(artifacts: &Artifacts, model: &GbdtModel, test: &FeatureMatrix, cfg: &ExperimentConfig) -> Result<(EvalReport, EvalReport, Vec<f64>)> {
    let probs = model.predict_rows(test)?;
    let config = echo(cfg);
    let predicted = threshold_predictions(&probs, DEFAULT_THRESHOLD);
    let report = report("gbdt", &probs, &predicted, &test.labels, DEFAULT_THRESHOLD, config.clone())?;
    let baseline = baseline_report(artifacts, test, config)?;
    Ok((report, baseline, probs))
}

/// Trains on the training cohort and scores the evaluation cohort.
pub fn run_experiment(artifacts: &Artifacts, cfg: &ExperimentConfig) -> Result<Experiment> {
    let (train, eval) = build_matrices(artifacts, cfg)?;
    let (trained, test_matrix) = fit_matrices(&train, &eval, cfg)?;
    let (report, baseline, probs) = score_test(artifacts, &trained.model, &test_matrix, cfg)?;
    let mut training = trained.report;
    training.test_rows = test_matrix.n_rows();
    training.test_auc = Some(report.auc);
    training.test_accuracy = Some(report.accuracy);
    training.test_confusion = Some(report.confusion);
    Ok(Experiment {
        model: trained.model,
        training,
        report,
        baseline,
        test_probs: test_matrix.users.iter().cloned().zip(probs).collect(),
        test_matrix,
    })
}
