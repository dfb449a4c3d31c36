//! Gradient-boosted trees with logistic loss, grid-searched by stratified
//! cross-validation, and the score-ranking baseline.

mod baseline;
mod gbdt;
pub mod train;
pub mod tree;

pub use baseline::{baseline_classify, BaselineOutput};
pub use gbdt::{columns_of, fit, logistic_loss, sigmoid, FitOutput, GbdtModel, GbdtParams, MODEL_SCHEMA_VERSION};
pub use train::{
    cross_validate, fit_rows, select_best, stratified_folds, stratified_split, train, train_on, GridPointResult, HyperParamGrid,
    SplitSpec, Trained, TrainingReport,
};
pub use tree::{Node, Tree};
