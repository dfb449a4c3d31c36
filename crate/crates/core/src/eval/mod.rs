//! Metrics, permutation importance and the experiment protocol.

pub mod experiment;
pub mod importance;
pub mod metrics;
pub mod plot;
pub mod sweep;

pub use experiment::{baseline_report, build_matrices, echo, fit_matrices, run_experiment, score_test, ConfigEcho, EvalReport, Experiment, ExperimentConfig};
pub use importance::{permutation_importance, Importance, ImportanceReport};
pub use metrics::{accuracy, auc, auc_slices, Confusion};
pub use sweep::{run_m_sweep, run_n_sweep, LookbackMode, SweepPoint, SweepReport};
