use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stabinf_core::eval::LookbackMode;
use stabinf_core::features::{ChangeRateMode, FeatureSet};
use stabinf_core::ingest::EventFormat;
use stabinf_core::pipeline::{ImportanceSplit, PipelineConfig};
use stabinf_core::{InfluenceKind, MonthId};

/// Stable-influencer analysis of retweet cascades.
///
/// Every command reads a TOML config file (optional) and applies flag
/// overrides on top. Artifacts go to `<out>/<run-id>/`, where the run id is
/// a hash of the effective configuration. Each command prints a one-line
/// JSON summary on stdout.
#[derive(Debug, Parser)]
#[command(name = "stabinf", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into the configured data paths.
    Synth(Options),
    /// Load events and follow snapshots; write monthly scores and network metrics.
    Score(Options),
    /// Label the reference cohort and write persistence curves.
    Label(Options),
    /// Build the training and evaluation feature matrices.
    Features(Options),
    /// Grid search, cross-validate and fit the classifier.
    Train(Options),
    /// Score the test rows with the model and the score-ranking baseline.
    Eval(Options),
    /// Permutation importance of every feature column.
    Importance(Options),
    /// Labeling-period (m) and lookback (n) ablations.
    Sweep(Options),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Score(_) => "score",
            Command::Label(_) => "label",
            Command::Features(_) => "features",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Importance(_) => "importance",
            Command::Sweep(_) => "sweep",
        }
    }

    pub fn options(&self) -> &Options {
        match self {
            Command::Synth(o)
            | Command::Score(o)
            | Command::Label(o)
            | Command::Features(o)
            | Command::Train(o)
            | Command::Eval(o)
            | Command::Importance(o)
            | Command::Sweep(o) => o,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// TOML config file; flags override its values.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed for every stage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write (x, y, series) plot CSVs next to the reports.
    #[arg(long)]
    pub plot_data: bool,

    /// Retweet events file (JSONL or CSV).
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Directory of follows_YYYY-MM.csv snapshots.
    #[arg(long)]
    pub follows: Option<PathBuf>,
    /// Events format: jsonl or csv (default: from the file extension).
    #[arg(long)]
    pub format: Option<EventFormat>,

    /// Influence kind: spreader or broker.
    #[arg(long)]
    pub kind: Option<InfluenceKind>,
    /// Training reference month, YYYY-MM.
    #[arg(long)]
    pub train_ref: Option<MonthId>,
    /// Reference month of a later evaluation cohort, YYYY-MM.
    #[arg(long)]
    pub eval_ref: Option<MonthId>,
    /// Lookback length in months.
    #[arg(long)]
    pub n: Option<usize>,
    /// Labeling period of the training labels in months.
    #[arg(long)]
    pub m: Option<usize>,
    /// Labeling period of the evaluation labels in months.
    #[arg(long)]
    pub eval_m: Option<usize>,
    /// Influencer fraction per month.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Feature set: all, score-only, rt-counts-only, broker-score-only,
    /// aggregated, or a comma list of follow, rt, br.
    #[arg(long)]
    pub features: Option<FeatureSet>,
    /// Change-rate columns: task-kind or both.
    #[arg(long)]
    pub change_rate: Option<ChangeRateMode>,

    /// Training share of the held-out split.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Grid: tree counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_trees: Option<Vec<usize>>,
    /// Grid: learning rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub learning_rate: Option<Vec<f64>>,
    /// Grid: maximum depths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub max_depth: Option<Vec<usize>>,
    /// Grid: maximum leaf counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub max_leaves: Option<Vec<usize>>,
    /// Grid: minimum rows per leaf, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub min_leaf: Option<Vec<usize>>,

    /// Permutation repeats per column.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Rows used for permutation importance: test or train.
    #[arg(long)]
    pub importance_on: Option<ImportanceSplit>,

    /// m values of the labeling-period sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub m_values: Option<Vec<usize>>,
    /// n values of the lookback sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<usize>>,
    /// Lookback modes: per-month, aggregated, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<LookbackMode>>,

    /// Synthetic users.
    #[arg(long)]
    pub users: Option<usize>,
    /// Synthetic month span.
    #[arg(long)]
    pub months: Option<usize>,
    /// Synthetic month-to-month persistence.
    #[arg(long)]
    pub rho: Option<f64>,
}

macro_rules! set {
    ($($src:expr => $dst:expr),* $(,)?) => {
        $(if let Some(v) = $src.clone() { $dst = v; })*
    };
}

impl Options {
    pub fn apply(&self, c: &mut PipelineConfig) {
        set! {
            self.seed => c.seed,
            self.out => c.out,
            self.workers => c.workers,
            self.events => c.data.events,
            self.follows => c.data.follows,
            self.kind => c.kind,
            self.train_ref => c.train_ref,
            self.n => c.n,
            self.m => c.m,
            self.eval_m => c.eval_m,
            self.fraction => c.fraction,
            self.features => c.features,
            self.change_rate => c.change_rate,
            self.train_fraction => c.train_fraction,
            self.folds => c.folds,
            self.n_trees => c.grid.n_trees,
            self.learning_rate => c.grid.learning_rate,
            self.max_depth => c.grid.max_depth,
            self.max_leaves => c.grid.max_leaves,
            self.min_leaf => c.grid.min_leaf,
            self.repeats => c.importance.repeats,
            self.importance_on => c.importance.on,
            self.m_values => c.sweep.m_values,
            self.n_values => c.sweep.n_values,
            self.modes => c.sweep.modes,
            self.users => c.synth.users,
            self.months => c.synth.months,
            self.rho => c.synth.rho,
        }
        if self.format.is_some() {
            c.data.format = self.format;
        }
        if self.eval_ref.is_some() {
            c.eval_ref = self.eval_ref;
        }
        if self.plot_data {
            c.plot_data = true;
        }
    }
}
