//! The staged batch pipeline: configuration, seed derivation, the run
//! directory layout and one function per command.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::artifacts::{ArtifactConfig, Artifacts, NetworkMetrics};
use crate::error::{Error, Result};
use crate::eval::plot::{importance_points, persistence_points, sweep_points, write_plot_csv, PlotPoint};
use crate::eval::{
    build_matrices, fit_matrices, permutation_importance, run_m_sweep, run_n_sweep, score_test, EvalReport,
    ExperimentConfig, LookbackMode, SweepReport,
};
use crate::features::{ChangeRateMode, FeatureMatrix, FeatureSet};
use crate::ids::UserId;
use crate::ingest::{load_follow_snapshots, load_retweet_events, EventFormat};
use crate::labeling::{label_reference_cohort, persistence_curve, write_labels_csv, StabilityLabel, DEFAULT_FRACTION};
use crate::model::{GbdtModel, HyperParamGrid, SplitSpec, TrainingReport};
use crate::scoring::InfluenceKind;
use crate::synth::{generate, SynthConfig, GROUND_TRUTH_FILE};
use crate::time::MonthId;

pub const SCHEMA_VERSION: u32 = 1;

pub const SCORES_DIR: &str = "scores";
pub const NETWORKS_DIR: &str = "networks";
pub const FEATURES_DIR: &str = "features";
pub const MODELS_DIR: &str = "models";
pub const REPORTS_DIR: &str = "reports";

const ARTIFACTS_FILE: &str = "scores/artifacts.json";
const TRAIN_MATRIX: &str = "features/train.csv";
const EVAL_MATRIX: &str = "features/eval.csv";
const MODEL_FILE: &str = "models/model.json";
const TRAINING_FILE: &str = "models/training.json";
const SPLIT_FILE: &str = "models/split.json";

/// Longest prior history shown in persistence curves.
const MAX_PRIOR: usize = 3;
const PERSISTENCE_HORIZON: usize = 6;

/// Serializes through `Display` and parses through `FromStr`.
mod as_string {
    use super::*;

    pub fn serialize<T: Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> std::result::Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: serde::Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub events: PathBuf,
    pub follows: PathBuf,
    /// Inferred from the events file extension when absent.
    pub format: Option<EventFormat>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            events: PathBuf::from("data/events.jsonl"),
            follows: PathBuf::from("data/follows"),
            format: None,
        }
    }
}

impl DataConfig {
    pub fn ground_truth(&self) -> PathBuf {
        self.events.parent().unwrap_or(Path::new("")).join(GROUND_TRUTH_FILE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceSplit {
    #[default]
    Test,
    Train,
}

impl FromStr for ImportanceSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(ImportanceSplit::Test),
            "train" => Ok(ImportanceSplit::Train),
            other => Err(Error::Config(format!("unknown importance split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    pub repeats: usize,
    /// Rows the shuffles are scored on.
    pub on: ImportanceSplit,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            repeats: crate::eval::importance::DEFAULT_REPEATS,
            on: ImportanceSplit::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub modes: Vec<LookbackMode>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            m_values: vec![2, 3, 4, 5, 6],
            n_values: vec![1, 2, 3, 4],
            modes: vec![LookbackMode::PerMonth, LookbackMode::Aggregated],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    /// Parent of the run directories.
    pub out: PathBuf,
    /// Worker threads, 0 meaning one per core. Never affects outputs.
    pub workers: usize,
    /// Also emit `(x, y, series)` plot CSVs.
    pub plot_data: bool,
    pub kind: InfluenceKind,
    pub train_ref: MonthId,
    pub eval_ref: Option<MonthId>,
    pub n: usize,
    pub m: usize,
    pub eval_m: usize,
    pub fraction: f64,
    #[serde(with = "as_string")]
    pub features: FeatureSet,
    pub change_rate: ChangeRateMode,
    pub train_fraction: f64,
    pub folds: usize,
    pub data: DataConfig,
    pub grid: HyperParamGrid,
    pub importance: ImportanceConfig,
    pub sweep: SweepConfig,
    /// Generator settings for `synth`; its `seed` is replaced by the one
    /// derived from the master seed.
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        PipelineConfig {
            seed: 1,
            out: PathBuf::from("out"),
            workers: 0,
            plot_data: false,
            kind: InfluenceKind::Spreader,
            train_ref: synth.start.offset(3),
            eval_ref: None,
            n: 4,
            m: 6,
            eval_m: 6,
            fraction: DEFAULT_FRACTION,
            features: FeatureSet::all(),
            change_rate: ChangeRateMode::TaskKind,
            train_fraction: SplitSpec::default().train_fraction,
            folds: SplitSpec::default().folds,
            data: DataConfig::default(),
            grid: HyperParamGrid::default(),
            importance: ImportanceConfig::default(),
            sweep: SweepConfig::default(),
            synth,
        }
    }
}

/// A stage seed: the first 8 bytes of SHA-256 over the little-endian master
/// seed followed by the stage name.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config(format!("fraction {} outside (0, 1)", self.fraction)));
        }
        if self.n == 0 || self.m == 0 || self.eval_m == 0 {
            return Err(Error::Config("n, m and eval_m must be at least 1".into()));
        }
        self.experiment().validate()?;
        if self.importance.repeats < 1 {
            return Err(Error::Config("importance repeats must be at least 1".into()));
        }
        self.synth.validate()
    }

    /// Hex digest of every setting that feeds a downstream stage. The output
    /// directory, worker count, plot switch and the importance and sweep
    /// sections are left out: the last two only shape their own reports.
    pub fn run_id(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.workers = 0;
        c.plot_data = false;
        c.importance = ImportanceConfig::default();
        c.sweep = SweepConfig::default();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let d = Sha256::digest(&bytes);
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(self.run_id())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: derive_seed(self.seed, "synth"),
            ..self.synth.clone()
        }
    }

    pub fn artifact_config(&self) -> ArtifactConfig {
        ArtifactConfig {
            leiden_seed: derive_seed(self.seed, "leiden"),
            ..ArtifactConfig::default()
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            kind: self.kind,
            train_ref: self.train_ref,
            eval_ref: self.eval_ref,
            n: self.n,
            m: self.m,
            eval_m: self.eval_m,
            feature_set: self.features.clone(),
            change_rate: self.change_rate,
            grid: self.grid.clone(),
            split: SplitSpec {
                train_fraction: self.train_fraction,
                folds: self.folds,
                seed: derive_seed(self.seed, "split"),
            },
        }
    }
}

/// Every artifact written into a run directory, with its schema version.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub run_id: String,
    pub artifacts: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub schema_version: u32,
}

/// An open run directory.
pub struct Run {
    pub config: PipelineConfig,
    pub id: String,
    pub dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Run {
    pub fn open(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let id = config.run_id();
        let dir = config.out.join(&id);
        for sub in [SCORES_DIR, NETWORKS_DIR, FEATURES_DIR, MODELS_DIR, REPORTS_DIR] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let cfg_path = dir.join("config.toml");
        fs::write(&cfg_path, config.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
        Ok(Run {
            config: config.clone(),
            id,
            dir,
            written: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn record(&mut self, stage: &str, rel: impl Into<String>) {
        self.written.push((stage.to_string(), rel.into()));
    }

    fn write_json<T: Serialize>(&mut self, stage: &str, rel: &str, value: &T) -> Result<()> {
        let path = self.path(rel);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(stage, rel);
        Ok(())
    }

    fn write_with(&mut self, stage: &str, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let path = self.path(rel);
        let mut buf = Vec::new();
        f(&mut buf)?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        self.record(stage, rel);
        Ok(())
    }

    fn write_plot(&mut self, stage: &str, rel: &str, points: &[PlotPoint]) -> Result<()> {
        if self.config.plot_data {
            self.write_with(stage, rel, |buf| write_plot_csv(points, buf))?;
        }
        Ok(())
    }

    fn read_json<T: DeserializeOwned>(&self, rel: &str, producer: &str) -> Result<T> {
        let path = self.require(rel, producer)?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn require(&self, rel: &str, producer: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact(format!(
                "{} (run `{producer}` first)",
                path.display()
            )))
        }
    }

    /// Merges this command's artifacts into `manifest.json`.
    fn finish(&mut self) -> Result<()> {
        let path = self.path("manifest.json");
        let mut manifest: Manifest = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(_) => Manifest::default(),
        };
        manifest.schema_version = SCHEMA_VERSION;
        manifest.run_id = self.id.clone();
        for (stage, rel) in self.written.drain(..) {
            manifest.artifacts.insert(
                rel,
                ManifestEntry {
                    stage,
                    schema_version: SCHEMA_VERSION,
                },
            );
        }
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn summary(&self, command: &str, extra: Value) -> Value {
        let mut v = json!({
            "command": command,
            "run_id": self.id,
            "dir": self.dir.display().to_string(),
        });
        if let (Value::Object(base), Value::Object(more)) = (&mut v, extra) {
            base.extend(more);
        }
        v
    }

    fn artifacts(&self) -> Result<Artifacts> {
        let stored: Stored<Artifacts> = self.read_json(ARTIFACTS_FILE, "score")?;
        Ok(stored.data)
    }
}

/// A JSON payload tagged with its schema version.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Stored<T> {
    schema_version: u32,
    #[serde(flatten)]
    data: T,
}

fn stored<T>(data: T) -> Stored<T> {
    Stored {
        schema_version: SCHEMA_VERSION,
        data,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub schema_version: u32,
    pub protocol: String,
    pub train_users: Vec<UserId>,
    pub test_users: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub schema_version: u32,
    pub model: EvalReport,
    pub baseline: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceFile {
    pub schema_version: u32,
    pub kind: InfluenceKind,
    pub reference: MonthId,
    /// Curves keyed by the number of prior months a cohort member was
    /// already an influencer.
    pub curves: BTreeMap<usize, Vec<f64>>,
}

pub fn cmd_synth(config: &PipelineConfig) -> Result<Value> {
    let cfg = config.synth_config();
    let data = generate(&cfg)?;
    let truth = config.data.ground_truth();
    data.write_to(&config.data.events, &config.data.follows, &truth)?;
    Ok(json!({
        "command": "synth",
        "events": data.events.len(),
        "users": cfg.users,
        "months": cfg.months,
        "seed": cfg.seed,
        "events_path": config.data.events.display().to_string(),
        "follows_dir": config.data.follows.display().to_string(),
        "ground_truth": truth.display().to_string(),
    }))
}

fn write_metrics_csv(net: &NetworkMetrics, buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["user", "in_degree", "pagerank", "community_size"])?;
    for (u, deg) in &net.in_degree.values {
        w.write_record([
            u.as_str(),
            &deg.to_string(),
            &net.pagerank.get(u.as_str()).to_string(),
            &net.community_size.get(u.as_str()).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))
}

#[derive(Serialize)]
struct NetworkSummary {
    month: MonthId,
    flavor: &'static str,
    nodes: usize,
    edges: usize,
    pagerank_converged: bool,
}

pub fn cmd_score(config: &PipelineConfig) -> Result<Value> {
    let mut run = Run::open(config)?;
    let format = match config.data.format {
        Some(f) => f,
        None => EventFormat::from_path(&config.data.events)?,
    };
    let log = load_retweet_events(&config.data.events, format)?;
    let follows = load_follow_snapshots(&config.data.follows)?;
    for w in &follows.warnings {
        log::warn!("{w}");
    }
    let (Some(first), Some(last)) = (log.events.first(), log.events.last()) else {
        return Err(Error::InvalidInput(format!("{} holds no events", config.data.events.display())));
    };
    let (first, last) = (MonthId::containing(first.ts_ms), MonthId::containing(last.ts_ms));
    let artifacts = Artifacts::compute(
        &log.events,
        &follows.snapshots,
        first,
        last,
        config.fraction,
        &config.artifact_config(),
    )?;

    let mut networks = Vec::new();
    for (month, a) in &artifacts.months {
        for (suffix, table) in [("", &a.scores), ("_first-half", &a.first_half), ("_second-half", &a.second_half)] {
            run.write_with("score", &format!("{SCORES_DIR}/scores_{month}{suffix}.csv"), |buf| table.write_csv(buf))?;
        }
        run.write_with("score", &format!("{SCORES_DIR}/unique_user_rate_{month}.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["user", "unique_user_rate"])?;
            for (u, r) in &a.unique_user_rate {
                w.write_record([u.as_str(), &r.to_string()])?;
            }
            w.flush().map_err(|e| Error::io("<rates>", e))
        })?;
        let nets = [("rt", Some(&a.rt)), ("follow", a.follow.as_ref())];
        for (flavor, net) in nets {
            let Some(net) = net else { continue };
            run.write_with("score", &format!("{NETWORKS_DIR}/{flavor}_{month}.csv"), |buf| write_metrics_csv(net, buf))?;
            networks.push(NetworkSummary {
                month: *month,
                flavor,
                nodes: net.nodes,
                edges: net.edges,
                pagerank_converged: net.pagerank_converged,
            });
        }
    }
    run.write_json("score", &format!("{NETWORKS_DIR}/summary.json"), &stored(json!({ "networks": networks })))?;
    run.write_json("score", ARTIFACTS_FILE, &stored(&artifacts))?;
    run.finish()?;
    Ok(run.summary(
        "score",
        json!({
            "events": log.events.len(),
            "dropped": log.dropped.total(),
            "first_month": first,
            "last_month": last,
            "follow_snapshots": follows.snapshots.len(),
        }),
    ))
}

fn persistence_curves(artifacts: &Artifacts, kind: InfluenceKind, reference: MonthId) -> BTreeMap<usize, Vec<f64>> {
    (0..=MAX_PRIOR)
        .filter_map(|prior| {
            persistence_curve(artifacts.sets(kind), reference, prior, PERSISTENCE_HORIZON)
                .ok()
                .map(|c| (prior, c))
        })
        .collect()
}

pub fn cmd_label(config: &PipelineConfig) -> Result<Value> {
    let mut run = Run::open(config)?;
    let artifacts = run.artifacts()?;
    let mut summary = serde_json::Map::new();
    for kind in [InfluenceKind::Spreader, InfluenceKind::Broker] {
        let labels = label_reference_cohort(artifacts.sets(kind), config.train_ref, config.m)?;
        run.write_with("label", &format!("{REPORTS_DIR}/labels_{kind}.csv"), |buf| {
            write_labels_csv(&labels, kind, config.train_ref, config.m, buf)
        })?;
        let curves = persistence_curves(&artifacts, kind, config.train_ref);
        let stable = labels.values().filter(|l| **l == StabilityLabel::Stable).count();
        summary.insert(
            kind.to_string(),
            json!({ "cohort": labels.len(), "stable": stable, "retention": curves.get(&0).and_then(|c| c.last()) }),
        );
        let points = persistence_points(&curves.iter().map(|(p, c)| (*p, c.clone())).collect::<Vec<_>>(), kind.as_str());
        run.write_json(
            "label",
            &format!("{REPORTS_DIR}/persistence_{kind}.json"),
            &PersistenceFile {
                schema_version: SCHEMA_VERSION,
                kind,
                reference: config.train_ref,
                curves,
            },
        )?;
        run.write_plot("label", &format!("{REPORTS_DIR}/persistence_{kind}.plot.csv"), &points)?;
    }
    run.finish()?;
    Ok(run.summary("label", Value::Object(summary)))
}

pub fn cmd_features(config: &PipelineConfig) -> Result<Value> {
    let mut run = Run::open(config)?;
    let artifacts = run.artifacts()?;
    let (train, eval) = build_matrices(&artifacts, &config.experiment())?;
    for (rel, m) in [(TRAIN_MATRIX, &train), (EVAL_MATRIX, &eval)] {
        m.write_csv(&run.path(rel))?;
        run.record("features", rel);
        run.record("features", rel.replace(".csv", ".meta.json"));
    }
    run.finish()?;
    Ok(run.summary(
        "features",
        json!({
            "rows": train.n_rows(),
            "columns": train.n_cols(),
            "positives": train.positives(),
            "eval_rows": eval.n_rows(),
            "eval_positives": eval.positives(),
        }),
    ))
}

fn read_matrix(run: &Run, rel: &str) -> Result<FeatureMatrix> {
    FeatureMatrix::read_csv(&run.require(rel, "features")?)
}

fn rows_of(matrix: &FeatureMatrix, users: &[UserId]) -> Result<FeatureMatrix> {
    let index: BTreeMap<&UserId, usize> = matrix.users.iter().enumerate().map(|(i, u)| (u, i)).collect();
    let rows = users
        .iter()
        .map(|u| {
            index
                .get(u)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("user {u} of the split is not in the feature matrix")))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(matrix.select_rows(&rows))
}

pub fn cmd_train(config: &PipelineConfig) -> Result<Value> {
    let mut run = Run::open(config)?;
    let train = read_matrix(&run, TRAIN_MATRIX)?;
    let eval = read_matrix(&run, EVAL_MATRIX)?;
    let exp = config.experiment();
    let (trained, test) = fit_matrices(&train, &eval, &exp)?;
    trained.model.save(&run.path(MODEL_FILE))?;
    run.record("train", MODEL_FILE);
    let report: TrainingReport = trained.report;
    run.write_json("train", TRAINING_FILE, &stored(&report))?;
    let split = SplitFile {
        schema_version: SCHEMA_VERSION,
        protocol: if exp.eval_ref.is_some() { "later-cohort" } else { "held-out" }.into(),
        train_users: trained.train_rows.iter().map(|&r| train.users[r].clone()).collect(),
        test_users: test.users.clone(),
    };
    run.write_json("train", SPLIT_FILE, &split)?;
    run.finish()?;
    Ok(run.summary(
        "train",
        json!({
            "chosen": report.chosen,
            "cv_auc": report.grid.iter().find(|g| g.params == report.chosen).map(|g| g.mean_auc),
            "train_rows": split.train_users.len(),
            "test_rows": split.test_users.len(),
        }),
    ))
}

fn load_model(run: &Run) -> Result<(GbdtModel, SplitFile)> {
    let model = GbdtModel::load(&run.require(MODEL_FILE, "train")?)?;
    let split: SplitFile = run.read_json(SPLIT_FILE, "train")?;
    Ok((model, split))
}

pub fn cmd_eval(config: &PipelineConfig) -> Result<Value> {
    let mut run = Run::open(config)?;
    let (model, split) = load_model(&run)?;
    let artifacts = run.artifacts()?;
    let test = rows_of(&read_matrix(&run, EVAL_MATRIX)?, &split.test_users)?;
    let (report, baseline, probs) = score_test(&artifacts, &model, &test, &config.experiment())?;
    run.write_with("eval", &format!("{REPORTS_DIR}/predictions.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["user", "probability", "label"])?;
        for ((u, p), l) in test.users.iter().zip(&probs).zip(&test.labels) {
            w.write_record([u.as_str(), &p.to_string(), &l.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<predictions>", e))
    })?;
    let out = EvalFile {
        schema_version: SCHEMA_VERSION,
        model: report,
        baseline,
    };
    run.write_json("eval", &format!("{REPORTS_DIR}/eval.json"), &out)?;
    run.finish()?;
    Ok(run.summary(
        "eval",
        json!({
            "auc": out.model.auc,
            "accuracy": out.model.accuracy,
            "baseline_auc": out.baseline.auc,
            "baseline_accuracy": out.baseline.accuracy,
            "rows": out.model.rows,
            "categories": out.model.config.categories,
        }),
    ))
}

pub fn cmd_importance(config: &PipelineConfig) -> Result<Value> {
    let mut run = Run::open(config)?;
    let (model, split) = load_model(&run)?;
    let rows = match config.importance.on {
        ImportanceSplit::Test => rows_of(&read_matrix(&run, EVAL_MATRIX)?, &split.test_users)?,
        ImportanceSplit::Train => rows_of(&read_matrix(&run, TRAIN_MATRIX)?, &split.train_users)?,
    };
    let report = permutation_importance(&model, &rows, config.importance.repeats, derive_seed(config.seed, "importance"))?;
    run.write_json("importance", &format!("{REPORTS_DIR}/importance.json"), &report)?;
    run.write_plot(
        "importance",
        &format!("{REPORTS_DIR}/importance.plot.csv"),
        &importance_points(&report, config.kind.as_str()),
    )?;
    run.finish()?;
    let top: Vec<Value> = report
        .ranking()
        .into_iter()
        .take(3)
        .map(|(name, imp)| json!({ "feature": name, "mean": imp.mean }))
        .collect();
    Ok(run.summary("importance", json!({ "base_auc": report.base_auc, "top": top })))
}

pub fn cmd_sweep(config: &PipelineConfig) -> Result<Value> {
    let mut run = Run::open(config)?;
    let artifacts = run.artifacts()?;
    let base = config.experiment();
    let mut summary = serde_json::Map::new();
    let sweeps: [(&str, Box<dyn Fn() -> Result<SweepReport>>); 2] = [
        ("m", Box::new(|| run_m_sweep(&artifacts, &base, &config.sweep.m_values))),
        ("n", Box::new(|| run_n_sweep(&artifacts, &base, &config.sweep.n_values, &config.sweep.modes))),
    ];
    for (param, sweep) in sweeps {
        let report = sweep()?;
        run.write_json("sweep", &format!("{REPORTS_DIR}/sweep_{param}.json"), &report)?;
        run.write_with("sweep", &format!("{REPORTS_DIR}/sweep_{param}.csv"), |buf| report.write_csv(buf))?;
        run.write_plot("sweep", &format!("{REPORTS_DIR}/sweep_{param}.plot.csv"), &sweep_points(&report))?;
        let mut series = serde_json::Map::new();
        for p in &report.points {
            series
                .entry(p.series.clone())
                .or_insert_with(|| json!([]))
                .as_array_mut()
                .expect("array")
                .push(json!([p.x, p.auc]));
        }
        summary.insert(format!("{param}_sweep"), Value::Object(series));
    }
    run.finish()?;
    Ok(run.summary("sweep", Value::Object(summary)))
}
