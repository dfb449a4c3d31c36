//! Feature matrices over an n-month lookback ending at a reference month.
//!
//! Rows are the reference month's influencers of one kind; the label is 1
//! for stable and 0 for temporal. Columns are named `<feature>__t-<offset>`
//! where offset 0 is the reference month.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::artifacts::{Artifacts, MonthArtifacts};
use crate::error::{Error, Result};
use crate::ids::UserId;
use crate::labeling::{label_reference_cohort, StabilityLabel};
use crate::scoring::{change_rate, InfluenceKind};
use crate::time::MonthId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Follow,
    #[serde(rename = "RT")]
    Rt,
    #[serde(rename = "BR")]
    Br,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Follow => "Follow",
            Category::Rt => "RT",
            Category::Br => "BR",
        })
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "follow" => Ok(Category::Follow),
            "rt" => Ok(Category::Rt),
            "br" | "broker" => Ok(Category::Br),
            other => Err(Error::Config(format!("unknown feature category {other:?}"))),
        }
    }
}

/// Which columns go into a matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Categories(BTreeSet<Category>),
    /// Only the task's own influence score, one column per month.
    ScoreOnly,
    /// The task's influence score summed over the lookback, as one column.
    Aggregated,
}

impl FeatureSet {
    pub fn all() -> Self {
        FeatureSet::Categories([Category::Follow, Category::Rt, Category::Br].into_iter().collect())
    }

    pub fn only(category: Category) -> Self {
        FeatureSet::Categories([category].into_iter().collect())
    }

    /// Categories whose data feed the matrix.
    pub fn categories(&self, kind: InfluenceKind) -> Vec<Category> {
        match self {
            FeatureSet::Categories(c) => c.iter().copied().collect(),
            FeatureSet::ScoreOnly | FeatureSet::Aggregated => vec![score_category(kind)],
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSet::ScoreOnly => f.write_str("score-only"),
            FeatureSet::Aggregated => f.write_str("aggregated"),
            FeatureSet::Categories(c) if c.len() == 3 => f.write_str("all"),
            FeatureSet::Categories(c) => {
                let names: Vec<String> = c.iter().map(|c| c.to_string().to_ascii_lowercase()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    /// Accepts `all`, `score-only` (and the aliases `rt-counts-only`,
    /// `broker-score-only`), `aggregated`, or a comma list of categories.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSet::all()),
            "score-only" | "rt-counts-only" | "broker-score-only" => Ok(FeatureSet::ScoreOnly),
            "aggregated" => Ok(FeatureSet::Aggregated),
            list => {
                let cats = list
                    .split(',')
                    .map(|c| c.trim().parse())
                    .collect::<Result<BTreeSet<Category>>>()?;
                if cats.is_empty() {
                    return Err(Error::Config("empty feature category list".into()));
                }
                Ok(FeatureSet::Categories(cats))
            }
        }
    }
}

fn score_category(kind: InfluenceKind) -> Category {
    match kind {
        InfluenceKind::Spreader => Category::Rt,
        InfluenceKind::Broker => Category::Br,
    }
}

/// Whether the half-month change rate uses only the task's own score or
/// both scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeRateMode {
    #[default]
    TaskKind,
    Both,
}

impl FromStr for ChangeRateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task-kind" => Ok(ChangeRateMode::TaskKind),
            "both" => Ok(ChangeRateMode::Both),
            other => Err(Error::Config(format!("unknown change rate mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub reference: MonthId,
    /// Lookback length in months, reference month included.
    pub n: usize,
    /// Labeling period in months.
    pub m: usize,
    pub kind: InfluenceKind,
    pub set: FeatureSet,
    pub change_rate: ChangeRateMode,
}

impl FeatureSpec {
    pub fn new(reference: MonthId, n: usize, m: usize, kind: InfluenceKind, set: FeatureSet) -> Self {
        FeatureSpec {
            reference,
            n,
            m,
            kind,
            set,
            change_rate: ChangeRateMode::TaskKind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub schema_version: u32,
    pub reference: MonthId,
    pub n: usize,
    pub m: usize,
    pub kind: InfluenceKind,
    pub feature_set: String,
    pub categories: Vec<Category>,
    pub change_rate: ChangeRateMode,
}

/// Dense row-major matrix with one label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub users: Vec<UserId>,
    pub columns: Vec<String>,
    values: Vec<f64>,
    pub labels: Vec<u8>,
    pub meta: MatrixMeta,
}

pub fn column_name(feature: &str, offset: usize) -> String {
    format!("{feature}__t-{offset}")
}

impl FeatureMatrix {
    pub fn new(users: Vec<UserId>, columns: Vec<String>, values: Vec<f64>, labels: Vec<u8>, meta: MatrixMeta) -> Result<Self> {
        if values.len() != users.len() * columns.len() || labels.len() != users.len() {
            return Err(Error::InvalidInput(format!(
                "matrix shape mismatch: {} users, {} columns, {} values, {} labels",
                users.len(),
                columns.len(),
                values.len(),
                labels.len()
            )));
        }
        Ok(FeatureMatrix {
            users,
            columns,
            values,
            labels,
            meta,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.users.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn column_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Copy holding only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            users: rows.iter().map(|&r| self.users[r].clone()).collect(),
            columns: self.columns.clone(),
            values,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Copy holding only the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::InvalidInput(format!("no column named {n:?}")))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(self.n_rows() * idx.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            values.extend(idx.iter().map(|&c| row[c]));
        }
        Ok(FeatureMatrix {
            users: self.users.clone(),
            columns: names.to_vec(),
            values,
            labels: self.labels.clone(),
            meta: self.meta.clone(),
        })
    }

    /// Same matrix with labels replaced, matched by user.
    pub fn with_labels(&self, labels: &BTreeMap<UserId, u8>) -> Result<FeatureMatrix> {
        let new: Vec<u8> = self
            .users
            .iter()
            .map(|u| {
                labels
                    .get(u)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("no label for user {u}")))
            })
            .collect::<Result<_>>()?;
        let mut out = self.clone();
        out.labels = new;
        Ok(out)
    }

    pub fn set_value(&mut self, row: usize, col: usize, v: f64) {
        let w = self.columns.len();
        self.values[row * w + col] = v;
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["user".to_string(), "label".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut rec = vec![self.users[r].to_string(), self.labels[r].to_string()];
            rec.extend(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta_path = path.with_extension("meta.json");
        let meta = serde_json::to_vec_pretty(&self.meta)?;
        std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let meta_path = path.with_extension("meta.json");
        let mut meta_text = String::new();
        File::open(&meta_path)
            .and_then(|mut f| f.read_to_string(&mut meta_text))
            .map_err(|e| Error::io(&meta_path, e))?;
        let meta: MatrixMeta = serde_json::from_str(&meta_text)?;

        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader.headers()?.clone();
        if header.len() < 2 || &header[0] != "user" || &header[1] != "label" {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "header must start with user,label".into(),
            });
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
        let (mut users, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message,
            };
            users.push(UserId::new(&rec[0]));
            labels.push(rec[1].parse::<u8>().map_err(|e| bad(e.to_string()))?);
            for field in rec.iter().skip(2) {
                values.push(field.parse::<f64>().map_err(|e| bad(e.to_string()))?);
            }
        }
        FeatureMatrix::new(users, columns, values, labels, meta)
    }
}

struct ColumnSource {
    name: String,
    values: BTreeMap<UserId, f64>,
}

fn metric_or_zero(metric: Option<&crate::graph::NodeMetric>) -> BTreeMap<UserId, f64> {
    metric.map(|m| m.values.clone()).unwrap_or_default()
}

fn monthly_columns(kind: InfluenceKind, set: &FeatureSet, month: &MonthArtifacts) -> Vec<(&'static str, BTreeMap<UserId, f64>)> {
    let counts = |kind: InfluenceKind| -> BTreeMap<UserId, f64> {
        month
            .scores
            .column(kind)
            .iter()
            .map(|(u, s)| (u.clone(), *s as f64))
            .collect()
    };
    let mut cols = Vec::new();
    match set {
        FeatureSet::ScoreOnly => {
            let name = match kind {
                InfluenceKind::Spreader => "rt_count",
                InfluenceKind::Broker => "broker_score",
            };
            cols.push((name, counts(kind)));
        }
        FeatureSet::Categories(cats) => {
            if cats.contains(&Category::Follow) {
                let f = month.follow.as_ref();
                cols.push(("follower_count", metric_or_zero(f.map(|f| &f.in_degree))));
                cols.push(("pagerank_follow", metric_or_zero(f.map(|f| &f.pagerank))));
                cols.push(("community_size_follow", metric_or_zero(f.map(|f| &f.community_size))));
            }
            if cats.contains(&Category::Rt) {
                cols.push(("rt_count", counts(InfluenceKind::Spreader)));
                cols.push(("rter_count", month.rt.in_degree.values.clone()));
                cols.push(("pagerank_rt", month.rt.pagerank.values.clone()));
                cols.push(("community_size_rt", month.rt.community_size.values.clone()));
                cols.push(("unique_user_rate", month.unique_user_rate.clone()));
            }
            if cats.contains(&Category::Br) {
                cols.push(("broker_score", counts(InfluenceKind::Broker)));
            }
        }
        FeatureSet::Aggregated => unreachable!("aggregated matrices are built separately"),
    }
    cols
}

fn change_rate_column(name: &str, kind: InfluenceKind, reference: &MonthArtifacts) -> ColumnSource {
    let users: BTreeSet<&UserId> = reference
        .first_half
        .users()
        .chain(reference.second_half.users())
        .collect();
    ColumnSource {
        name: column_name(name, 0),
        values: users
            .into_iter()
            .map(|u| {
                let a = reference.first_half.score(kind, u.as_str());
                let b = reference.second_half.score(kind, u.as_str());
                (u.clone(), change_rate(a, b))
            })
            .collect(),
    }
}

fn cohort(artifacts: &Artifacts, spec: &FeatureSpec) -> Result<(Vec<UserId>, Vec<u8>)> {
    let labels = label_reference_cohort(artifacts.sets(spec.kind), spec.reference, spec.m)?;
    if labels.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {} influencers in {}",
            spec.kind, spec.reference
        )));
    }
    let users: Vec<UserId> = labels.keys().cloned().collect();
    let y = labels
        .values()
        .map(|l| u8::from(*l == StabilityLabel::Stable))
        .collect();
    Ok((users, y))
}

fn lookback<'a>(artifacts: &'a Artifacts, spec: &FeatureSpec) -> Result<Vec<&'a MonthArtifacts>> {
    if spec.n < 1 {
        return Err(Error::Config("lookback n must be at least 1".into()));
    }
    (0..spec.n)
        .map(|offset| artifacts.month(spec.reference.offset(-(offset as i64))))
        .collect()
}

fn assemble(spec: &FeatureSpec, users: Vec<UserId>, labels: Vec<u8>, sources: Vec<ColumnSource>) -> Result<FeatureMatrix> {
    let mut values = Vec::with_capacity(users.len() * sources.len());
    for u in &users {
        values.extend(sources.iter().map(|s| s.values.get(u).copied().unwrap_or(0.0)));
    }
    let meta = MatrixMeta {
        schema_version: SCHEMA_VERSION,
        reference: spec.reference,
        n: spec.n,
        m: spec.m,
        kind: spec.kind,
        feature_set: spec.set.to_string(),
        categories: spec.set.categories(spec.kind),
        change_rate: spec.change_rate,
    };
    FeatureMatrix::new(users, sources.into_iter().map(|s| s.name).collect(), values, labels, meta)
}

/// Per-month feature matrix (or the aggregated single column when the
/// spec's set is [`FeatureSet::Aggregated`]).
pub fn build_feature_matrix(artifacts: &Artifacts, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    if spec.set == FeatureSet::Aggregated {
        return aggregate_feature(artifacts, spec);
    }
    let months = lookback(artifacts, spec)?;
    let (users, labels) = cohort(artifacts, spec)?;

    // feature-major, offsets ascending
    let per_offset: Vec<Vec<(&'static str, BTreeMap<UserId, f64>)>> =
        months.iter().map(|m| monthly_columns(spec.kind, &spec.set, m)).collect();
    let n_features = per_offset[0].len();
    let mut sources = Vec::new();
    let push_feature = |f: usize, sources: &mut Vec<ColumnSource>| {
        for (offset, cols) in per_offset.iter().enumerate() {
            sources.push(ColumnSource {
                name: column_name(cols[f].0, offset),
                values: cols[f].1.clone(),
            });
        }
    };
    let names: Vec<&str> = per_offset[0].iter().map(|c| c.0).collect();
    let broker_at = names.iter().position(|n| *n == "broker_score");
    for f in 0..n_features {
        if Some(f) == broker_at {
            continue;
        }
        push_feature(f, &mut sources);
    }

    if let FeatureSet::Categories(cats) = &spec.set {
        let reference = months[0];
        let has_rt = cats.contains(&Category::Rt);
        let has_br = cats.contains(&Category::Br);
        match spec.change_rate {
            ChangeRateMode::TaskKind if has_rt || has_br => {
                sources.push(change_rate_column("change_rate", spec.kind, reference));
            }
            ChangeRateMode::Both => {
                if has_rt {
                    sources.push(change_rate_column("change_rate_spreader", InfluenceKind::Spreader, reference));
                }
                if has_br {
                    sources.push(change_rate_column("change_rate_broker", InfluenceKind::Broker, reference));
                }
            }
            _ => {}
        }
    }

    if let Some(f) = broker_at {
        push_feature(f, &mut sources);
    }
    assemble(spec, users, labels, sources)
}

/// One column holding the task's influence score summed over the lookback.
pub fn aggregate_feature(artifacts: &Artifacts, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    let months = lookback(artifacts, spec)?;
    let (users, labels) = cohort(artifacts, spec)?;
    let mut total: BTreeMap<UserId, f64> = BTreeMap::new();
    for m in &months {
        for (u, s) in m.scores.column(spec.kind) {
            *total.entry(u.clone()).or_insert(0.0) += *s as f64;
        }
    }
    let name = match spec.kind {
        InfluenceKind::Spreader => "rt_count_sum",
        InfluenceKind::Broker => "broker_score_sum",
    };
    let spec = FeatureSpec {
        set: FeatureSet::Aggregated,
        ..spec.clone()
    };
    assemble(
        &spec,
        users,
        labels,
        vec![ColumnSource {
            name: column_name(name, 0),
            values: total,
        }],
    )
}

/// Writes a matrix as CSV plus its metadata sidecar, creating parent dirs.
pub fn save_matrix(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    matrix.write_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_set_parsing() {
        assert_eq!("all".parse::<FeatureSet>().unwrap(), FeatureSet::all());
        assert_eq!("broker-score-only".parse::<FeatureSet>().unwrap(), FeatureSet::ScoreOnly);
        assert_eq!("rt".parse::<FeatureSet>().unwrap(), FeatureSet::only(Category::Rt));
        assert_eq!(
            "follow,br".parse::<FeatureSet>().unwrap(),
            FeatureSet::Categories([Category::Follow, Category::Br].into_iter().collect())
        );
        assert!("bogus".parse::<FeatureSet>().is_err());
        assert_eq!(FeatureSet::all().to_string(), "all");
        assert_eq!(FeatureSet::ScoreOnly.categories(InfluenceKind::Broker), vec![Category::Br]);
    }

    #[test]
    fn column_names() {
        assert_eq!(column_name("rt_count", 0), "rt_count__t-0");
    }
}
