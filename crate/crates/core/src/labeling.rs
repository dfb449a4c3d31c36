//! Monthly influencer sets, stable/temporal labels and persistence curves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::UserId;
use crate::scoring::{InfluenceKind, ScoreTable};
use crate::time::MonthId;

pub const DEFAULT_FRACTION: f64 = 0.10;

/// Users ordered by score descending, ties by id ascending.
pub fn ranked_users(table: &ScoreTable, kind: InfluenceKind) -> Vec<(&UserId, u64)> {
    let mut ranked: Vec<(&UserId, u64)> = table.column(kind).iter().map(|(u, s)| (u, *s)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
}

/// The first `floor(fraction * N)` users of the ranking, N being the number
/// of users with an entry in the table.
pub fn top_influencers(table: &ScoreTable, kind: InfluenceKind, fraction: f64) -> Result<BTreeSet<UserId>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("influencer fraction {fraction} outside (0, 1)")));
    }
    let count = (fraction * table.len() as f64).floor() as usize;
    Ok(ranked_users(table, kind)
        .into_iter()
        .take(count)
        .map(|(u, _)| u.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluencerSets {
    pub kind: InfluenceKind,
    pub sets: BTreeMap<MonthId, BTreeSet<UserId>>,
}

impl InfluencerSets {
    pub fn from_tables<'a>(
        tables: impl IntoIterator<Item = (MonthId, &'a ScoreTable)>,
        kind: InfluenceKind,
        fraction: f64,
    ) -> Result<Self> {
        let mut sets = BTreeMap::new();
        for (month, table) in tables {
            sets.insert(month, top_influencers(table, kind, fraction)?);
        }
        Ok(InfluencerSets { kind, sets })
    }

    pub fn month(&self, m: MonthId) -> Result<&BTreeSet<UserId>> {
        self.sets.get(&m).ok_or(Error::MissingMonth(m))
    }

    fn check_range(&self, first: MonthId, last: MonthId) -> Result<()> {
        for m in MonthId::range(first, last) {
            self.month(m)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityLabel {
    Stable,
    Temporal,
    Other,
}

impl fmt::Display for StabilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StabilityLabel::Stable => "stable",
            StabilityLabel::Temporal => "temporal",
            StabilityLabel::Other => "other",
        })
    }
}

/// Stable when the user is an influencer in each of the `m` months starting
/// at `reference`; temporal when only the reference-month membership holds.
pub fn stability_label(sets: &InfluencerSets, user: &UserId, reference: MonthId, m: usize) -> Result<StabilityLabel> {
    if m < 1 {
        return Err(Error::Config("labeling period m must be at least 1".into()));
    }
    let last = reference.offset(m as i64 - 1);
    sets.check_range(reference, last)?;
    if !sets.month(reference)?.contains(user) {
        return Ok(StabilityLabel::Other);
    }
    let stable = MonthId::range(reference, last).all(|month| sets.sets[&month].contains(user));
    Ok(if stable {
        StabilityLabel::Stable
    } else {
        StabilityLabel::Temporal
    })
}

/// Labels for every influencer of the reference month.
pub fn label_reference_cohort(
    sets: &InfluencerSets,
    reference: MonthId,
    m: usize,
) -> Result<BTreeMap<UserId, StabilityLabel>> {
    sets.month(reference)?
        .iter()
        .map(|u| Ok((u.clone(), stability_label(sets, u, reference, m)?)))
        .collect()
}

/// Fraction of the cohort (influencers in every month from
/// `reference - prior` through `reference`) that stays an influencer for
/// `k` consecutive months from `reference`, for k = 1..=horizon.
pub fn persistence_curve(sets: &InfluencerSets, reference: MonthId, prior: usize, horizon: usize) -> Result<Vec<f64>> {
    let first = reference.offset(-(prior as i64));
    let last = reference.offset(horizon as i64 - 1);
    sets.check_range(first, last.max(reference))?;
    let cohort: Vec<&UserId> = sets
        .month(reference)?
        .iter()
        .filter(|u| MonthId::range(first, reference).all(|m| sets.sets[&m].contains(*u)))
        .collect();
    if cohort.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no user was an influencer in every month {first}..={reference}"
        )));
    }
    let mut alive = cohort;
    let total = alive.len() as f64;
    let mut curve = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let month = reference.offset(k as i64);
        alive.retain(|u| sets.sets[&month].contains(*u));
        curve.push(alive.len() as f64 / total);
    }
    Ok(curve)
}

pub fn write_labels_csv<W: Write>(
    labels: &BTreeMap<UserId, StabilityLabel>,
    kind: InfluenceKind,
    reference: MonthId,
    m: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user", "kind", "ref_month", "m", "label"])?;
    let (kind, reference, m) = (kind.to_string(), reference.to_string(), m.to_string());
    for (u, l) in labels {
        w.write_record([u.as_str(), &kind, &reference, &m, &l.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<labels>", e))?;
    Ok(())
}

pub fn write_curve_csv<W: Write>(curve: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "proportion"])?;
    for (i, p) in curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<curve>", e))?;
    Ok(())
}
