//! Per-window influence scores computed from retweet cascades.
//!
//! * spreader score: retweets received by a user's tweets inside the window;
//! * broker score: for every tweet a user retweeted, the number of retweets of
//!   that tweet strictly after the user's own retweet;
//! * change rate: smoothed log ratio between two half-month scores;
//! * unique user rate: distinct retweeters over total retweets received.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{TweetId, UserId};
use crate::ingest::EventSlice;
use crate::time::TimeWindow;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeEntry {
    pub retweeter: UserId,
    pub ts_ms: i64,
}

#[derive(Debug, Clone, Default)]
struct Cascade {
    author: Option<UserId>,
    entries: Vec<CascadeEntry>,
}

/// Retweets of each tweet, ordered by `(ts_ms, retweeter)`.
#[derive(Debug, Clone, Default)]
pub struct CascadeIndex {
    cascades: BTreeMap<TweetId, Cascade>,
}

impl CascadeIndex {
    pub(crate) fn push(&mut self, tweet: TweetId, author: UserId, retweeter: UserId, ts_ms: i64) {
        let c = self.cascades.entry(tweet).or_default();
        c.author.get_or_insert(author);
        c.entries.push(CascadeEntry { retweeter, ts_ms });
    }

    /// Sorts every cascade and keeps only the earliest retweet per retweeter.
    pub(crate) fn finalize(&mut self) {
        for c in self.cascades.values_mut() {
            c.entries
                .sort_unstable_by(|a, b| (a.ts_ms, &a.retweeter).cmp(&(b.ts_ms, &b.retweeter)));
            let mut seen = BTreeSet::new();
            c.entries.retain(|e| seen.insert(e.retweeter.clone()));
        }
    }

    pub fn len(&self) -> usize {
        self.cascades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cascades.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.cascades.values().map(|c| c.entries.len()).sum()
    }

    pub fn get(&self, tweet: &str) -> Option<&[CascadeEntry]> {
        self.cascades.get(tweet).map(|c| c.entries.as_slice())
    }

    pub fn author(&self, tweet: &str) -> Option<&UserId> {
        self.cascades.get(tweet).and_then(|c| c.author.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TweetId, &[CascadeEntry])> {
        self.cascades.iter().map(|(t, c)| (t, c.entries.as_slice()))
    }
}

/// Which influence score defines an influencer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfluenceKind {
    Spreader,
    Broker,
}

impl InfluenceKind {
    pub const ALL: [InfluenceKind; 2] = [InfluenceKind::Spreader, InfluenceKind::Broker];

    pub fn as_str(self) -> &'static str {
        match self {
            InfluenceKind::Spreader => "spreader",
            InfluenceKind::Broker => "broker",
        }
    }
}

impl fmt::Display for InfluenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfluenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spreader" | "source-spreader" => Ok(InfluenceKind::Spreader),
            "broker" => Ok(InfluenceKind::Broker),
            other => Err(Error::Config(format!("unknown influencer kind {other:?}"))),
        }
    }
}

/// Both influence scores for every user active in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub window: TimeWindow,
    pub spreader: BTreeMap<UserId, u64>,
    pub broker: BTreeMap<UserId, u64>,
}

impl ScoreTable {
    pub fn empty(window: TimeWindow) -> Self {
        ScoreTable {
            window,
            spreader: BTreeMap::new(),
            broker: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.spreader.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spreader.is_empty()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.spreader.keys()
    }

    pub fn column(&self, kind: InfluenceKind) -> &BTreeMap<UserId, u64> {
        match kind {
            InfluenceKind::Spreader => &self.spreader,
            InfluenceKind::Broker => &self.broker,
        }
    }

    /// Score of `user`; users without an entry read as 0.
    pub fn score(&self, kind: InfluenceKind, user: &str) -> u64 {
        self.column(kind).get(user).copied().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user", "window_start", "window_kind", "spreader", "broker"])?;
        let start = self.window.start.to_string();
        let kind = self.window.kind.to_string();
        for (user, s) in &self.spreader {
            let b = self.broker.get(user).copied().unwrap_or(0);
            w.write_record([
                user.as_str(),
                &start,
                &kind,
                &s.to_string(),
                &b.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<score table>", e))?;
        Ok(())
    }
}

pub fn spreader_score(slice: &EventSlice, user: &UserId) -> u64 {
    slice
        .tweets_of(user)
        .iter()
        .filter_map(|t| slice.cascades.get(t.as_str()))
        .map(|c| c.len() as u64)
        .sum()
}

/// Number of entries strictly later than `ts` in a cascade sorted by time.
fn later_than(cascade: &[CascadeEntry], ts: i64) -> u64 {
    let first_later = cascade.partition_point(|e| e.ts_ms <= ts);
    (cascade.len() - first_later) as u64
}

pub fn broker_score(slice: &EventSlice, user: &UserId) -> u64 {
    slice
        .cascades
        .iter()
        .filter_map(|(_, c)| {
            c.iter()
                .find(|e| &e.retweeter == user)
                .map(|e| later_than(c, e.ts_ms))
        })
        .sum()
}

/// `ln((second + 1) / (first + 1))`.
pub fn change_rate(score_first: u64, score_second: u64) -> f64 {
    ((score_second as f64 + 1.0) / (score_first as f64 + 1.0)).ln()
}

pub fn unique_user_rate(slice: &EventSlice, user: &UserId) -> f64 {
    let total = spreader_score(slice, user);
    if total == 0 {
        return 0.0;
    }
    let distinct: BTreeSet<&UserId> = slice
        .tweets_of(user)
        .iter()
        .filter_map(|t| slice.cascades.get(t.as_str()))
        .flat_map(|c| c.iter().map(|e| &e.retweeter))
        .collect();
    distinct.len() as f64 / total as f64
}

/// Unique user rate for every author in the slice.
pub fn unique_user_rates(slice: &EventSlice) -> BTreeMap<UserId, f64> {
    slice
        .tweets_by_author
        .keys()
        .map(|u| (u.clone(), unique_user_rate(slice, u)))
        .collect()
}

/// Distinct retweeters per author, the numerator of the unique user rate.
pub fn distinct_retweeters(slice: &EventSlice) -> BTreeMap<UserId, usize> {
    slice
        .tweets_by_author
        .iter()
        .map(|(author, tweets)| {
            let distinct: BTreeSet<&UserId> = tweets
                .iter()
                .filter_map(|t| slice.cascades.get(t.as_str()))
                .flat_map(|c| c.iter().map(|e| &e.retweeter))
                .collect();
            (author.clone(), distinct.len())
        })
        .collect()
}

/// Both scores for every user appearing in the slice, in one pass per cascade.
pub fn score_all(slice: &EventSlice) -> ScoreTable {
    let mut table = ScoreTable::empty(slice.window);
    for (tweet, cascade) in slice.cascades.iter() {
        let author = slice
            .cascades
            .author(tweet.as_str())
            .expect("every cascade records its author");
        *table.spreader.entry(author.clone()).or_insert(0) += cascade.len() as u64;
        table.broker.entry(author.clone()).or_insert(0);

        let k = cascade.len();
        let mut first_later = 0;
        for (i, entry) in cascade.iter().enumerate() {
            if first_later <= i {
                first_later = i + 1;
            }
            while first_later < k && cascade[first_later].ts_ms <= entry.ts_ms {
                first_later += 1;
            }
            *table.broker.entry(entry.retweeter.clone()).or_insert(0) += (k - first_later) as u64;
            table.spreader.entry(entry.retweeter.clone()).or_insert(0);
        }
    }
    table
}
