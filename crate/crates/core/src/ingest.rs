//! Loading retweet logs and follow snapshots, and slicing events into windows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{TweetId, UserId};
use crate::scoring::CascadeIndex;
use crate::time::{MonthId, TimeWindow};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RetweetEvent {
    pub tweet_id: TweetId,
    /// Original poster of the tweet.
    pub author: UserId,
    pub retweeter: UserId,
    pub ts_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: TweetId,
    pub author: UserId,
    pub posted_at: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Jsonl,
    Csv,
}

impl EventFormat {
    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) => ext.parse(),
            None => Err(Error::Config(format!(
                "cannot infer event format of {}",
                path.display()
            ))),
        }
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(EventFormat::Jsonl),
            "csv" => Ok(EventFormat::Csv),
            other => Err(Error::Config(format!("unknown event format {other:?}"))),
        }
    }
}

/// Counts of rows discarded while loading events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub self_retweets: usize,
    pub duplicates: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.self_retweets + self.duplicates
    }
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    /// Deduplicated events sorted by `(ts_ms, tweet_id, retweeter)`.
    pub events: Vec<RetweetEvent>,
    /// One record per tweet id, sorted by id.
    pub tweets: Vec<TweetRecord>,
    pub dropped: DropCounts,
}

#[derive(Debug, Deserialize)]
struct EventRow {
    tweet_id: String,
    author: String,
    retweeter: String,
    ts_ms: i64,
}

/// Accumulates raw rows, enforcing the per-row invariants and the
/// keep-earliest rule for repeated `(tweet_id, retweeter)` pairs.
#[derive(Default)]
struct EventCollector {
    authors: HashMap<TweetId, UserId>,
    by_pair: HashMap<(TweetId, UserId), i64>,
    dropped: DropCounts,
}

impl EventCollector {
    fn push(&mut self, row: EventRow) -> std::result::Result<(), String> {
        self.push_event(RetweetEvent {
            tweet_id: row.tweet_id.into(),
            author: row.author.into(),
            retweeter: row.retweeter.into(),
            ts_ms: row.ts_ms,
        })
    }

    fn push_event(&mut self, ev: RetweetEvent) -> std::result::Result<(), String> {
        if ev.tweet_id.as_str().is_empty() {
            return Err("empty tweet_id".into());
        }
        if ev.author.as_str().is_empty() || ev.retweeter.as_str().is_empty() {
            return Err("empty user id".into());
        }
        if ev.ts_ms < 0 {
            return Err(format!("negative timestamp {}", ev.ts_ms));
        }
        match self.authors.get(&ev.tweet_id) {
            Some(known) if *known != ev.author => {
                return Err(format!(
                    "tweet {} attributed to both {known} and {}",
                    ev.tweet_id, ev.author
                ));
            }
            Some(_) => {}
            None => {
                self.authors.insert(ev.tweet_id.clone(), ev.author.clone());
            }
        }
        if ev.retweeter == ev.author {
            self.dropped.self_retweets += 1;
            return Ok(());
        }
        match self.by_pair.entry((ev.tweet_id, ev.retweeter)) {
            std::collections::hash_map::Entry::Occupied(mut slot) => {
                self.dropped.duplicates += 1;
                if ev.ts_ms < *slot.get() {
                    slot.insert(ev.ts_ms);
                }
            }
            std::collections::hash_map::Entry::Vacant(slot) => {
                slot.insert(ev.ts_ms);
            }
        }
        Ok(())
    }

    fn finish(self) -> EventLog {
        let mut events: Vec<RetweetEvent> = self
            .by_pair
            .into_iter()
            .map(|((tweet_id, retweeter), ts_ms)| RetweetEvent {
                author: self.authors[&tweet_id].clone(),
                tweet_id,
                retweeter,
                ts_ms,
            })
            .collect();
        sort_events(&mut events);
        let tweets = tweet_records(&events);
        EventLog {
            events,
            tweets,
            dropped: self.dropped,
        }
    }
}

fn sort_events(events: &mut [RetweetEvent]) {
    events.sort_unstable_by(|a, b| {
        (a.ts_ms, &a.tweet_id, &a.retweeter).cmp(&(b.ts_ms, &b.tweet_id, &b.retweeter))
    });
}

/// Synthesizes one record per tweet: its author and earliest observed retweet time.
pub fn tweet_records(events: &[RetweetEvent]) -> Vec<TweetRecord> {
    let mut first: BTreeMap<&TweetId, (&UserId, i64)> = BTreeMap::new();
    for ev in events {
        first
            .entry(&ev.tweet_id)
            .and_modify(|slot| slot.1 = slot.1.min(ev.ts_ms))
            .or_insert((&ev.author, ev.ts_ms));
    }
    first
        .into_iter()
        .map(|(id, (author, ts))| TweetRecord {
            tweet_id: id.clone(),
            author: author.clone(),
            posted_at: ts,
        })
        .collect()
}

/// Applies the load-time rules (self-retweets dropped, earliest duplicate kept)
/// to events that are already in memory.
pub fn normalize_events(events: impl IntoIterator<Item = RetweetEvent>) -> Result<EventLog> {
    let mut collector = EventCollector::default();
    for (i, ev) in events.into_iter().enumerate() {
        collector
            .push_event(ev)
            .map_err(|m| Error::InvalidInput(format!("event {i}: {m}")))?;
    }
    Ok(collector.finish())
}

pub fn load_retweet_events(path: &Path, format: EventFormat) -> Result<EventLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut collector = EventCollector::default();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    match format {
        EventFormat::Jsonl => {
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: EventRow =
                    serde_json::from_str(&line).map_err(|e| parse_err(idx + 1, e.to_string()))?;
                collector.push(row).map_err(|m| parse_err(idx + 1, m))?;
            }
        }
        EventFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            for (idx, record) in reader.deserialize::<EventRow>().enumerate() {
                // header is line 1
                let line = idx + 2;
                let row = record.map_err(|e| parse_err(line, e.to_string()))?;
                collector.push(row).map_err(|m| parse_err(line, m))?;
            }
        }
    }
    Ok(collector.finish())
}

pub fn write_events(path: &Path, events: &[RetweetEvent], format: EventFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        EventFormat::Jsonl => {
            for ev in events {
                serde_json::to_writer(&mut out, ev)?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        EventFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for ev in events {
                w.serialize(ev)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FollowSnapshot {
    pub month: MonthId,
    /// `(follower, followee)` pairs, deduplicated, without self-loops.
    pub edges: BTreeSet<(UserId, UserId)>,
}

impl FollowSnapshot {
    pub fn new(month: MonthId) -> Self {
        FollowSnapshot {
            month,
            edges: BTreeSet::new(),
        }
    }

    /// Inserts an edge; self-loops are ignored. Returns whether it was added.
    pub fn insert(&mut self, follower: UserId, followee: UserId) -> bool {
        follower != followee && self.edges.insert((follower, followee))
    }

    pub fn file_name(month: MonthId) -> String {
        format!("follows_{month}.csv")
    }
}

#[derive(Debug, Clone, Default)]
pub struct FollowLoad {
    pub snapshots: BTreeMap<MonthId, FollowSnapshot>,
    pub self_loops_dropped: usize,
    /// Non-fatal findings such as gaps in the month sequence.
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct FollowRow {
    follower: String,
    followee: String,
}

fn snapshot_month(path: &Path) -> Option<MonthId> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix("follows_")?
        .strip_suffix(".csv")?
        .parse()
        .ok()
}

pub fn load_follow_snapshots(dir: &Path) -> Result<FollowLoad> {
    let mut files: Vec<(MonthId, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(month) = snapshot_month(&path) {
            files.push((month, path));
        }
    }
    files.sort();

    let mut load = FollowLoad::default();
    for (month, path) in files {
        let mut snapshot = FollowSnapshot::new(month);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        for (idx, record) in reader.deserialize::<FollowRow>().enumerate() {
            let line = idx + 2;
            let row = record.map_err(|e| Error::Parse {
                path: path.clone(),
                line,
                message: e.to_string(),
            })?;
            if row.follower.is_empty() || row.followee.is_empty() {
                return Err(Error::Parse {
                    path: path.clone(),
                    line,
                    message: "empty user id".into(),
                });
            }
            if row.follower == row.followee {
                load.self_loops_dropped += 1;
                continue;
            }
            snapshot.insert(row.follower.into(), row.followee.into());
        }
        load.snapshots.insert(month, snapshot);
    }

    let months: Vec<MonthId> = load.snapshots.keys().copied().collect();
    for pair in months.windows(2) {
        if pair[0].succ() != pair[1] {
            let msg = format!("follow snapshots skip from {} to {}", pair[0], pair[1]);
            log::warn!("{msg}");
            load.warnings.push(msg);
        }
    }
    Ok(load)
}

pub fn write_follow_snapshot(dir: &Path, snapshot: &FollowSnapshot) -> Result<PathBuf> {
    let path = dir.join(FollowSnapshot::file_name(snapshot.month));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["follower", "followee"])?;
    for (a, b) in &snapshot.edges {
        w.write_record([a.as_str(), b.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Events falling inside one time window, indexed by tweet.
#[derive(Debug, Clone)]
pub struct EventSlice {
    pub window: TimeWindow,
    pub cascades: CascadeIndex,
    /// Tweets with at least one retweet in the window, grouped by author.
    pub tweets_by_author: BTreeMap<UserId, Vec<TweetId>>,
}

impl EventSlice {
    pub fn is_empty(&self) -> bool {
        self.cascades.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.cascades.event_count()
    }

    pub fn tweets_of(&self, author: &UserId) -> &[TweetId] {
        self.tweets_by_author
            .get(author)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Users appearing as an author or a retweeter.
    pub fn active_users(&self) -> BTreeSet<UserId> {
        let mut users: BTreeSet<UserId> = self.tweets_by_author.keys().cloned().collect();
        for (_, cascade) in self.cascades.iter() {
            users.extend(cascade.iter().map(|e| e.retweeter.clone()));
        }
        users
    }
}

pub fn slice(events: &[RetweetEvent], window: TimeWindow) -> EventSlice {
    let mut cascades = CascadeIndex::default();
    let mut tweets_by_author: BTreeMap<UserId, BTreeSet<TweetId>> = BTreeMap::new();
    let in_window: &[RetweetEvent] = if events.is_sorted_by_key(|e| e.ts_ms) {
        let lo = events.partition_point(|e| e.ts_ms < window.start);
        let hi = events.partition_point(|e| e.ts_ms < window.end);
        &events[lo..hi]
    } else {
        events
    };
    for ev in in_window.iter().filter(|e| window.contains(e.ts_ms)) {
        cascades.push(ev.tweet_id.clone(), ev.author.clone(), ev.retweeter.clone(), ev.ts_ms);
        tweets_by_author
            .entry(ev.author.clone())
            .or_default()
            .insert(ev.tweet_id.clone());
    }
    cascades.finalize();
    EventSlice {
        window,
        cascades,
        tweets_by_author: tweets_by_author
            .into_iter()
            .map(|(u, t)| (u, t.into_iter().collect()))
            .collect(),
    }
}
