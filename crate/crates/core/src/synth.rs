//! Deterministic synthetic datasets with planted stable and temporal
//! influencers.
//!
//! Every user carries a latent log-influence that follows an AR(1) process.
//! Planted stable users sit at a higher mean; planted temporal users share
//! the regular mean but occasionally spike and then decay. Each month a
//! user's tweets draw cascades whose expected total size is the exponential
//! of the latent value. Retweeters come from the author's followers or from
//! the whole population weighted by their own activity, and more active
//! retweeters tend to arrive earlier in a cascade.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{TweetId, UserId};
use crate::ingest::{normalize_events, write_events, write_follow_snapshot, EventFormat, FollowSnapshot, RetweetEvent};
use crate::time::MonthId;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const FOLLOWS_DIR: &str = "follows";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

const HOUR_MS: i64 = 3_600_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub users: usize,
    pub months: usize,
    pub start: MonthId,
    pub seed: u64,
    pub stable_fraction: f64,
    pub temporal_fraction: f64,
    /// Month-to-month autocorrelation of the latent influence.
    pub rho: f64,
    /// Monthly probability that a temporal user spikes.
    pub spike_prob: f64,
    /// Latent boost at the peak of a spike.
    pub spike_size: f64,
    /// Share of a spike that survives into the next month.
    pub spike_decay: f64,
    pub stable_mean: f64,
    pub stable_sd: f64,
    pub regular_mean: f64,
    pub regular_sd: f64,
    /// Mean tweets per user and month beyond the first.
    pub tweets_mean: f64,
    /// Pareto shape of the per-tweet cascade weight.
    pub cascade_alpha: f64,
    pub cascade_cap: usize,
    /// Accounts each newcomer follows while the follow graph grows.
    pub attach: usize,
    /// Attachment weight of planted stable users relative to others.
    pub stable_fitness: usize,
    /// Fraction of follow edges rewired each month.
    pub churn: f64,
    /// Probability that a retweeter is drawn from the author's followers.
    pub fan_prob: f64,
    /// Retweeting activity is `exp(activity_exponent * a)` where `a` is a
    /// second AR(1) latent with mean `activity_stable_mean` for planted
    /// stable users and 0 for everyone else.
    pub activity_exponent: f64,
    pub activity_stable_mean: f64,
    pub activity_sd: f64,
    /// Correlation between the innovations of the two latents.
    pub activity_correlation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 5000,
            months: 13,
            start: MonthId::new(2021, 10).expect("valid month"),
            seed: 1,
            stable_fraction: 0.09,
            temporal_fraction: 0.10,
            rho: 0.9,
            spike_prob: 0.1,
            spike_size: 3.0,
            spike_decay: 0.3,
            stable_mean: 3.5,
            stable_sd: 1.0,
            regular_mean: 0.0,
            regular_sd: 1.0,
            tweets_mean: 20.0,
            cascade_alpha: 8.0,
            cascade_cap: 500,
            attach: 8,
            stable_fitness: 4,
            churn: 0.02,
            fan_prob: 0.9,
            activity_exponent: 1.0,
            activity_stable_mean: 3.5,
            activity_sd: 1.0,
            activity_correlation: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("stable_fraction", self.stable_fraction),
            ("temporal_fraction", self.temporal_fraction),
            ("rho", self.rho),
            ("spike_prob", self.spike_prob),
            ("spike_decay", self.spike_decay),
            ("churn", self.churn),
            ("fan_prob", self.fan_prob),
            ("activity_correlation", self.activity_correlation),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.stable_fraction + self.temporal_fraction > 1.0 {
            return Err(Error::Config("stable and temporal fractions exceed 1".into()));
        }
        if self.months < 13 {
            return Err(Error::Config(format!("month span {} is below 13", self.months)));
        }
        if self.users < 2 {
            return Err(Error::Config("need at least 2 users".into()));
        }
        if !(self.cascade_alpha > 1.0) {
            return Err(Error::Config("cascade_alpha must exceed 1".into()));
        }
        if self.cascade_cap < 1 || self.attach < 1 || self.stable_fitness < 1 {
            return Err(Error::Config("cascade_cap, attach and stable_fitness must be positive".into()));
        }
        let non_negative = [
            ("stable_sd", self.stable_sd),
            ("regular_sd", self.regular_sd),
            ("tweets_mean", self.tweets_mean),
            ("spike_size", self.spike_size),
            ("activity_exponent", self.activity_exponent),
            ("activity_sd", self.activity_sd),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be a non-negative number")));
            }
        }
        Ok(())
    }

    pub fn last_month(&self) -> MonthId {
        self.start.offset(self.months as i64 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantedClass {
    Stable,
    Temporal,
    Regular,
}

impl fmt::Display for PlantedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlantedClass::Stable => "stable",
            PlantedClass::Temporal => "temporal",
            PlantedClass::Regular => "regular",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// Sorted by `(ts_ms, tweet_id, retweeter)`.
    pub events: Vec<RetweetEvent>,
    pub follows: BTreeMap<MonthId, FollowSnapshot>,
    pub truth: BTreeMap<UserId, PlantedClass>,
}

struct FollowGraph {
    edges: Vec<(u32, u32)>,
    present: HashSet<(u32, u32)>,
    /// Preferential-attachment lottery: a node appears once per fitness
    /// unit and once per follower gained.
    tickets: Vec<u32>,
}

impl FollowGraph {
    fn add(&mut self, a: u32, b: u32) -> bool {
        if a == b || !self.present.insert((a, b)) {
            return false;
        }
        self.edges.push((a, b));
        self.tickets.push(b);
        true
    }

    fn grow(classes: &[PlantedClass], cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut g = FollowGraph {
            edges: Vec::new(),
            present: HashSet::new(),
            tickets: Vec::new(),
        };
        for (i, class) in classes.iter().enumerate() {
            let i = i as u32;
            if !g.tickets.is_empty() {
                let wanted = cfg.attach.min(i as usize);
                let mut tries = 0;
                let mut added = 0;
                while added < wanted && tries < wanted * 20 {
                    tries += 1;
                    let target = g.tickets[rng.random_range(0..g.tickets.len())];
                    if g.add(i, target) {
                        added += 1;
                    }
                }
            }
            let fitness = if *class == PlantedClass::Stable { cfg.stable_fitness } else { 1 };
            g.tickets.extend(std::iter::repeat_n(i, fitness));
        }
        g
    }

    fn churn(&mut self, fraction: f64, n: usize, rng: &mut ChaCha8Rng) {
        let k = (fraction * self.edges.len() as f64).round() as usize;
        for _ in 0..k {
            if self.edges.is_empty() {
                break;
            }
            let idx = rng.random_range(0..self.edges.len());
            let gone = self.edges.swap_remove(idx);
            self.present.remove(&gone);
        }
        let mut added = 0;
        let mut tries = 0;
        while added < k && tries < k * 20 {
            tries += 1;
            let a = rng.random_range(0..n) as u32;
            let b = self.tickets[rng.random_range(0..self.tickets.len())];
            if self.add(a, b) {
                added += 1;
            }
        }
    }
}

fn user_ids(n: usize) -> Vec<UserId> {
    let width = n.to_string().len();
    (0..n).map(|i| UserId::new(format!("u{i:0width$}"))).collect()
}

/// Draws `k` distinct timestamps in `[lo, hi)` that are also unused
/// elsewhere in the month, returned ascending.
fn distinct_times(rng: &mut ChaCha8Rng, lo: i64, hi: i64, k: usize, used: &mut HashSet<i64>) -> Vec<i64> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let t = rng.random_range(lo..hi);
        if used.insert(t) {
            out.push(t);
        }
    }
    out.sort_unstable();
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.users;
    let ids = user_ids(n);

    let n_stable = (cfg.stable_fraction * n as f64).round() as usize;
    let n_temporal = (cfg.temporal_fraction * n as f64).round() as usize;
    let mut classes = vec![PlantedClass::Regular; n];
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for &i in &order[..n_stable] {
        classes[i] = PlantedClass::Stable;
    }
    for &i in &order[n_stable..n_stable + n_temporal] {
        classes[i] = PlantedClass::Temporal;
    }

    let mut graph = FollowGraph::grow(&classes, cfg, &mut rng);

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (mean, sd): (Vec<f64>, Vec<f64>) = classes
        .iter()
        .map(|c| match c {
            PlantedClass::Stable => (cfg.stable_mean, cfg.stable_sd),
            _ => (cfg.regular_mean, cfg.regular_sd),
        })
        .unzip();
    let active_mean: Vec<f64> = classes
        .iter()
        .map(|c| if *c == PlantedClass::Stable { cfg.activity_stable_mean } else { 0.0 })
        .collect();
    let corr = cfg.activity_correlation;
    let own = (1.0 - corr * corr).sqrt();
    let mut latent = vec![0.0; n];
    let mut active = vec![0.0; n];
    for i in 0..n {
        let (e, e2) = (std_normal.sample(&mut rng), std_normal.sample(&mut rng));
        latent[i] = mean[i] + sd[i] * e;
        active[i] = active_mean[i] + cfg.activity_sd * (corr * e + own * e2);
    }
    let mut spike = vec![0.0; n];
    let innovation = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    let pareto = Pareto::new(1.0, cfg.cascade_alpha).map_err(|e| Error::Config(e.to_string()))?;
    let pareto_mean = cfg.cascade_alpha / (cfg.cascade_alpha - 1.0);

    let mut events = Vec::new();
    let mut follows = BTreeMap::new();
    let mut tweet_counter: u64 = 0;

    for t in 0..cfg.months {
        let month = cfg.start.offset(t as i64);
        if t > 0 {
            for i in 0..n {
                let (e, e2) = (std_normal.sample(&mut rng), std_normal.sample(&mut rng));
                latent[i] = mean[i] + cfg.rho * (latent[i] - mean[i]) + sd[i] * innovation * e;
                active[i] = active_mean[i] + cfg.rho * (active[i] - active_mean[i]) + cfg.activity_sd * innovation * (corr * e + own * e2);
            }
            graph.churn(cfg.churn, n, &mut rng);
        }
        for i in 0..n {
            if classes[i] == PlantedClass::Temporal {
                spike[i] = if rng.random::<f64>() < cfg.spike_prob {
                    cfg.spike_size
                } else {
                    spike[i] * cfg.spike_decay
                };
            }
        }
        let effective: Vec<f64> = (0..n).map(|i| latent[i] + spike[i]).collect();

        let mut snapshot = FollowSnapshot::new(month);
        let mut followers: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut sorted_edges = graph.edges.clone();
        sorted_edges.sort_unstable();
        for &(a, b) in &sorted_edges {
            snapshot.insert(ids[a as usize].clone(), ids[b as usize].clone());
            followers[b as usize].push(a);
        }
        follows.insert(month, snapshot);

        let activity: Vec<f64> = active.iter().map(|a| (cfg.activity_exponent * a).exp()).collect();
        let pick_active = WeightedIndex::new(&activity).map_err(|e| Error::Config(e.to_string()))?;
        let (start, end) = (month.start_ms(), month.end_ms());
        let mut used_times = HashSet::new();

        for author in 0..n {
            let tweets = 1 + Poisson::new(cfg.tweets_mean.max(1e-9))
                .map(|p| p.sample(&mut rng) as usize)
                .unwrap_or(0);
            let per_tweet = effective[author].exp() / (1.0 + cfg.tweets_mean);
            for _ in 0..tweets {
                let weight = pareto.sample(&mut rng) / pareto_mean;
                let lambda = per_tweet * weight;
                let size = if lambda > 0.0 {
                    Poisson::new(lambda).map(|p| p.sample(&mut rng) as usize).unwrap_or(0)
                } else {
                    0
                };
                let size = size.min(cfg.cascade_cap).min(n - 1);
                if size == 0 {
                    continue;
                }
                tweet_counter += 1;
                let tweet = TweetId::new(format!("p{tweet_counter}"));

                let fans = &followers[author];
                let mut chosen: Vec<usize> = Vec::with_capacity(size);
                let mut seen = HashSet::with_capacity(size);
                let mut tries = 0;
                while chosen.len() < size && tries < size * 50 {
                    tries += 1;
                    let r = if !fans.is_empty() && rng.random::<f64>() < cfg.fan_prob {
                        fans[rng.random_range(0..fans.len())] as usize
                    } else {
                        pick_active.sample(&mut rng)
                    };
                    if r != author && seen.insert(r) {
                        chosen.push(r);
                    }
                }
                // exponential race: active retweeters tend to come first
                let mut keyed: Vec<(f64, usize)> = chosen
                    .into_iter()
                    .map(|r| {
                        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                        (-u.ln() / activity[r], r)
                    })
                    .collect();
                keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

                let posted = rng.random_range(start..end - HOUR_MS);
                let times = distinct_times(&mut rng, posted + 1, end, keyed.len(), &mut used_times);
                for ((_, r), ts) in keyed.into_iter().zip(times) {
                    events.push(RetweetEvent {
                        tweet_id: tweet.clone(),
                        author: ids[author].clone(),
                        retweeter: ids[r].clone(),
                        ts_ms: ts,
                    });
                }
            }
        }
    }

    let log = normalize_events(events)?;
    debug_assert_eq!(log.dropped.total(), 0);
    Ok(SynthData {
        events: log.events,
        follows,
        truth: ids.into_iter().zip(classes).collect(),
    })
}

impl SynthData {
    /// Writes `events.jsonl`, `follows/follows_YYYY-MM.csv` and
    /// `ground_truth.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.write_to(&dir.join(EVENTS_FILE), &dir.join(FOLLOWS_DIR), &dir.join(GROUND_TRUTH_FILE))
    }

    /// Events as JSONL at `events`, one snapshot file per month in `follows`
    /// and the planted classes at `truth`.
    pub fn write_to(&self, events: &Path, follows: &Path, truth: &Path) -> Result<()> {
        for dir in [events.parent(), Some(follows), truth.parent()].into_iter().flatten() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        write_events(events, &self.events, EventFormat::Jsonl)?;
        for snap in self.follows.values() {
            write_follow_snapshot(follows, snap)?;
        }
        let mut w = csv::Writer::from_path(truth)?;
        w.write_record(["user", "class"])?;
        for (u, c) in &self.truth {
            w.write_record([u.as_str(), &c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(truth, e))?;
        Ok(())
    }
}

pub fn read_ground_truth(path: &Path) -> Result<BTreeMap<UserId, PlantedClass>> {
    #[derive(Deserialize)]
    struct Row {
        user: String,
        class: PlantedClass,
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok((UserId::new(row.user), row.class))
        })
        .collect()
}
