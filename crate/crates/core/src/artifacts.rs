//! Everything computed once per month: score tables for the month and its
//! halves, unique user rates, and metrics of both monthly networks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_follow_network, build_rt_network, community_sizes, in_degree, pagerank, Network, NodeMetric,
    PageRankConfig,
};
use crate::ids::UserId;
use crate::ingest::{slice, FollowSnapshot, RetweetEvent};
use crate::labeling::InfluencerSets;
use crate::scoring::{score_all, unique_user_rates, InfluenceKind, ScoreTable};
use crate::time::{MonthId, TimeWindow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactConfig {
    pub pagerank: PageRankConfig,
    pub leiden_seed: u64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            pagerank: PageRankConfig::default(),
            leiden_seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub nodes: usize,
    pub edges: usize,
    pub in_degree: NodeMetric,
    pub pagerank: NodeMetric,
    pub pagerank_converged: bool,
    pub community_size: NodeMetric,
}

impl NetworkMetrics {
    pub fn compute(net: &Network, config: &ArtifactConfig) -> Result<Self> {
        let pr = pagerank(net, &config.pagerank)?;
        if !pr.converged {
            log::warn!(
                "pagerank on {} network for {} stopped after {} iterations (delta {:.3e})",
                net.flavor,
                net.month,
                pr.iterations,
                pr.delta
            );
        }
        Ok(NetworkMetrics {
            nodes: net.node_count(),
            edges: net.edge_count(),
            in_degree: in_degree(net),
            pagerank: pr.metric,
            pagerank_converged: pr.converged,
            community_size: community_sizes(net, config.leiden_seed),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonthArtifacts {
    pub month: MonthId,
    pub scores: ScoreTable,
    pub first_half: ScoreTable,
    pub second_half: ScoreTable,
    pub unique_user_rate: BTreeMap<UserId, f64>,
    pub rt: NetworkMetrics,
    /// Absent when no follow snapshot exists for the month.
    pub follow: Option<NetworkMetrics>,
}

impl MonthArtifacts {
    pub fn compute(
        events: &[RetweetEvent],
        follow: Option<&FollowSnapshot>,
        month: MonthId,
        config: &ArtifactConfig,
    ) -> Result<Self> {
        let full = slice(events, TimeWindow::month(month));
        let first = slice(events, TimeWindow::first_half(month));
        let second = slice(events, TimeWindow::second_half(month));
        let rt_net = build_rt_network(&full, month);
        let follow = match follow {
            Some(snap) => Some(NetworkMetrics::compute(&build_follow_network(snap, None), config)?),
            None => None,
        };
        Ok(MonthArtifacts {
            month,
            scores: score_all(&full),
            first_half: score_all(&first),
            second_half: score_all(&second),
            unique_user_rate: unique_user_rates(&full),
            rt: NetworkMetrics::compute(&rt_net, config)?,
            follow,
        })
    }
}

/// Monthly artifacts over a contiguous range of months, plus the derived
/// influencer sets for both kinds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifacts {
    pub months: BTreeMap<MonthId, MonthArtifacts>,
    pub fraction: f64,
    pub spreaders: InfluencerSets,
    pub brokers: InfluencerSets,
}

impl Artifacts {
    pub fn compute(
        events: &[RetweetEvent],
        follows: &BTreeMap<MonthId, FollowSnapshot>,
        first: MonthId,
        last: MonthId,
        fraction: f64,
        config: &ArtifactConfig,
    ) -> Result<Self> {
        if first > last {
            return Err(Error::Config(format!("empty month range {first}..={last}")));
        }
        let months: Vec<MonthId> = MonthId::range(first, last).collect();
        let computed: Vec<MonthArtifacts> = months
            .par_iter()
            .map(|&m| MonthArtifacts::compute(events, follows.get(&m), m, config))
            .collect::<Result<_>>()?;
        Self::from_months(computed.into_iter().map(|a| (a.month, a)).collect(), fraction)
    }

    pub fn from_months(months: BTreeMap<MonthId, MonthArtifacts>, fraction: f64) -> Result<Self> {
        let spreaders = InfluencerSets::from_tables(
            months.iter().map(|(m, a)| (*m, &a.scores)),
            InfluenceKind::Spreader,
            fraction,
        )?;
        let brokers = InfluencerSets::from_tables(
            months.iter().map(|(m, a)| (*m, &a.scores)),
            InfluenceKind::Broker,
            fraction,
        )?;
        Ok(Artifacts {
            months,
            fraction,
            spreaders,
            brokers,
        })
    }

    pub fn month(&self, m: MonthId) -> Result<&MonthArtifacts> {
        self.months.get(&m).ok_or(Error::MissingMonth(m))
    }

    pub fn sets(&self, kind: InfluenceKind) -> &InfluencerSets {
        match kind {
            InfluenceKind::Spreader => &self.spreaders,
            InfluenceKind::Broker => &self.brokers,
        }
    }

    pub fn first_month(&self) -> Option<MonthId> {
        self.months.keys().next().copied()
    }

    pub fn last_month(&self) -> Option<MonthId> {
        self.months.keys().next_back().copied()
    }
}
