//! Monthly follow and retweet networks and their node metrics.

mod leiden;
mod pagerank;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::UserId;
use crate::ingest::{EventSlice, FollowSnapshot};
use crate::time::MonthId;

pub use leiden::{community_sizes, leiden, LeidenConfig, LeidenLevel, LeidenTrace, Partition, UndirectedGraph};
pub use pagerank::{pagerank, PageRankConfig, PageRankResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Follow,
    Rt,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Follow => "follow",
            Flavor::Rt => "rt",
        })
    }
}

/// Directed, unweighted network without self-loops. Nodes are kept sorted by
/// id so every traversal order is deterministic.
#[derive(Debug, Clone)]
pub struct Network {
    pub flavor: Flavor,
    pub month: MonthId,
    nodes: Vec<UserId>,
    index: HashMap<UserId, usize>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network from explicit nodes plus edge endpoints. Self-loops
    /// and repeated edges collapse away.
    pub fn from_edges<I>(flavor: Flavor, month: MonthId, extra_nodes: impl IntoIterator<Item = UserId>, edges: I) -> Self
    where
        I: IntoIterator<Item = (UserId, UserId)>,
    {
        let edges: BTreeSet<(UserId, UserId)> = edges.into_iter().filter(|(a, b)| a != b).collect();
        let mut node_set: BTreeSet<UserId> = extra_nodes.into_iter().collect();
        for (a, b) in &edges {
            node_set.insert(a.clone());
            node_set.insert(b.clone());
        }
        let nodes: Vec<UserId> = node_set.into_iter().collect();
        let index: HashMap<UserId, usize> = nodes.iter().cloned().enumerate().map(|(i, u)| (u, i)).collect();
        let mut out_adj = vec![Vec::new(); nodes.len()];
        let mut in_adj = vec![Vec::new(); nodes.len()];
        for (a, b) in &edges {
            let (ia, ib) = (index[a], index[b]);
            out_adj[ia].push(ib);
            in_adj[ib].push(ia);
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }
        Network {
            flavor,
            month,
            nodes,
            index,
            out_adj,
            in_adj,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> &[UserId] {
        &self.nodes
    }

    pub fn node_index(&self, user: &str) -> Option<usize> {
        self.index.get(user).copied()
    }

    pub fn contains_edge(&self, source: &str, target: &str) -> bool {
        match (self.node_index(source), self.node_index(target)) {
            (Some(a), Some(b)) => self.out_adj[a].binary_search(&b).is_ok(),
            _ => false,
        }
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_adj[i]
    }

    pub fn edges(&self) -> impl Iterator<Item = (&UserId, &UserId)> {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(move |(a, outs)| outs.iter().map(move |&b| (&self.nodes[a], &self.nodes[b])))
    }

    pub fn write_edge_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "target"])?;
        for (a, b) in self.edges() {
            w.write_record([a.as_str(), b.as_str()])?;
        }
        w.flush().map_err(|e| Error::io("<edge list>", e))?;
        Ok(())
    }
}

/// Follow network: an edge `follower -> followee` per follow pair. `universe`
/// adds tracked users that have no edges this month.
pub fn build_follow_network(snapshot: &FollowSnapshot, universe: Option<&BTreeSet<UserId>>) -> Network {
    Network::from_edges(
        Flavor::Follow,
        snapshot.month,
        universe.into_iter().flatten().cloned(),
        snapshot.edges.iter().cloned(),
    )
}

/// Retweet network: an edge `retweeter -> author` whenever the retweeter
/// retweeted any of the author's tweets inside the slice.
pub fn build_rt_network(slice: &EventSlice, month: MonthId) -> Network {
    let mut edges = BTreeSet::new();
    for (tweet, cascade) in slice.cascades.iter() {
        let author = slice.cascades.author(tweet.as_str()).expect("cascade author");
        for e in cascade {
            edges.insert((e.retweeter.clone(), author.clone()));
        }
    }
    Network::from_edges(Flavor::Rt, month, std::iter::empty(), edges)
}

/// A per-node value together with how it was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetric {
    pub name: String,
    pub params: String,
    pub values: BTreeMap<UserId, f64>,
}

impl NodeMetric {
    pub fn get(&self, user: &str) -> f64 {
        self.values.get(user).copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, month: MonthId, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user", "metric", "value", "month"])?;
        let month = month.to_string();
        for (u, v) in &self.values {
            w.write_record([u.as_str(), &self.name, &v.to_string(), &month])?;
        }
        w.flush().map_err(|e| Error::io("<metric>", e))?;
        Ok(())
    }
}

pub fn in_degree(net: &Network) -> NodeMetric {
    NodeMetric {
        name: format!("in_degree_{}", net.flavor),
        params: String::new(),
        values: net
            .nodes
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), net.in_adj[i].len() as f64))
            .collect(),
    }
}
