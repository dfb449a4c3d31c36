//! Leiden community detection with the modularity objective.
//!
//! Each level runs fast local moving, refines every community by merging
//! well-connected singletons (which keeps refined communities connected),
//! then aggregates the refined partition while seeding the aggregate graph
//! with the unrefined one.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Network, NodeMetric};

const GAIN_EPS: f64 = 1e-12;
const MAX_LEVELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeidenConfig {
    pub resolution: f64,
    /// Randomness of the refinement merge step.
    pub theta: f64,
    pub seed: u64,
}

impl Default for LeidenConfig {
    fn default() -> Self {
        LeidenConfig {
            resolution: 1.0,
            theta: 0.01,
            seed: 0,
        }
    }
}

/// Weighted undirected graph. Self-loop weight is stored separately and
/// counts twice toward a node's strength.
#[derive(Debug, Clone)]
pub struct UndirectedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    strength: Vec<f64>,
    total_weight: f64,
}

impl UndirectedGraph {
    /// Builds from undirected edges; duplicates accumulate weight.
    pub fn from_weighted_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut self_loops = vec![0.0; n];
        for (a, b, w) in edges {
            if a == b {
                self_loops[a] += w;
            } else {
                adj[a].push((b, w));
                adj[b].push((a, w));
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable_by_key(|&(v, _)| v);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for &(v, w) in list.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == v => last.1 += w,
                    _ => merged.push((v, w)),
                }
            }
            *list = merged;
        }
        let strength: Vec<f64> = adj
            .iter()
            .zip(&self_loops)
            .map(|(l, s)| l.iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total_weight = strength.iter().sum();
        UndirectedGraph {
            adj,
            self_loops,
            strength,
            total_weight,
        }
    }

    /// Undirected, unweighted projection of a directed network: one unit
    /// edge per connected pair regardless of direction.
    pub fn projection(net: &Network) -> Self {
        let n = net.node_count();
        let mut edges = Vec::new();
        for a in 0..n {
            for &b in net.out_neighbors(a) {
                let reciprocal = net.out_neighbors(b).binary_search(&a).is_ok();
                if a < b || !reciprocal {
                    edges.push((a.min(b), a.max(b), 1.0));
                }
            }
        }
        edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        edges.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
        UndirectedGraph::from_weighted_edges(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    /// Collapses each community into one node.
    fn aggregate(&self, membership: &[usize], n_comms: usize) -> UndirectedGraph {
        let mut edges = Vec::new();
        let mut self_loops = vec![0.0; n_comms];
        for v in 0..self.node_count() {
            let cv = membership[v];
            self_loops[cv] += self.self_loops[v];
            for &(u, w) in &self.adj[v] {
                if u > v {
                    let cu = membership[u];
                    if cu == cv {
                        self_loops[cv] += w;
                    } else {
                        edges.push((cv, cu, w));
                    }
                }
            }
        }
        let mut g = UndirectedGraph::from_weighted_edges(n_comms, edges);
        for (c, s) in self_loops.into_iter().enumerate() {
            g.self_loops[c] = s;
            g.strength[c] += 2.0 * s;
        }
        g.total_weight = g.strength.iter().sum();
        g
    }
}

/// Community id per node, numbered by first appearance in node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub membership: Vec<usize>,
}

impl Partition {
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut remap = vec![usize::MAX; raw.len().max(raw.iter().copied().max().map_or(0, |m| m + 1))];
        let mut next = 0;
        let membership = raw
            .iter()
            .map(|&c| {
                if remap[c] == usize::MAX {
                    remap[c] = next;
                    next += 1;
                }
                remap[c]
            })
            .collect();
        Partition { membership }
    }

    pub fn community_count(&self) -> usize {
        self.membership.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.community_count()];
        for &c in &self.membership {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (v, &c) in self.membership.iter().enumerate() {
            out[c].push(v);
        }
        out
    }

    /// Modularity of this partition on `g` at the given resolution.
    pub fn modularity(&self, g: &UndirectedGraph, resolution: f64) -> f64 {
        let two_m = g.total_weight;
        if two_m == 0.0 {
            return 0.0;
        }
        let k = self.community_count();
        let mut internal = vec![0.0; k];
        let mut strength = vec![0.0; k];
        for v in 0..g.node_count() {
            let c = self.membership[v];
            strength[c] += g.strength[v];
            internal[c] += 2.0 * g.self_loops[v];
            for &(u, w) in &g.adj[v] {
                if self.membership[u] == c {
                    internal[c] += w;
                }
            }
        }
        (0..k)
            .map(|c| internal[c] / two_m - resolution * (strength[c] / two_m).powi(2))
            .sum()
    }
}

/// Partitions observed at one aggregation level, expressed over the
/// original nodes.
#[derive(Debug, Clone)]
pub struct LeidenLevel {
    pub moved: Partition,
    pub refined: Partition,
}

#[derive(Debug, Clone, Default)]
pub struct LeidenTrace {
    pub levels: Vec<LeidenLevel>,
}

struct Level<'g> {
    g: &'g UndirectedGraph,
    resolution: f64,
}

impl Level<'_> {
    fn gain(&self, edge_weight_to_c: f64, node_strength: f64, comm_strength: f64) -> f64 {
        edge_weight_to_c - self.resolution * node_strength * comm_strength / self.g.total_weight
    }

    /// Fast local moving. Returns true if any node changed community.
    fn move_nodes(&self, comm: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
        let g = self.g;
        let n = g.node_count();
        let mut comm_strength = vec![0.0; n];
        let mut comm_size = vec![0usize; n];
        for v in 0..n {
            comm_strength[comm[v]] += g.strength[v];
            comm_size[comm[v]] += 1;
        }
        let mut empty: Vec<usize> = (0..n).filter(|&c| comm_size[c] == 0).collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut queue: VecDeque<usize> = order.into_iter().collect();
        let mut queued = vec![true; n];

        let mut weight_to = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_move = false;

        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let kv = g.strength[v];
            let old = comm[v];

            for &(u, w) in &g.adj[v] {
                let c = comm[u];
                if weight_to[c] == 0.0 {
                    touched.push(c);
                }
                weight_to[c] += w;
            }

            comm_strength[old] -= kv;
            comm_size[old] -= 1;

            let mut best = old;
            let mut best_gain = self.gain(weight_to[old], kv, comm_strength[old]);
            for &c in &touched {
                if c == old {
                    continue;
                }
                let gain = self.gain(weight_to[c], kv, comm_strength[c]);
                if gain > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = gain;
                }
            }
            if comm_size[old] > 0 && best_gain < -GAIN_EPS {
                if let Some(c) = empty.pop() {
                    best = c;
                }
            }

            comm[v] = best;
            comm_strength[best] += kv;
            comm_size[best] += 1;
            if comm_size[old] == 0 && best != old {
                empty.push(old);
            }

            if best != old {
                any_move = true;
                for &(u, _) in &g.adj[v] {
                    if !queued[u] && comm[u] != best {
                        queued[u] = true;
                        queue.push_back(u);
                    }
                }
            }

            for &c in &touched {
                weight_to[c] = 0.0;
            }
            touched.clear();
        }
        any_move
    }

    /// Refines each community of `comm` by merging well-connected singletons
    /// into well-connected sub-communities.
    fn refine(&self, comm: &[usize], theta: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let g = self.g;
        let n = g.node_count();
        let two_m = g.total_weight;
        let gamma = self.resolution;

        let mut refined: Vec<usize> = (0..n).collect();
        let mut ref_strength = g.strength.clone();
        let mut ref_size = vec![1usize; n];

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
        for v in 0..n {
            members[comm[v]].push(v);
        }
        let mut comm_strength = vec![0.0; n];
        for v in 0..n {
            comm_strength[comm[v]] += g.strength[v];
        }

        // weight from v to the rest of its community, and from each refined
        // community to the rest of its enclosing community
        let mut to_rest = vec![0.0; n];
        for v in 0..n {
            to_rest[v] = g.adj[v]
                .iter()
                .filter(|&&(u, _)| comm[u] == comm[v])
                .map(|&(_, w)| w)
                .sum();
        }
        let mut ref_external = to_rest.clone();

        let mut weight_to = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut candidates: Vec<(usize, f64)> = Vec::new();

        for s in 0..n {
            if members[s].len() < 2 {
                continue;
            }
            let ks = comm_strength[s];
            let mut order: Vec<usize> = members[s]
                .iter()
                .copied()
                .filter(|&v| {
                    let kv = g.strength[v];
                    to_rest[v] >= gamma * kv * (ks - kv) / two_m
                })
                .collect();
            order.shuffle(rng);

            for v in order {
                if ref_size[refined[v]] != 1 {
                    continue;
                }
                let kv = g.strength[v];
                let own = refined[v];
                for &(u, w) in &g.adj[v] {
                    if comm[u] != s {
                        continue;
                    }
                    let c = refined[u];
                    if c == own {
                        continue;
                    }
                    if weight_to[c] == 0.0 {
                        touched.push(c);
                    }
                    weight_to[c] += w;
                }

                candidates.clear();
                candidates.push((own, 0.0));
                for &c in &touched {
                    let kc = ref_strength[c];
                    let well_connected = ref_external[c] >= gamma * kc * (ks - kc) / two_m;
                    if !well_connected {
                        continue;
                    }
                    let gain = self.gain(weight_to[c], kv, kc);
                    if gain >= 0.0 {
                        candidates.push((c, gain));
                    }
                }

                let chosen = if candidates.len() == 1 {
                    own
                } else {
                    let top = candidates.iter().map(|&(_, g)| g).fold(f64::NEG_INFINITY, f64::max);
                    let weights: Vec<f64> = candidates.iter().map(|&(_, g)| ((g - top) / theta).exp()).collect();
                    let total: f64 = weights.iter().sum();
                    let mut x = rng.random::<f64>() * total;
                    let mut pick = candidates.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        if x < *w {
                            pick = i;
                            break;
                        }
                        x -= w;
                    }
                    candidates[pick].0
                };

                if chosen != own {
                    let w_vc = weight_to[chosen];
                    ref_external[chosen] += to_rest[v] - 2.0 * w_vc;
                    ref_strength[chosen] += kv;
                    ref_size[chosen] += 1;
                    ref_strength[own] = 0.0;
                    ref_size[own] = 0;
                    ref_external[own] = 0.0;
                    refined[v] = chosen;
                }

                for &c in &touched {
                    weight_to[c] = 0.0;
                }
                touched.clear();
            }
        }
        refined
    }
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let p = Partition::from_labels(labels);
    let k = p.community_count();
    (p.membership, k)
}

/// Runs Leiden to convergence and returns the final partition together with
/// the per-level trace.
pub fn leiden(graph: &UndirectedGraph, config: &LeidenConfig) -> (Partition, LeidenTrace) {
    let n0 = graph.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = LeidenTrace::default();
    if graph.total_weight == 0.0 {
        return (Partition::from_labels(&(0..n0).collect::<Vec<_>>()), trace);
    }

    // original node -> node of the current aggregate graph
    let mut node_map: Vec<usize> = (0..n0).collect();
    let mut current = graph.clone();
    let mut comm: Vec<usize> = (0..n0).collect();

    for _ in 0..MAX_LEVELS {
        let level = Level {
            g: &current,
            resolution: config.resolution,
        };
        level.move_nodes(&mut comm, &mut rng);
        let (moved, n_comms) = compact(&comm);
        let moved_flat: Vec<usize> = node_map.iter().map(|&v| moved[v]).collect();

        if n_comms == current.node_count() {
            comm = moved;
            trace.levels.push(LeidenLevel {
                moved: Partition::from_labels(&moved_flat),
                refined: Partition::from_labels(&moved_flat),
            });
            break;
        }

        let refined_raw = level.refine(&moved, config.theta, &mut rng);
        let (refined, n_refined) = compact(&refined_raw);
        let refined_flat: Vec<usize> = node_map.iter().map(|&v| refined[v]).collect();
        trace.levels.push(LeidenLevel {
            moved: Partition::from_labels(&moved_flat),
            refined: Partition::from_labels(&refined_flat),
        });

        if n_refined == current.node_count() {
            // refinement merged nothing, so aggregation cannot make progress
            comm = moved;
            break;
        }

        let next = current.aggregate(&refined, n_refined);
        let mut next_comm = vec![0; n_refined];
        for v in 0..current.node_count() {
            next_comm[refined[v]] = moved[v];
        }
        for slot in node_map.iter_mut() {
            *slot = refined[*slot];
        }
        current = next;
        comm = next_comm;
    }

    let flat: Vec<usize> = node_map.iter().map(|&v| comm[v]).collect();
    (Partition::from_labels(&flat), trace)
}

/// Size of each node's community in the undirected projection of `net`.
pub fn community_sizes(net: &Network, seed: u64) -> NodeMetric {
    let config = LeidenConfig {
        seed,
        ..LeidenConfig::default()
    };
    let g = UndirectedGraph::projection(net);
    let (partition, _) = leiden(&g, &config);
    let sizes = partition.sizes();
    NodeMetric {
        name: format!("community_size_{}", net.flavor),
        params: format!("leiden,modularity,resolution={},seed={}", config.resolution, seed),
        values: net
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), sizes[partition.membership[i]] as f64))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_edges(offset: usize, k: usize) -> Vec<(usize, usize, f64)> {
        let mut e = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                e.push((offset + a, offset + b, 1.0));
            }
        }
        e
    }

    fn run(g: &UndirectedGraph, seed: u64) -> Partition {
        leiden(g, &LeidenConfig { seed, ..Default::default() }).0
    }

    #[test]
    fn disjoint_triangles() {
        let mut e = clique_edges(0, 3);
        e.extend(clique_edges(3, 3));
        let g = UndirectedGraph::from_weighted_edges(6, e);
        let p = run(&g, 1);
        assert_eq!(p.sizes(), vec![3, 3]);
        assert_eq!(p.membership, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn single_node() {
        let g = UndirectedGraph::from_weighted_edges(1, []);
        assert_eq!(run(&g, 0).sizes(), vec![1]);
    }

    #[test]
    fn joined_cliques_split_in_two() {
        let mut e = clique_edges(0, 10);
        e.extend(clique_edges(10, 10));
        e.push((9, 10, 1.0));
        let g = UndirectedGraph::from_weighted_edges(20, e);
        for seed in 0..5 {
            let p = run(&g, seed);
            assert_eq!(p.sizes(), vec![10, 10], "seed {seed}");
        }
    }

    #[test]
    fn modularity_of_known_split() {
        let mut e = clique_edges(0, 3);
        e.extend(clique_edges(3, 3));
        let g = UndirectedGraph::from_weighted_edges(6, e);
        let split = Partition::from_labels(&[0, 0, 0, 1, 1, 1]);
        // two disjoint triangles: each community holds half the edges
        assert!((split.modularity(&g, 1.0) - 0.5).abs() < 1e-12);
        let merged = Partition::from_labels(&[0; 6]);
        assert!(merged.modularity(&g, 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_nodes_stay_alone() {
        let mut e = clique_edges(0, 4);
        e.push((5, 6, 1.0));
        let g = UndirectedGraph::from_weighted_edges(8, e);
        let p = run(&g, 3);
        let sizes = p.sizes();
        assert_eq!(sizes[p.membership[4]], 1);
        assert_eq!(sizes[p.membership[7]], 1);
        assert_eq!(sizes[p.membership[5]], 2);
    }
}
