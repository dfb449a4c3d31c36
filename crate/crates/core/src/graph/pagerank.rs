use serde::{Deserialize, Serialize};

use super::{Network, NodeMetric};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    pub damping: f64,
    /// Stop once the L1 change between iterations falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PageRankResult {
    pub metric: NodeMetric,
    pub converged: bool,
    pub iterations: usize,
    /// L1 change of the final iteration.
    pub delta: f64,
}

/// Power iteration with uniform teleport. Mass sitting on nodes without
/// out-edges is spread uniformly over all nodes every iteration.
pub fn pagerank(net: &Network, config: &PageRankConfig) -> Result<PageRankResult> {
    if !(config.damping > 0.0 && config.damping < 1.0) {
        return Err(Error::Config(format!("damping {} outside (0, 1)", config.damping)));
    }
    if !(config.tol > 0.0) {
        return Err(Error::Config(format!("tolerance {} must be positive", config.tol)));
    }
    let n = net.node_count();
    let params = format!(
        "damping={},tol={},max_iter={}",
        config.damping, config.tol, config.max_iter
    );
    let name = format!("pagerank_{}", net.flavor);
    if n == 0 {
        return Ok(PageRankResult {
            metric: NodeMetric {
                name,
                params,
                values: Default::default(),
            },
            converged: true,
            iterations: 0,
            delta: 0.0,
        });
    }

    let d = config.damping;
    let nf = n as f64;
    let out_deg: Vec<usize> = (0..n).map(|i| net.out_neighbors(i).len()).collect();
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut share = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut delta = f64::INFINITY;

    while iterations < config.max_iter {
        iterations += 1;
        let mut dangling = 0.0;
        for i in 0..n {
            if out_deg[i] == 0 {
                dangling += rank[i];
                share[i] = 0.0;
            } else {
                share[i] = rank[i] / out_deg[i] as f64;
            }
        }
        let base = (1.0 - d) / nf + d * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = net.in_neighbors(v).iter().map(|&u| share[u]).sum();
            *slot = base + d * inflow;
        }
        delta = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < config.tol {
            converged = true;
            break;
        }
    }

    Ok(PageRankResult {
        metric: NodeMetric {
            name,
            params,
            values: net.nodes().iter().cloned().zip(rank).collect(),
        },
        converged,
        iterations,
        delta,
    })
}
