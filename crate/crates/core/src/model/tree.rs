//! Regression trees fitted to second-order gradient statistics.

use serde::{Deserialize, Serialize};

/// L2 penalty on leaf values.
pub const LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row(feature) < threshold { left } else { right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn features_used(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_leaf: usize,
}

/// Column-major training data with each column's row order presorted.
pub struct Columns<'a> {
    pub cols: &'a [Vec<f64>],
    pub sorted: Vec<Vec<u32>>,
}

impl<'a> Columns<'a> {
    pub fn new(cols: &'a [Vec<f64>]) -> Self {
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { cols, sorted }
    }

    pub fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }
}

struct Candidate {
    node: usize,
    depth: usize,
    /// Row range `lo..hi` owned by this node in every per-feature order.
    lo: usize,
    hi: usize,
    g: f64,
    h: f64,
    best: Option<SplitChoice>,
}

#[derive(Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn leaf_value(g: f64, h: f64) -> f64 {
    -g / (h + LAMBDA)
}

fn score(g: f64, h: f64) -> f64 {
    g * g / (h + LAMBDA)
}

fn best_split(data: &Columns, orders: &[Vec<u32>], c: &Candidate, grad: &[f64], hess: &[f64], min_leaf: usize) -> Option<SplitChoice> {
    let n = c.hi - c.lo;
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let parent = score(c.g, c.h);
    // children score as a fraction num/den, compared without dividing
    let (mut best_num, mut best_den) = (parent, 1.0);
    let mut best: Option<(usize, f64)> = None;
    let min_leaf = min_leaf.max(1);
    for (f, order) in orders.iter().enumerate() {
        let order = &order[c.lo..c.hi];
        let col = &data.cols[f];
        let (mut gl, mut hl) = (0.0, 0.0);
        // the first candidate boundary sits after `min_leaf` rows
        for &r in &order[..min_leaf - 1] {
            gl += grad[r as usize];
            hl += hess[r as usize];
        }
        for w in order[min_leaf - 1..=n - min_leaf].windows(2) {
            let r = w[0] as usize;
            gl += grad[r];
            hl += hess[r];
            let (v, next) = (col[r], col[w[1] as usize]);
            if v >= next {
                continue;
            }
            let (gr, hl1, hr1) = (c.g - gl, hl + LAMBDA, c.h - hl + LAMBDA);
            let num = gl * gl * hr1 + gr * gr * hl1;
            let den = hl1 * hr1;
            if num * best_den > best_num * den {
                best_num = num;
                best_den = den;
                let mut threshold = v + (next - v) / 2.0;
                if threshold <= v {
                    threshold = next;
                }
                best = Some((f, threshold));
            }
        }
    }
    best.map(|(feature, threshold)| SplitChoice {
        feature,
        threshold,
        gain: best_num / best_den - parent,
    })
}

/// Grows one tree leaf-wise: the leaf with the largest gain is split next
/// until `max_leaves` is reached or no split helps. Ties go to the lowest
/// feature index, then the lowest threshold, then the earliest leaf.
pub fn fit_tree(data: &Columns, grad: &[f64], hess: &[f64], params: &TreeParams) -> Tree {
    let g: f64 = grad.iter().sum();
    let h: f64 = hess.iter().sum();
    let n = data.n_rows();
    let mut nodes = vec![Node::Leaf {
        value: leaf_value(g, h),
    }];
    let mut orders = data.sorted.clone();
    let mut scratch: Vec<u32> = Vec::with_capacity(n);
    let mut root = Candidate {
        node: 0,
        depth: 0,
        lo: 0,
        hi: n,
        g,
        h,
        best: None,
    };
    root.best = grow_choice(data, &orders, &root, grad, hess, params);
    let mut open = vec![root];
    let mut leaves = 1;
    let mut goes_left = vec![false; n];

    while leaves < params.max_leaves.max(1) {
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.best.map(|b| (i, b.gain)))
            .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                Some((_, g)) if g >= gain => acc,
                _ => Some((i, gain)),
            });
        let Some((pick, _)) = pick else { break };
        let cand = open.remove(pick);
        let split = cand.best.expect("picked candidate has a split");
        let col = &data.cols[split.feature];
        let (mut gl, mut hl) = (0.0, 0.0);
        let mut n_left = 0;
        for &r in &orders[0][cand.lo..cand.hi] {
            let left = col[r as usize] < split.threshold;
            goes_left[r as usize] = left;
            if left {
                gl += grad[r as usize];
                hl += hess[r as usize];
                n_left += 1;
            }
        }
        // stable in-place partition of every feature order
        for order in orders.iter_mut() {
            let range = &mut order[cand.lo..cand.hi];
            scratch.clear();
            let mut w = 0;
            for i in 0..range.len() {
                let r = range[i];
                if goes_left[r as usize] {
                    range[w] = r;
                    w += 1;
                } else {
                    scratch.push(r);
                }
            }
            range[w..].copy_from_slice(&scratch);
        }
        let (gr, hr) = (cand.g - gl, cand.h - hl);
        let mid = cand.lo + n_left;

        let left = nodes.len();
        nodes.push(Node::Leaf {
            value: leaf_value(gl, hl),
        });
        nodes.push(Node::Leaf {
            value: leaf_value(gr, hr),
        });
        nodes[cand.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
        };
        leaves += 1;
        for (node, lo, hi, g, h) in [(left, cand.lo, mid, gl, hl), (left + 1, mid, cand.hi, gr, hr)] {
            let mut c = Candidate {
                node,
                depth: cand.depth + 1,
                lo,
                hi,
                g,
                h,
                best: None,
            };
            c.best = grow_choice(data, &orders, &c, grad, hess, params);
            // node ids grow monotonically, so pushing keeps creation order
            open.push(c);
        }
    }
    Tree { nodes }
}

fn grow_choice(data: &Columns, orders: &[Vec<u32>], c: &Candidate, grad: &[f64], hess: &[f64], params: &TreeParams) -> Option<SplitChoice> {
    if c.depth >= params.max_depth {
        return None;
    }
    best_split(data, orders, c, grad, hess, params.min_leaf)
}
