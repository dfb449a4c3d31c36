use std::collections::BTreeSet;

use proptest::prelude::*;
use stabinf_core::graph::{leiden, pagerank, Flavor, LeidenConfig, Network, PageRankConfig, Partition, UndirectedGraph};
use stabinf_core::{MonthId, UserId};

fn month() -> MonthId {
    MonthId::new(2022, 3).unwrap()
}

fn digraph() -> impl Strategy<Value = (usize, BTreeSet<(usize, usize)>)> {
    (2usize..25).prop_flat_map(|n| (Just(n), prop::collection::btree_set((0..n, 0..n), 0..80)))
}

fn network(n: usize, edges: &BTreeSet<(usize, usize)>, name: impl Fn(usize) -> String) -> Network {
    Network::from_edges(
        Flavor::Follow,
        month(),
        (0..n).map(|i| UserId::new(name(i))),
        edges.iter().map(|&(a, b)| (UserId::new(name(a)), UserId::new(name(b)))),
    )
}

fn undirected() -> impl Strategy<Value = UndirectedGraph> {
    (2usize..60).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, 1u8..4), 0..200).prop_map(move |edges| {
            UndirectedGraph::from_weighted_edges(n, edges.into_iter().filter(|(a, b, _)| a != b).map(|(a, b, w)| (a, b, w as f64)))
        })
    })
}

fn connected_within(g: &UndirectedGraph, members: &[usize]) -> bool {
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    let mut seen = BTreeSet::from([members[0]]);
    let mut stack = vec![members[0]];
    while let Some(v) = stack.pop() {
        for &(u, _) in g.neighbors(v) {
            if inside.contains(&u) && seen.insert(u) {
                stack.push(u);
            }
        }
    }
    seen.len() == inside.len()
}

fn well_formed(p: &Partition, n: usize) -> bool {
    p.membership.len() == n && p.sizes().iter().all(|&s| s > 0)
}

proptest! {
    #[test]
    fn pagerank_sums_to_one_and_ignores_node_order((n, edges) in digraph(), perm_seed in any::<u64>()) {
        let cfg = PageRankConfig::default();
        // a relabeling that reverses-and-rotates the sorted node order
        let shift = (perm_seed % n as u64) as usize;
        let renamed = |i: usize| format!("z{:03}", (n - 1 - i + shift) % n);
        let a = pagerank(&network(n, &edges, |i| format!("a{i:03}")), &cfg).unwrap().metric;
        let b = pagerank(&network(n, &edges, renamed), &cfg).unwrap().metric;
        let total: f64 = a.values.values().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        for i in 0..n {
            let (x, y) = (a.get(&format!("a{i:03}")), b.get(&renamed(i)));
            prop_assert!((x - y).abs() <= 1e-9, "node {}: {} vs {}", i, x, y);
        }
    }

    #[test]
    fn leiden_is_deterministic_and_well_formed(g in undirected(), seed in any::<u64>()) {
        let cfg = LeidenConfig { seed, ..LeidenConfig::default() };
        let (p, trace) = leiden(&g, &cfg);
        let (q, _) = leiden(&g, &cfg);
        prop_assert_eq!(&p, &q);
        prop_assert!(well_formed(&p, g.node_count()));
        for level in &trace.levels {
            prop_assert!(well_formed(&level.moved, g.node_count()));
            prop_assert!(well_formed(&level.refined, g.node_count()));
            for members in level.refined.communities() {
                prop_assert!(connected_within(&g, &members));
            }
        }
        // the final partition never scores below the all-singletons start
        let singletons = Partition::from_labels(&(0..g.node_count()).collect::<Vec<_>>());
        prop_assert!(p.modularity(&g, 1.0) >= singletons.modularity(&g, 1.0) - 1e-12);
    }

    #[test]
    fn projection_is_symmetric_and_unit_weight((n, edges) in digraph()) {
        let net = network(n, &edges, |i| format!("a{i:03}"));
        let g = UndirectedGraph::projection(&net);
        let pairs: BTreeSet<(usize, usize)> = edges.iter().filter(|(a, b)| a != b).map(|&(a, b)| (a.min(b), a.max(b))).collect();
        let mut seen = BTreeSet::new();
        for v in 0..n {
            for &(u, w) in g.neighbors(v) {
                prop_assert_eq!(w, 1.0);
                prop_assert!(g.neighbors(u).iter().any(|&(x, _)| x == v));
                seen.insert((v.min(u), v.max(u)));
            }
        }
        prop_assert_eq!(seen, pairs);
    }
}
