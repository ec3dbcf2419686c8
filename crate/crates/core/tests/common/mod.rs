#![allow(dead_code)]

use commute_core::{Graph, PointSet};
use proptest::prelude::*;

pub fn paw() -> Graph {
    Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]).unwrap()
}

/// Connected weighted graph: a random spanning tree plus extra edges, weights in (0, 2].
pub fn connected_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
            let extra = proptest::collection::vec((0..n, 0..n, 0.01f64..=2.0), 0..2 * n);
            let tree_w = proptest::collection::vec(0.01f64..=2.0, n - 1);
            (Just(n), parents, tree_w, extra)
        })
        .prop_map(|(n, parents, tree_w, extra)| {
            let mut seen = std::collections::HashSet::new();
            let mut edges = Vec::new();
            for (i, (&p, &w)) in parents.iter().zip(&tree_w).enumerate() {
                seen.insert((p, i + 1));
                edges.push((p, i + 1, w));
            }
            for (u, v, w) in extra {
                let key = (u.min(v), u.max(v));
                if u != v && seen.insert(key) {
                    edges.push((key.0, key.1, w));
                }
            }
            Graph::from_edges(n, edges).unwrap()
        })
}

/// Attachment edges for a new node on an `n`-node graph: distinct endpoints, weights in (0, 2].
pub fn attachment(n: usize, max_rank: usize) -> impl Strategy<Value = Vec<(usize, f64)>> {
    proptest::collection::btree_map(0..n, 0.01f64..=2.0, 1..=max_rank.min(n))
        .prop_map(|m| m.into_iter().collect())
}

pub fn graph_with_attachment(max_n: usize, max_rank: usize) -> impl Strategy<Value = (Graph, Vec<(usize, f64)>)> {
    connected_graph(max_n).prop_flat_map(move |g| {
        let n = g.node_count();
        (Just(g), attachment(n, max_rank))
    })
}

/// Points in general position (continuous coordinates make exact ties unlikely).
pub fn point_set(max_n: usize, dim: usize) -> impl Strategy<Value = PointSet> {
    proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, dim), 8..=max_n)
        .prop_map(|rows| PointSet::from_rows(&rows).unwrap())
}
