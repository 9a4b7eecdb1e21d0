#![allow(dead_code)]

use evograph::graph::Edge;
use evograph::{DenseMatrix, NodeId, NodeRegistry, SnapshotGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_m(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn registry(n: usize) -> NodeRegistry {
    let mut r = NodeRegistry::new();
    for raw in 0..n as u64 {
        r.intern(raw);
    }
    r
}

/// Random snapshot over `n` of the ids `0..n_global`; may contain isolated nodes.
pub fn random_snapshot(rng: &mut ChaCha8Rng, index: usize, n_global: usize, n: usize, p: f64) -> SnapshotGraph {
    let mut ids: Vec<usize> = (0..n_global).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    ids.truncate(n);
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push(Edge::new(NodeId(ids[i]), NodeId(ids[j]), rng.random_range(0.05..0.95)));
            }
        }
    }
    SnapshotGraph::new(index, ids.into_iter().map(NodeId).collect(), edges, None).unwrap()
}

pub fn random_window(rng: &mut ChaCha8Rng, n_global: usize, len: usize, min_nodes: usize) -> Vec<SnapshotGraph> {
    (0..len)
        .map(|k| {
            let m = rng.random_range(min_nodes.min(n_global)..=n_global);
            random_snapshot(rng, k, n_global, m, 0.35)
        })
        .collect()
}

/// Relabels every node of `g` through `perm`.
pub fn relabel(g: &SnapshotGraph, perm: &[usize]) -> SnapshotGraph {
    let nodes = g.nodes().iter().map(|v| NodeId(perm[v.0])).collect();
    let edges = g.edges().iter().map(|e| Edge::new(NodeId(perm[e.u.0]), NodeId(perm[e.v.0]), e.weight)).collect();
    SnapshotGraph::new(g.index(), nodes, edges, None).unwrap()
}
