//! Dynamic weighted graphs. A node registry keeps ids stable across an
//! event; windows and first-seen links are built from normalized snapshots.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Margin that keeps normalized weights strictly inside the sigmoid's range.
pub const WEIGHT_EPSILON: f64 = 0.05;

/// Dense node id, assigned in order of first appearance within an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Maps external (raw) viewer ids onto dense [`NodeId`]s. Ids are never
/// recycled, so a departed viewer keeps its slot.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<u64>", into = "Vec<u64>")]
pub struct NodeRegistry {
    raw_ids: Vec<u64>,
    lookup: HashMap<u64, NodeId>,
}

impl From<Vec<u64>> for NodeRegistry {
    fn from(raw_ids: Vec<u64>) -> Self {
        let lookup = raw_ids.iter().enumerate().map(|(i, &r)| (r, NodeId(i))).collect();
        Self { raw_ids, lookup }
    }
}

impl From<NodeRegistry> for Vec<u64> {
    fn from(r: NodeRegistry) -> Self {
        r.raw_ids
    }
}

impl NodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id for `raw`, registering it if unseen.
    pub fn intern(&mut self, raw: u64) -> NodeId {
        if let Some(&id) = self.lookup.get(&raw) {
            return id;
        }
        let id = NodeId(self.raw_ids.len());
        self.raw_ids.push(raw);
        self.lookup.insert(raw, id);
        id
    }

    pub fn get(&self, raw: u64) -> Option<NodeId> {
        self.lookup.get(&raw).copied()
    }

    pub fn raw(&self, id: NodeId) -> Option<u64> {
        self.raw_ids.get(id.0).copied()
    }

    pub fn len(&self) -> usize {
        self.raw_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_ids.is_empty()
    }

    pub fn raw_ids(&self) -> &[u64] {
        &self.raw_ids
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: f64,
}

impl Edge {
    /// Edge with endpoints put in canonical `u < v` order.
    pub fn new(a: NodeId, b: NodeId, weight: f64) -> Self {
        let (u, v) = if a <= b { (a, b) } else { (b, a) };
        Self { u, v, weight }
    }

    pub fn pair(&self) -> (NodeId, NodeId) {
        (self.u, self.v)
    }
}

/// One weighted undirected snapshot. Nodes are kept sorted by id and edges
/// sorted by `(u, v)`; each unordered pair is stored once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotGraph {
    index: usize,
    nodes: Vec<NodeId>,
    edges: Vec<Edge>,
    features: Option<DenseMatrix>,
}

impl SnapshotGraph {
    /// Validates and canonicalizes a snapshot. `nodes` may be given in any
    /// order; endpoints of `edges` not listed in `nodes` are an error.
    pub fn new(
        index: usize,
        mut nodes: Vec<NodeId>,
        edges: Vec<Edge>,
        features: Option<DenseMatrix>,
    ) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        let mut canon: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            let e = Edge::new(e.u, e.v, e.weight);
            if e.u == e.v {
                return Err(Error::MalformedGraph(format!("self-loop on node {}", e.u.0)));
            }
            if !e.weight.is_finite() || e.weight <= 0.0 {
                return Err(Error::MalformedGraph(format!(
                    "edge ({}, {}) has weight {}",
                    e.u.0, e.v.0, e.weight
                )));
            }
            for end in [e.u, e.v] {
                if nodes.binary_search(&end).is_err() {
                    return Err(Error::MalformedGraph(format!(
                        "edge endpoint {} missing from snapshot {index}",
                        end.0
                    )));
                }
            }
            canon.push(e);
        }
        canon.sort_by_key(Edge::pair);
        if let Some(w) = canon.windows(2).find(|w| w[0].pair() == w[1].pair()) {
            return Err(Error::MalformedGraph(format!(
                "duplicate edge ({}, {}) in snapshot {index}",
                w[0].u.0, w[0].v.0
            )));
        }
        if let Some(x) = &features {
            if x.rows() != nodes.len() || !x.is_finite() {
                return Err(Error::MalformedGraph(format!(
                    "feature matrix {:?} does not fit {} nodes",
                    x.shape(),
                    nodes.len()
                )));
            }
        }
        Ok(Self { index, nodes, edges: canon, features })
    }

    /// Snapshot whose node set is exactly the edge endpoints.
    pub fn from_edges(index: usize, edges: Vec<Edge>) -> Result<Self> {
        let nodes = edges.iter().flat_map(|e| [e.u, e.v]).collect();
        Self::new(index, nodes, edges, None)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node_indices(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.0).collect()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self) -> Option<&DenseMatrix> {
        self.features.as_ref()
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Position of `id` in this snapshot's node list.
    pub fn local_index(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.local_index(id).is_some()
    }

    pub fn weight(&self, a: NodeId, b: NodeId) -> Option<f64> {
        let e = Edge::new(a, b, 0.0);
        self.edges.binary_search_by_key(&e.pair(), Edge::pair).ok().map(|i| self.edges[i].weight)
    }

    pub(crate) fn with_weights(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.weight = f(e.weight);
        }
        g
    }

    /// Symmetric `n_k x n_k` weighted adjacency with a zero diagonal, in
    /// local node order.
    pub fn dense_adjacency(&self) -> DenseMatrix {
        let n = self.n();
        let mut a = DenseMatrix::zeros(n, n);
        for e in &self.edges {
            let (i, j) = (self.local(e.u), self.local(e.v));
            a.set(i, j, e.weight);
            a.set(j, i, e.weight);
        }
        a
    }

    #[inline]
    fn local(&self, id: NodeId) -> usize {
        self.nodes.binary_search(&id).expect("edge endpoint validated at construction")
    }

    pub(crate) fn validate_normalized(&self, eps: f64) -> Result<()> {
        for e in &self.edges {
            if e.weight < eps - 1e-12 || e.weight > 1.0 - eps + 1e-12 {
                return Err(Error::MalformedGraph(format!(
                    "normalized weight {} of ({}, {}) outside [{eps}, {}]",
                    e.weight,
                    e.u.0,
                    e.v.0,
                    1.0 - eps
                )));
            }
        }
        Ok(())
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the row sums of `A + I`.
pub fn normalize_adjacency(g: &SnapshotGraph) -> Result<DenseMatrix> {
    if g.n() == 0 {
        return Err(Error::MalformedGraph(format!("snapshot {} has no nodes", g.index())));
    }
    if let Some(e) = g.edges().iter().find(|e| !e.weight.is_finite()) {
        return Err(Error::MalformedGraph(format!("non-finite weight on ({}, {})", e.u.0, e.v.0)));
    }
    let mut a = g.dense_adjacency();
    let n = g.n();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
    for i in 0..n {
        let di = degree[i];
        for (j, v) in a.row_mut(i).iter_mut().enumerate() {
            *v /= (di * degree[j]).sqrt();
        }
    }
    Ok(a)
}

/// Affine map from raw throughput onto `[eps, 1 - eps]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScale {
    pub raw_min: f64,
    pub raw_max: f64,
    pub epsilon: f64,
}

impl WeightScale {
    pub fn apply(&self, raw: f64) -> f64 {
        if self.raw_max == self.raw_min {
            return 0.5;
        }
        let t = (raw - self.raw_min) / (self.raw_max - self.raw_min);
        (self.epsilon + (1.0 - 2.0 * self.epsilon) * t).clamp(self.epsilon, 1.0 - self.epsilon)
    }

    pub fn invert(&self, w: f64) -> f64 {
        if self.raw_max == self.raw_min {
            return self.raw_min;
        }
        self.raw_min + (w - self.epsilon) / (1.0 - 2.0 * self.epsilon) * (self.raw_max - self.raw_min)
    }
}

/// An event before weight normalization: raw positive throughputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEvent {
    pub name: String,
    pub snapshots: Vec<SnapshotGraph>,
    pub registry: NodeRegistry,
}

impl RawEvent {
    /// Builds snapshots from raw `(u, v, weight)` lists. Ids are registered
    /// in order of first appearance, scanning snapshots in order and each
    /// snapshot's pairs sorted by `(min raw id, max raw id)`, so the registry
    /// depends only on the edge sets and not on line order. A snapshot's
    /// nodes are its edge endpoints.
    pub fn from_edge_lists(name: impl Into<String>, lists: Vec<Vec<(u64, u64, f64)>>) -> Result<Self> {
        let mut registry = NodeRegistry::new();
        let mut snapshots = Vec::with_capacity(lists.len());
        for (k, list) in canonical_order(lists).into_iter().enumerate() {
            let edges = list
                .into_iter()
                .map(|(a, b, w)| Edge::new(registry.intern(a), registry.intern(b), w))
                .collect();
            snapshots.push(SnapshotGraph::from_edges(k, edges)?);
        }
        Ok(Self { name: name.into(), snapshots, registry })
    }
}

/// Sorts each snapshot's raw edges by `(min id, max id)`.
pub fn canonical_order(mut lists: Vec<Vec<(u64, u64, f64)>>) -> Vec<Vec<(u64, u64, f64)>> {
    for l in &mut lists {
        for e in l.iter_mut() {
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        l.sort_by_key(|e| (e.0, e.1));
    }
    lists
}

/// Ordered snapshots of one event with normalized weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    name: String,
    snapshots: Vec<SnapshotGraph>,
    registry: NodeRegistry,
    weight_scale: WeightScale,
    /// Raw throughputs, aligned with each snapshot's edge list.
    raw_weights: Vec<Vec<f64>>,
}

impl EventSequence {
    /// Assembles an already-normalized event, checking every invariant.
    pub fn new(
        name: impl Into<String>,
        snapshots: Vec<SnapshotGraph>,
        registry: NodeRegistry,
        weight_scale: WeightScale,
    ) -> Result<Self> {
        for (k, s) in snapshots.iter().enumerate() {
            if s.index() != k {
                return Err(Error::MalformedGraph(format!(
                    "snapshot at position {k} carries index {}",
                    s.index()
                )));
            }
            if let Some(last) = s.nodes().last() {
                if last.0 >= registry.len() {
                    return Err(Error::MalformedGraph(format!(
                        "node {} not in registry of size {}",
                        last.0,
                        registry.len()
                    )));
                }
            }
            s.validate_normalized(weight_scale.epsilon)?;
        }
        let raw_weights = snapshots
            .iter()
            .map(|s| s.edges().iter().map(|e| weight_scale.invert(e.weight)).collect())
            .collect();
        Ok(Self { name: name.into(), snapshots, registry, weight_scale, raw_weights })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn snapshots(&self) -> &[SnapshotGraph] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> Result<&SnapshotGraph> {
        self.snapshots.get(k).ok_or(Error::OutOfRange { k, len: self.snapshots.len() })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn registry(&self) -> &NodeRegistry {
        &self.registry
    }

    pub fn n_global(&self) -> usize {
        self.registry.len()
    }

    pub fn weight_scale(&self) -> WeightScale {
        self.weight_scale
    }

    /// Raw throughputs of snapshot `k`, aligned with its edges.
    pub fn raw_weights(&self, k: usize) -> Result<&[f64]> {
        self.raw_weights.get(k).map(Vec::as_slice).ok_or(Error::OutOfRange { k, len: self.len() })
    }

    /// Snapshots `k - l ..= k`, borrowed from the event.
    pub fn window(&self, k: usize, l: usize) -> Result<&[SnapshotGraph]> {
        build_window(self, k, l)
    }
}

/// Min-max maps every raw weight of the event onto `[eps, 1 - eps]`.
pub fn normalize_weights(raw: RawEvent) -> Result<EventSequence> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in raw.snapshots.iter().flat_map(|s| s.edges()) {
        lo = lo.min(e.weight);
        hi = hi.max(e.weight);
    }
    if lo == f64::INFINITY {
        return Err(Error::EmptyEvent);
    }
    let scale = WeightScale { raw_min: lo, raw_max: hi, epsilon: WEIGHT_EPSILON };
    let snapshots = raw.snapshots.iter().map(|s| s.with_weights(|w| scale.apply(w))).collect();
    let raw_weights = raw.snapshots.iter().map(|s| s.edges().iter().map(|e| e.weight).collect()).collect();
    let mut ev = EventSequence::new(raw.name, snapshots, raw.registry, scale)?;
    ev.raw_weights = raw_weights;
    Ok(ev)
}

pub fn build_window(event: &EventSequence, k: usize, l: usize) -> Result<&[SnapshotGraph]> {
    if k >= event.len() {
        return Err(Error::OutOfRange { k, len: event.len() });
    }
    if l > k {
        return Err(Error::WindowUnderflow { k, l });
    }
    Ok(&event.snapshots[k - l..=k])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: f64,
}

/// Unique undirected links with their true weights, sorted by `(u, v)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkSet {
    links: Vec<Link>,
}

impl LinkSet {
    pub fn from_links(mut links: Vec<Link>) -> Result<Self> {
        for l in &mut links {
            if l.u > l.v {
                std::mem::swap(&mut l.u, &mut l.v);
            }
            if l.u == l.v {
                return Err(Error::MalformedGraph(format!("self-link on {}", l.u.0)));
            }
        }
        links.sort_by_key(|l| (l.u, l.v));
        if links.windows(2).any(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(Error::MalformedGraph("duplicate link".into()));
        }
        Ok(Self { links })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Link> {
        self.links.iter()
    }
}

/// Pairs of `E_{k+1}` that never occur in any snapshot of the window
/// `k - l ..= k`, with their snapshot-`k+1` weights.
pub fn unobserved_links(event: &EventSequence, k: usize, l: usize) -> Result<LinkSet> {
    let window = build_window(event, k, l)?;
    let next = event.snapshot(k + 1)?;
    let seen: HashSet<(NodeId, NodeId)> =
        window.iter().flat_map(|s| s.edges().iter().map(Edge::pair)).collect();
    let links = next
        .edges()
        .iter()
        .filter(|e| !seen.contains(&e.pair()))
        .map(|e| Link { u: e.u, v: e.v, weight: e.weight })
        .collect();
    // edges are already canonical and unique
    Ok(LinkSet { links })
}
