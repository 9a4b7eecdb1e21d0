//! Synthetic live-streaming events.
//!
//! Viewers belong to offices; peers in the same office see high throughput
//! and peers in different offices see low throughput. Connections persist
//! between snapshots while new partners are added and some are rewired, so
//! the next snapshot is predictable but not trivially so.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RawEvent, SnapshotGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    /// Most viewers present from the first snapshot.
    FrontLoaded,
    /// A surge of arrivals in snapshots 1 and 2.
    Burst,
    /// Arrivals spread evenly over the event.
    Gradual,
}

impl fmt::Display for Arrival {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arrival::FrontLoaded => "front_loaded",
            Arrival::Burst => "burst",
            Arrival::Gradual => "gradual",
        })
    }
}

impl FromStr for Arrival {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "front_loaded" => Ok(Arrival::FrontLoaded),
            "burst" => Ok(Arrival::Burst),
            "gradual" => Ok(Arrival::Gradual),
            other => Err(Error::Config(format!("unknown arrival pattern {other:?}"))),
        }
    }
}

/// Mean and spread of a truncated-normal raw throughput distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub mean: f64,
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub name: String,
    pub offices: usize,
    pub viewers_total: usize,
    pub snapshots: usize,
    pub arrival: Arrival,
    pub intra_bw: Bandwidth,
    pub inter_bw: Bandwidth,
    /// Maximum connections a viewer holds at once.
    pub degree_cap: usize,
    /// Per-snapshot probability that a viewer trades its weakest edge for a
    /// stronger candidate.
    pub rewire_prob: f64,
    /// Probability that a new partner is picked from the viewer's own office.
    pub same_office_pref: f64,
    /// New-partner attempts per viewer per snapshot.
    pub growth_per_snapshot: usize,
    /// Per-snapshot probability that a present viewer leaves for good.
    pub departure_prob: f64,
    /// Share of viewers present at snapshot 0 under [`Arrival::FrontLoaded`].
    pub front_loaded_share: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            offices: 4,
            viewers_total: 80,
            snapshots: 8,
            arrival: Arrival::FrontLoaded,
            intra_bw: Bandwidth { mean: 100.0, spread: 8.0 },
            inter_bw: Bandwidth { mean: 20.0, spread: 4.0 },
            degree_cap: 12,
            rewire_prob: 0.3,
            same_office_pref: 0.8,
            growth_per_snapshot: 2,
            departure_prob: 0.0,
            front_loaded_share: 0.7,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.offices == 0 {
            return fail("offices must be >= 1");
        }
        if self.viewers_total < self.offices {
            return fail("viewers_total must be >= offices");
        }
        if self.snapshots < 2 {
            return fail("need at least 2 snapshots");
        }
        if self.degree_cap == 0 {
            return fail("degree_cap must be >= 1");
        }
        if !(self.inter_bw.mean > 0.0 && self.intra_bw.mean > self.inter_bw.mean) {
            return fail("need intra mean > inter mean > 0");
        }
        if self.intra_bw.spread < 0.0 || self.inter_bw.spread < 0.0 {
            return fail("spreads must be non-negative");
        }
        for (p, what) in [
            (self.rewire_prob, "rewire_prob"),
            (self.same_office_pref, "same_office_pref"),
            (self.departure_prob, "departure_prob"),
            (self.front_loaded_share, "front_loaded_share"),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{what} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn office_of(&self, viewer: usize) -> usize {
        viewer % self.offices
    }
}

/// Snapshot at which each viewer first appears, in viewer order.
pub fn arrival_schedule(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let v = cfg.viewers_total;
    let k = cfg.snapshots;
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(rng);

    // slot[i] = arrival of the i-th viewer in `order`
    let spread = |count: usize, first: usize, last: usize| -> Vec<usize> {
        let span = last - first + 1;
        (0..count).map(|i| first + i * span / count.max(1)).collect()
    };
    let slots: Vec<usize> = match cfg.arrival {
        Arrival::FrontLoaded => {
            let at_start = ((cfg.front_loaded_share * v as f64).ceil() as usize).min(v);
            let mut s = vec![0; at_start];
            s.extend(spread(v - at_start, 1, k - 1));
            s
        }
        Arrival::Burst => {
            let at_start = (v as f64 * 0.15).floor() as usize;
            let burst_end = 2.min(k - 1);
            let surge = if k > 3 { (v as f64 * 0.5).ceil() as usize } else { v - at_start };
            let surge = surge.min(v - at_start);
            let mut s = vec![0; at_start];
            s.extend(spread(surge, 1, burst_end));
            let rest = v - at_start - surge;
            if rest > 0 {
                s.extend(spread(rest, 3.min(k - 1), k - 1));
            }
            s
        }
        Arrival::Gradual => (0..v).map(|i| i * k / v).collect(),
    };
    let mut arrival = vec![0; v];
    for (viewer, slot) in order.into_iter().zip(slots) {
        arrival[viewer] = slot;
    }
    arrival
}

fn draw(rng: &mut ChaCha8Rng, bw: Bandwidth) -> f64 {
    if bw.spread == 0.0 {
        return bw.mean;
    }
    let normal = Normal::new(bw.mean, bw.spread).expect("validated spread");
    for _ in 0..64 {
        let x = normal.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
    bw.mean.min(bw.spread) * 1e-3
}

struct State<'a> {
    cfg: &'a SimConfig,
    /// Adjacency with raw weights, keyed by viewer.
    adj: Vec<BTreeMap<usize, f64>>,
    present: BTreeSet<usize>,
}

impl State<'_> {
    fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    fn connect(&mut self, a: usize, b: usize, w: f64) {
        self.adj[a].insert(b, w);
        self.adj[b].insert(a, w);
    }

    fn disconnect(&mut self, a: usize, b: usize) {
        self.adj[a].remove(&b);
        self.adj[b].remove(&a);
    }

    /// Eligible new partners of `v` in its own office and elsewhere.
    fn candidates(&self, v: usize) -> (Vec<usize>, Vec<usize>) {
        let office = self.cfg.office_of(v);
        let mut same = vec![];
        let mut other = vec![];
        for &c in &self.present {
            if c == v || self.adj[v].contains_key(&c) || self.degree(c) >= self.cfg.degree_cap {
                continue;
            }
            if self.cfg.office_of(c) == office {
                same.push(c);
            } else {
                other.push(c);
            }
        }
        (same, other)
    }

    fn pick_partner(&self, v: usize, rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let (same, other) = self.candidates(v);
        let want_same = rng.random_bool(self.cfg.same_office_pref);
        let pool = match (want_same, same.is_empty(), other.is_empty()) {
            (_, true, true) => return None,
            (true, false, _) | (false, false, true) => &same,
            _ => &other,
        };
        let c = pool[rng.random_range(0..pool.len())];
        let bw = if self.cfg.office_of(c) == self.cfg.office_of(v) {
            self.cfg.intra_bw
        } else {
            self.cfg.inter_bw
        };
        Some((c, draw(rng, bw)))
    }

    fn snapshot_edges(&self) -> Vec<(u64, u64, f64)> {
        let mut out = vec![];
        for (a, nbrs) in self.adj.iter().enumerate() {
            for (&b, &w) in nbrs.range(a + 1..) {
                out.push((a as u64, b as u64, w));
            }
        }
        out
    }
}

/// Generates an event with raw throughputs; normalize before training.
pub fn simulate_event(cfg: &SimConfig) -> Result<RawEvent> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrival = arrival_schedule(cfg, &mut rng);
    let mut st = State { cfg, adj: vec![BTreeMap::new(); cfg.viewers_total], present: BTreeSet::new() };
    let mut departed = vec![false; cfg.viewers_total];
    let mut lists = Vec::with_capacity(cfg.snapshots);

    for k in 0..cfg.snapshots {
        if k > 0 && cfg.departure_prob > 0.0 {
            let leaving: Vec<usize> =
                st.present.iter().copied().filter(|_| rng.random_bool(cfg.departure_prob)).collect();
            for v in leaving {
                let nbrs: Vec<usize> = st.adj[v].keys().copied().collect();
                for b in nbrs {
                    st.disconnect(v, b);
                }
                st.present.remove(&v);
                departed[v] = true;
            }
        }
        for v in 0..cfg.viewers_total {
            if arrival[v] == k && !departed[v] {
                st.present.insert(v);
            }
        }

        // rewiring among viewers that already hold connections
        if k > 0 && cfg.rewire_prob > 0.0 {
            let viewers: Vec<usize> = st.present.iter().copied().collect();
            for v in viewers {
                if st.adj[v].is_empty() || !rng.random_bool(cfg.rewire_prob) {
                    continue;
                }
                let (&weakest, &w_old) = st.adj[v]
                    .iter()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .expect("non-empty adjacency");
                st.disconnect(v, weakest);
                match st.pick_partner(v, &mut rng) {
                    Some((c, w)) if w > w_old && c != weakest => st.connect(v, c, w),
                    _ => st.connect(v, weakest, w_old),
                }
            }
        }

        // growth: viewers with spare capacity look for new partners
        let mut order: Vec<usize> = st.present.iter().copied().collect();
        order.shuffle(&mut rng);
        for v in order {
            for _ in 0..cfg.growth_per_snapshot {
                if st.degree(v) >= cfg.degree_cap {
                    break;
                }
                if let Some((c, w)) = st.pick_partner(v, &mut rng) {
                    st.connect(v, c, w);
                }
            }
        }

        lists.push(st.snapshot_edges());
    }

    RawEvent::from_edge_lists(cfg.name.clone(), lists)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub k: usize,
    pub nodes: usize,
    pub edges: usize,
}

/// `(k, n_k, |E_k|)` for every snapshot.
pub fn describe_event(snapshots: &[SnapshotGraph]) -> Vec<SnapshotSummary> {
    snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| SnapshotSummary { k, nodes: s.n(), edges: s.edges().len() })
        .collect()
}
