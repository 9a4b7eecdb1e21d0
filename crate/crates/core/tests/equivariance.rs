//! Relabeling nodes consistently across a window changes nothing but the
//! row order of the embeddings.

mod common;

use common::{rand_m, random_window, registry, relabel, rng};
use evograph::graph::normalize_adjacency;
use evograph::teacher::{objective_value, Objective, PreparedWindow};
use evograph::{EgadModel, ModelConfig, NodeId};
use proptest::prelude::*;
use rand::seq::SliceRandom;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loss_and_embeddings_follow_relabeling(seed in any::<u64>(), n in 2usize..14, l in 0usize..3, h in 1usize..3) {
        let mut r = rng(seed);
        let window = random_window(&mut r, n, l + 1, 1);
        let cfg = ModelConfig { window: l, heads: h, hidden_dim: 5, embed_dim: 3, ..ModelConfig::teacher() };
        let mut model = EgadModel::new(cfg, registry(n)).unwrap();
        for p in model.params_mut() {
            let (rows, cols) = p.shape();
            *p = rand_m(&mut r, rows, cols, 1.0);
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);

        let moved: Vec<_> = window.iter().map(|g| relabel(g, &perm)).collect();
        let mut twin = model.clone();
        for (i, &p) in perm.iter().enumerate() {
            twin.w1.row_mut(p).copy_from_slice(model.w1.row(i));
        }

        let (a, b) = (PreparedWindow::new(&window).unwrap(), PreparedWindow::new(&moved).unwrap());
        let la = objective_value(&model, &a, Objective::Reconstruction).unwrap();
        let lb = objective_value(&twin, &b, Objective::Reconstruction).unwrap();
        prop_assert!((la - lb).abs() < 1e-12, "{la} vs {lb}");

        let (za, zb) = (model.embed(&a).unwrap(), twin.embed(&b).unwrap());
        for (i, id) in za.nodes.iter().enumerate() {
            let there = zb.get(NodeId(perm[id.0])).unwrap();
            for (x, y) in za.z.row(i).iter().zip(there) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_exactly_symmetric(seed in any::<u64>(), n in 1usize..20, p in 0.0f64..1.0) {
        let mut r = rng(seed);
        let g = common::random_snapshot(&mut r, 0, n, n, p);
        let a = normalize_adjacency(&g).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
            }
        }
    }
}
