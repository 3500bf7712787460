mod common;

use std::collections::BTreeSet;

use attnflow_core::fixture::{self, Shape};
use attnflow_core::{
    build_attention_graph, compute_influence, display_influence, GraphConfig, Node, Rational,
};
use common::{graph_sets, oracle_graph, random_export, random_filter, shrink_filter};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn graph_matches_bfs_oracle(seed in any::<u64>(), tau in 0.05f32..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 4, 10);
        let filter = rng.gen_bool(0.3).then(|| random_filter(&mut rng, export.num_layers(), export.num_heads()));
        let mut cfg = GraphConfig::new(tau);
        if let Some(f) = &filter {
            cfg = cfg.with_head_filter(f.clone());
        }
        let g = build_attention_graph(&export, &cfg).unwrap();
        let root = (export.num_layers(), export.sequence().cls_index());
        prop_assert_eq!(graph_sets(&g), oracle_graph(&export, tau, filter.as_ref(), root));
    }

    #[test]
    fn tau_monotonicity(seed in any::<u64>(), a in 0.01f32..0.99, b in 0.01f32..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 4, 10);
        let loose = build_attention_graph(&export, &GraphConfig::new(lo)).unwrap();
        let tight = build_attention_graph(&export, &GraphConfig::new(hi)).unwrap();
        prop_assert!(tight.nodes().is_subset(loose.nodes()));
        for (e, heads) in tight.edges() {
            prop_assert!(loose.edges().get(e).is_some_and(|h| heads.is_subset(h)));
        }
    }

    #[test]
    fn head_filter_monotonicity(seed in any::<u64>(), tau in 0.05f32..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 4, 10);
        let (l, h) = (export.num_layers(), export.num_heads());
        let wide = random_filter(&mut rng, l, h);
        let narrow = shrink_filter(&mut rng, &wide, l, h);
        let gw = build_attention_graph(&export, &GraphConfig::new(tau).with_head_filter(wide)).unwrap();
        let gn = build_attention_graph(&export, &GraphConfig::new(tau).with_head_filter(narrow)).unwrap();
        prop_assert!(gn.nodes().is_subset(gw.nodes()));
        for (e, heads) in gn.edges() {
            prop_assert!(gw.edges().get(e).is_some_and(|hw| heads.is_subset(hw)));
        }
    }

    #[test]
    fn influence_positive_iff_node_with_incoming_edge(seed in any::<u64>(), tau in 0.05f32..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 4, 10);
        let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
        let table = compute_influence(&export, &g, 0.5f64).unwrap();
        for layer in 0..export.num_layers() {
            for w in 0..export.seq_len() {
                let node = Node::new(layer, w);
                let has_parent = g.parents(node).next().is_some();
                prop_assert_eq!(table.count(node).unwrap() > 0, g.contains(node) && has_parent);
                let incoming: usize = g.parents(node).map(|p| g.edges()[&attnflow_core::Edge::new(p.layer, p.position, w)].len()).sum();
                prop_assert_eq!(table.count(node).unwrap(), incoming as u64);
            }
        }
    }

    #[test]
    fn profile_heights_never_exceed_three(seed in any::<u64>(), tau in 0.01f32..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 6, 10);
        let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
        for &n in g.nodes() {
            if n.layer < g.root().layer {
                for (_, h) in g.incoming_profile(n).unwrap() {
                    prop_assert!((1..=3).contains(&h));
                }
            }
        }
    }

    #[test]
    fn display_is_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(display_influence(&lo) <= display_influence(&hi));
        prop_assert!(display_influence(&hi) <= 5);
    }

    #[test]
    fn float_and_exact_scores_agree(seed in any::<u64>(), tau in 0.05f32..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 4, 10);
        let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
        let float = compute_influence(&export, &g, 0.5f64).unwrap();
        let exact = compute_influence(&export, &g, Rational::new(1, 2)).unwrap();
        for layer in 0..export.num_layers() {
            for w in 0..export.seq_len() {
                let q = exact.score(layer, w).unwrap();
                let f = float.score(layer, w).unwrap();
                prop_assert!((f - *q.numer() as f64 / *q.denom() as f64).abs() < 1e-12);
                prop_assert_eq!(display_influence(&f), display_influence(&q));
            }
        }
    }
}

#[test]
fn uniform_closed_form() {
    for layers in [2, 3, 4] {
        for heads in [1, 4] {
            for n in [3, 5] {
                let shape = Shape { layers, heads, seq_len: n };
                let export = fixture::uniform::<f64>(&shape);
                let tau = 0.9 / n as f64;
                let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
                let table = compute_influence(&export, &g, Rational::new(1, 2)).unwrap();
                assert_eq!(table.counts(layers - 1).unwrap(), vec![heads as u64; n].as_slice());
                for l in 0..layers - 1 {
                    assert_eq!(table.counts(l).unwrap(), vec![(n * heads) as u64; n].as_slice());
                }
            }
        }
    }
}

#[test]
fn f64_graph_matches_f32_graph_on_exact_inputs() {
    let t1 = fixture::t1();
    let narrow = build_attention_graph(&t1, &GraphConfig::new(0.3f32)).unwrap();
    let wide = build_attention_graph(&t1.cast::<f64>(), &GraphConfig::new(0.3f64)).unwrap();
    assert_eq!(narrow.nodes(), wide.nodes());
    assert_eq!(narrow.edges(), wide.edges());
}

#[test]
fn deterministic_build() {
    let export = fixture::synthetic(&Shape { layers: 4, heads: 4, seq_len: 10 }, 99);
    let a = build_attention_graph(&export, &GraphConfig::new(0.1)).unwrap();
    let b = build_attention_graph(&export, &GraphConfig::new(0.1)).unwrap();
    assert_eq!(a, b);
    let order: Vec<_> = a.nodes().iter().copied().collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
    let _: BTreeSet<_> = order.into_iter().collect();
}
