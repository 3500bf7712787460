mod common;

use attnflow_core::{
    build_attention_graph, combined_traversal, merge_graphs, run_query, GraphConfig,
    InfluenceComparison, Node, Provenance, Query,
};
use common::random_export;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two random exports over the same tokens and shape.
fn pair(seed: u64) -> (attnflow_core::Export, attnflow_core::Export) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_export(&mut rng, 4, 4, 8);
    loop {
        let b = random_export(&mut rng, 4, 4, 8);
        if b.num_layers() == a.num_layers() && b.num_heads() == a.num_heads() && b.seq_len() == a.seq_len() {
            return (a, b.with_model_id("b"));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn merge_projection_and_symmetry(seed in any::<u64>(), tau in 0.05f32..0.6) {
        let (ea, eb) = pair(seed);
        let cfg = GraphConfig::new(tau);
        let ga = build_attention_graph(&ea, &cfg).unwrap();
        let gb = build_attention_graph(&eb, &cfg).unwrap();
        let ab = merge_graphs(&ga, &gb).unwrap();
        let ba = merge_graphs(&gb, &ga).unwrap();
        prop_assert_eq!(&ab.project(Provenance::A), &ga);
        prop_assert_eq!(&ab.project(Provenance::B), &gb);
        for (n, p) in ab.nodes() {
            prop_assert_eq!(ba.nodes()[n], p.swapped());
        }
        for (e, t) in ab.edges() {
            let other = &ba.edges()[e];
            prop_assert_eq!(other.provenance, t.provenance.swapped());
            for (h, p) in &t.heads {
                prop_assert_eq!(other.heads[h], p.swapped());
                let both = *p == Provenance::Both;
                let in_a = ga.edges().get(e).is_some_and(|hs| hs.contains(h));
                let in_b = gb.edges().get(e).is_some_and(|hs| hs.contains(h));
                prop_assert_eq!(both, in_a && in_b);
            }
        }
        let self_merge = merge_graphs(&ga, &ga).unwrap();
        prop_assert!(self_merge.nodes().values().all(|p| *p == Provenance::Both));
    }

    #[test]
    fn combined_traversal_projects_to_single_model(seed in any::<u64>(), tau in 0.05f32..0.5) {
        let (ea, eb) = pair(seed);
        let cfg = GraphConfig::new(tau);
        let ga = build_attention_graph(&ea, &cfg).unwrap();
        let gb = build_attention_graph(&eb, &cfg).unwrap();
        let merged = merge_graphs(&ga, &gb).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut all: Vec<Node> = merged.nodes().keys().copied().collect();
        all.shuffle(&mut rng);
        for &n in all.iter().take(4) {
            for q in [Query::Upstream { node: n }, Query::Downstream { node: n }, Query::Select { node: n }] {
                let r = combined_traversal(&merged, &q).unwrap();
                for (model, g) in [(Provenance::A, &ga), (Provenance::B, &gb)] {
                    let single = if g.contains(n) { run_query(g, &q).unwrap() } else { Default::default() };
                    prop_assert_eq!(r.project(model), single);
                }
            }
        }
    }

    #[test]
    fn circle_comparison_invariants(da in 0u8..=5, db in 0u8..=5) {
        let c = InfluenceComparison::from_displays(da, db);
        prop_assert!(c.shared_circles + c.extra_circles <= 5);
        prop_assert_eq!(c.shared_circles, da.min(db));
        prop_assert_eq!(c.shared_circles + c.extra_circles, da.max(db));
        let k = 5 - da.max(db);
        for add in 0..=k {
            prop_assert_eq!(InfluenceComparison::from_displays(da + add, db + add).extra_owner, c.extra_owner);
        }
    }
}
