mod common;

use attnflow_core::{
    brush_intersection, build_attention_graph, cross_layer_paths, downstream_closure,
    restricted_closure, upstream_closure, FlowError, GraphConfig, Node,
};
use common::{brush_oracle, dfs_path_union, graph_sets, paths_oracle, random_export, result_sets};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pick<R: Rng>(rng: &mut R, nodes: &[Node], k: usize) -> Vec<Node> {
    let mut v = nodes.to_vec();
    v.shuffle(rng);
    v.truncate(k);
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn paths_equal_dfs_union(seed in any::<u64>(), tau in 0.02f32..0.4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 3, 8);
        let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
        let (_, edges) = graph_sets(&g);
        let nodes: Vec<Node> = g.nodes().iter().copied().collect();
        for &s in &nodes {
            for &t in nodes.iter().filter(|t| t.layer < s.layer) {
                let got = cross_layer_paths(&g, &[s], &[t]);
                match dfs_path_union(&edges, (s.layer, s.position), (t.layer, t.position)) {
                    Some(expected) => {
                        let got = got.unwrap();
                        prop_assert_eq!(result_sets(&got.nodes, &got.edges), expected);
                    }
                    None => prop_assert!(matches!(got, Err(FlowError::NoPath))),
                }
            }
        }
    }

    #[test]
    fn multi_anchor_paths_match_oracle(seed in any::<u64>(), tau in 0.02f32..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 3, 8);
        let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
        let (_, edges) = graph_sets(&g);
        let layers: Vec<usize> = (0..=g.root().layer).filter(|&l| g.layer_nodes(l).next().is_some()).collect();
        if layers.len() >= 2 {
            let hi = layers[rng.gen_range(1..layers.len())];
            let lo = layers[rng.gen_range(0..layers.iter().position(|&l| l == hi).unwrap())];
            let his: Vec<Node> = g.layer_nodes(hi).collect();
            let los: Vec<Node> = g.layer_nodes(lo).collect();
            let (ks, kt) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
            let sources = pick(&mut rng, &his, ks);
            let targets = pick(&mut rng, &los, kt);
            let got = cross_layer_paths(&g, &sources, &targets);
            let as_pairs = |v: &[Node]| v.iter().map(|n| (n.layer, n.position)).collect::<Vec<_>>();
            match paths_oracle(&edges, &as_pairs(&sources), &as_pairs(&targets)) {
                Some(expected) => {
                    let got = got.unwrap();
                    prop_assert_eq!(result_sets(&got.nodes, &got.edges), expected);
                }
                None => prop_assert!(matches!(got, Err(FlowError::NoPath))),
            }
        }
    }

    #[test]
    fn brush_matches_set_definition(seed in any::<u64>(), tau in 0.02f32..0.4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 3, 8);
        let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
        let (_, edges) = graph_sets(&g);
        for layer in 0..=g.root().layer {
            let at: Vec<Node> = g.layer_nodes(layer).collect();
            if at.is_empty() {
                continue;
            }
            let k = rng.gen_range(1..=at.len().min(3));
            let anchors = pick(&mut rng, &at, k);
            let got = brush_intersection(&g, &anchors).unwrap();
            let pairs: Vec<_> = anchors.iter().map(|n| (n.layer, n.position)).collect();
            prop_assert_eq!(result_sets(&got.nodes, &got.edges), brush_oracle(&edges, &pairs));
            if anchors.len() == 1 {
                prop_assert_eq!(&got, &upstream_closure(&g, anchors[0]).unwrap());
            }
        }
    }

    #[test]
    fn closures_are_idempotent_and_restriction_shrinks(seed in any::<u64>(), tau in 0.02f32..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let export = random_export(&mut rng, 4, 4, 8);
        let g = build_attention_graph(&export, &GraphConfig::new(tau)).unwrap();
        for &n in g.nodes() {
            let up = upstream_closure(&g, n).unwrap();
            for &m in &up.nodes {
                prop_assert!(upstream_closure(&g, m).unwrap().nodes.is_subset(&up.nodes));
            }
            let down = downstream_closure(&g, n).unwrap();
            prop_assert!(down.nodes.contains(&g.root()));
            for &m in &down.nodes {
                prop_assert!(downstream_closure(&g, m).unwrap().nodes.is_subset(&down.nodes));
            }
            for (e, _) in up.edges.iter().chain(down.edges.iter()) {
                prop_assert!(up.nodes.contains(&e.upper()) || down.nodes.contains(&e.upper()));
            }
            for head in 1..=export.num_heads() {
                match restricted_closure(&g, n, head) {
                    Ok(r) => {
                        prop_assert!(r.nodes.is_subset(&up.nodes));
                        for (e, hs) in &r.edges {
                            prop_assert!(hs.is_subset(&up.edges[e]));
                        }
                    }
                    Err(FlowError::HeadNotPresent { .. }) => {
                        prop_assert!(g.out_edges(n).all(|(_, hs)| !hs.contains(&head)));
                    }
                    Err(e) => prop_assert!(false, "unexpected {e:?}"),
                }
            }
        }
    }
}

#[test]
fn path_query_rejects_unknown_and_same_layer_anchors() {
    let export = attnflow_core::fixture::t1();
    let g = build_attention_graph(&export, &GraphConfig::new(0.3)).unwrap();
    assert!(matches!(
        cross_layer_paths(&g, &[Node::new(2, 0)], &[Node::new(0, 2)]),
        Err(FlowError::NodeNotInGraph(_))
    ));
    assert!(matches!(
        cross_layer_paths(&g, &[Node::new(1, 0)], &[Node::new(1, 1)]),
        Err(FlowError::MixedLayers)
    ));
    assert!(matches!(
        cross_layer_paths(&g, &[], &[Node::new(1, 1)]),
        Err(FlowError::EmptySelection)
    ));
}
