//! Random exports and brute-force oracles shared by the property tests and
//! the acceptance suite. Nothing here calls into the graph or query code
//! under test; oracles index the raw tensor and edge maps directly.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use attnflow_core::fixture::placeholder_sequence;
use attnflow_core::{AttentionExport, AttentionGraph, Edge, HeadFilter, Node};
use rand::Rng;

pub type NodeSet = BTreeSet<(usize, usize)>;
pub type EdgeMap = BTreeMap<(usize, usize, usize), BTreeSet<usize>>;

/// Random row-stochastic export with `1 ≤ L ≤ max_l`, `1 ≤ H ≤ max_h`,
/// `1 ≤ n ≤ max_n`. Rows mix dense random, one-hot, and uniform patterns so
/// thresholds cut at varied places.
pub fn random_export<R: Rng>(rng: &mut R, max_l: usize, max_h: usize, max_n: usize) -> AttentionExport<f32> {
    let l = rng.gen_range(1..=max_l);
    let h = rng.gen_range(1..=max_h);
    let n = rng.gen_range(1..=max_n);
    let mut weights = Vec::with_capacity(l * h * n * n);
    for _ in 0..l * h * n {
        let row: Vec<f32> = match rng.gen_range(0..6) {
            0 => {
                let mut r = vec![0.0; n];
                r[rng.gen_range(0..n)] = 1.0;
                r
            }
            1 => vec![1.0 / n as f32; n],
            _ => {
                let raw: Vec<f64> = (0..n)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        u * u + 1e-4
                    })
                    .collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| (x / s) as f32).collect()
            }
        };
        weights.extend(row);
    }
    AttentionExport::new("random", l, h, placeholder_sequence(n), weights).expect("valid random export")
}

/// Random filter: each matrix is restricted with probability 1/2 to a random
/// subset of heads.
pub fn random_filter<R: Rng>(rng: &mut R, layers: usize, heads: usize) -> HeadFilter {
    let mut f = HeadFilter::new();
    for m in 1..=layers {
        if rng.gen_bool(0.5) {
            let subset: Vec<usize> = (1..=heads).filter(|_| rng.gen_bool(0.6)).collect();
            f = f.restrict(m, subset);
        }
    }
    f
}

/// Drops one head (if any) from one restricted or unrestricted matrix.
pub fn shrink_filter<R: Rng>(rng: &mut R, filter: &HeadFilter, layers: usize, heads: usize) -> HeadFilter {
    let m = rng.gen_range(1..=layers);
    let allowed: Vec<usize> = (1..=heads).filter(|&j| filter.allows(m, j)).collect();
    let kept: Vec<usize> = if allowed.is_empty() {
        allowed
    } else {
        let drop = allowed[rng.gen_range(0..allowed.len())];
        allowed.into_iter().filter(|&j| j != drop).collect()
    };
    let mut out = HeadFilter::new();
    for (mm, hs) in filter.entries() {
        if mm != m {
            out = out.restrict(mm, hs.iter().copied());
        }
    }
    out.restrict(m, kept)
}

/// Brute-force graph: materialize every thresholded edge of every matrix,
/// then breadth-first search from the root.
pub fn oracle_graph(
    export: &AttentionExport<f32>,
    tau: f32,
    filter: Option<&HeadFilter>,
    root: (usize, usize),
) -> (NodeSet, EdgeMap) {
    let (l, h, n) = (export.num_layers(), export.num_heads(), export.seq_len());
    let raw = export.attention();
    let mut adjacency: EdgeMap = BTreeMap::new();
    for m in 1..=l {
        for j in 1..=h {
            if let Some(f) = filter {
                if !f.allows(m, j) {
                    continue;
                }
            }
            for a in 0..n {
                for b in 0..n {
                    let w = raw[(m - 1) * h * n * n + (j - 1) * n * n + a * n + b];
                    if w > tau {
                        adjacency.entry((m, a, b)).or_default().insert(j);
                    }
                }
            }
        }
    }
    let mut nodes = NodeSet::new();
    let mut edges = EdgeMap::new();
    let mut queue = VecDeque::from([root]);
    nodes.insert(root);
    while let Some((layer, a)) = queue.pop_front() {
        if layer == 0 {
            continue;
        }
        for b in 0..n {
            if let Some(heads) = adjacency.get(&(layer, a, b)) {
                edges.insert((layer, a, b), heads.clone());
                if nodes.insert((layer - 1, b)) {
                    queue.push_back((layer - 1, b));
                }
            }
        }
    }
    (nodes, edges)
}

pub fn graph_sets(g: &AttentionGraph<f32>) -> (NodeSet, EdgeMap) {
    let nodes = g.nodes().iter().map(|n| (n.layer, n.position)).collect();
    let edges = g
        .edges()
        .iter()
        .map(|(e, hs)| ((e.layer, e.from, e.to), hs.clone()))
        .collect();
    (nodes, edges)
}

/// Children of `(layer, pos)` read straight off the edge map.
fn children(edges: &EdgeMap, (layer, pos): (usize, usize)) -> Vec<(usize, usize)> {
    edges
        .keys()
        .filter(|&&(l, a, _)| l == layer && a == pos)
        .map(|&(_, _, b)| (layer - 1, b))
        .collect()
}

/// All directed paths from `source` down to `target`, by exhaustive DFS;
/// returns the union of their nodes and edges, or `None` if there is none.
pub fn dfs_path_union(
    edges: &EdgeMap,
    source: (usize, usize),
    target: (usize, usize),
) -> Option<(NodeSet, EdgeMap)> {
    fn walk(
        edges: &EdgeMap,
        at: (usize, usize),
        target: (usize, usize),
        path: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        path.push(at);
        if at == target {
            out.push(path.clone());
        } else if at.0 > target.0 {
            for c in children(edges, at) {
                walk(edges, c, target, path, out);
            }
        }
        path.pop();
    }
    let mut paths = Vec::new();
    walk(edges, source, target, &mut Vec::new(), &mut paths);
    if paths.is_empty() {
        return None;
    }
    let mut nodes = NodeSet::new();
    let mut used = EdgeMap::new();
    for p in &paths {
        nodes.extend(p.iter().copied());
        for w in p.windows(2) {
            let key = (w[0].0, w[0].1, w[1].1);
            used.insert(key, edges[&key].clone());
        }
    }
    Some((nodes, used))
}

/// Multi-anchor path oracle: per-pair DFS unions, intermediate layers
/// intersected across pairs, anchors kept, surviving per-pair edges unioned.
pub fn paths_oracle(
    edges: &EdgeMap,
    sources: &[(usize, usize)],
    targets: &[(usize, usize)],
) -> Option<(NodeSet, EdgeMap)> {
    let mut pairs = Vec::new();
    for &s in sources {
        for &t in targets {
            pairs.push(dfs_path_union(edges, s, t)?);
        }
    }
    let (hi, lo) = (sources[0].0, targets[0].0);
    let inner = |set: &NodeSet| -> NodeSet { set.iter().copied().filter(|n| n.0 > lo && n.0 < hi).collect() };
    let mut mids = inner(&pairs[0].0);
    for p in &pairs[1..] {
        mids = mids.intersection(&inner(&p.0)).copied().collect();
    }
    for layer in lo + 1..hi {
        if !mids.iter().any(|n| n.0 == layer) {
            return None;
        }
    }
    let mut nodes: NodeSet = sources.iter().chain(targets).copied().collect();
    nodes.extend(mids);
    let mut out = EdgeMap::new();
    for (_, pe) in pairs {
        for (k, hs) in pe {
            if nodes.contains(&(k.0, k.1)) && nodes.contains(&(k.0 - 1, k.2)) {
                out.entry(k).or_default().extend(hs);
            }
        }
    }
    Some((nodes, out))
}

/// Brushing by definition: intersect the anchors' child sets once, then
/// follow every edge from each frontier until it empties.
pub fn brush_oracle(edges: &EdgeMap, anchors: &[(usize, usize)]) -> (NodeSet, EdgeMap) {
    let sets: Vec<BTreeSet<(usize, usize)>> =
        anchors.iter().map(|&a| children(edges, a).into_iter().collect()).collect();
    let mut frontier = sets[0].clone();
    for s in &sets[1..] {
        frontier = frontier.intersection(s).copied().collect();
    }
    let mut nodes: NodeSet = anchors.iter().copied().collect();
    let mut out = EdgeMap::new();
    for &a in anchors {
        for c in children(edges, a) {
            if frontier.contains(&c) {
                out.insert((a.0, a.1, c.1), edges[&(a.0, a.1, c.1)].clone());
            }
        }
    }
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for &f in &frontier {
            nodes.insert(f);
            for c in children(edges, f) {
                out.insert((f.0, f.1, c.1), edges[&(f.0, f.1, c.1)].clone());
                next.insert(c);
            }
        }
        frontier = next;
    }
    (nodes, out)
}

pub fn result_sets(nodes: &BTreeSet<Node>, edges: &BTreeMap<Edge, BTreeSet<usize>>) -> (NodeSet, EdgeMap) {
    (
        nodes.iter().map(|n| (n.layer, n.position)).collect(),
        edges.iter().map(|(e, h)| ((e.layer, e.from, e.to), h.clone())).collect(),
    )
}
