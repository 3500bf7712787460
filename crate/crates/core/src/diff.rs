//! Side-by-side comparison of two models on the same sentence pair.
//!
//! Model `A` is conventionally the pre-trained model and `B` the fine-tuned
//! one. Every merged element carries a [`Provenance`]; colors are left to
//! the presentation layer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::graph::{AttentionGraph, Edge, Node};
use crate::influence::{display_influence, InfluenceTable};
use crate::query::{run_query, Query, QueryResult};
use crate::scalar::{Score, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    A,
    B,
    Both,
}

impl Provenance {
    pub fn join(self, other: Provenance) -> Provenance {
        if self == other {
            self
        } else {
            Provenance::Both
        }
    }

    /// Whether an element with this tag belongs to `model`'s view.
    pub fn includes(self, model: Provenance) -> bool {
        self == Provenance::Both || self == model
    }

    pub fn swapped(self) -> Provenance {
        match self {
            Provenance::A => Provenance::B,
            Provenance::B => Provenance::A,
            Provenance::Both => Provenance::Both,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::A => "a",
            Provenance::B => "b",
            Provenance::Both => "both",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An edge present in one or both models, with per-head provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedEdge {
    pub provenance: Provenance,
    pub heads: BTreeMap<usize, Provenance>,
}

fn tag_edge(
    edges: &mut BTreeMap<Edge, TaggedEdge>,
    edge: Edge,
    heads: impl IntoIterator<Item = usize>,
    model: Provenance,
) {
    let entry = edges.entry(edge).or_insert_with(|| TaggedEdge {
        provenance: model,
        heads: BTreeMap::new(),
    });
    entry.provenance = entry.provenance.join(model);
    for h in heads {
        entry
            .heads
            .entry(h)
            .and_modify(|p| *p = p.join(model))
            .or_insert(model);
    }
}

fn tag_node(nodes: &mut BTreeMap<Node, Provenance>, node: Node, model: Provenance) {
    nodes
        .entry(node)
        .and_modify(|p| *p = p.join(model))
        .or_insert(model);
}

/// Union of two graphs over the same tokens and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedGraph<T> {
    a: AttentionGraph<T>,
    b: AttentionGraph<T>,
    nodes: BTreeMap<Node, Provenance>,
    edges: BTreeMap<Edge, TaggedEdge>,
}

pub fn merge_graphs<T: Weight>(
    a: &AttentionGraph<T>,
    b: &AttentionGraph<T>,
) -> Result<MergedGraph<T>> {
    if a.sequence() != b.sequence() {
        return Err(FlowError::TokenMismatch);
    }
    if a.num_layers() != b.num_layers() || a.num_heads() != b.num_heads() {
        return Err(FlowError::ConfigMismatch(format!(
            "shapes {}x{} and {}x{}",
            a.num_layers(),
            a.num_heads(),
            b.num_layers(),
            b.num_heads()
        )));
    }
    if a.tau() != b.tau() {
        return Err(FlowError::ConfigMismatch(format!(
            "thresholds {} and {}",
            a.tau(),
            b.tau()
        )));
    }
    if a.head_filter() != b.head_filter() {
        return Err(FlowError::ConfigMismatch("head filters differ".into()));
    }
    if a.root() != b.root() {
        return Err(FlowError::ConfigMismatch(format!(
            "roots {} and {}",
            a.root(),
            b.root()
        )));
    }

    let mut nodes = BTreeMap::new();
    let mut edges = BTreeMap::new();
    for (graph, model) in [(a, Provenance::A), (b, Provenance::B)] {
        for &n in graph.nodes() {
            tag_node(&mut nodes, n, model);
        }
        for (e, heads) in graph.edges() {
            tag_edge(&mut edges, *e, heads.iter().copied(), model);
        }
    }
    Ok(MergedGraph {
        a: a.clone(),
        b: b.clone(),
        nodes,
        edges,
    })
}

impl<T: Weight> MergedGraph<T> {
    pub fn graph_a(&self) -> &AttentionGraph<T> {
        &self.a
    }

    pub fn graph_b(&self) -> &AttentionGraph<T> {
        &self.b
    }

    pub fn graph(&self, model: Provenance) -> Option<&AttentionGraph<T>> {
        match model {
            Provenance::A => Some(&self.a),
            Provenance::B => Some(&self.b),
            Provenance::Both => None,
        }
    }

    pub fn nodes(&self) -> &BTreeMap<Node, Provenance> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<Edge, TaggedEdge> {
        &self.edges
    }

    /// Keeps only elements tagged `model` or `both`.
    pub fn project(&self, model: Provenance) -> AttentionGraph<T> {
        let source = self.graph(model).unwrap_or(&self.a);
        let nodes = self
            .nodes
            .iter()
            .filter(|(_, p)| p.includes(model))
            .map(|(n, _)| *n)
            .collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|(e, tagged)| {
                let heads: crate::graph::HeadSet = tagged
                    .heads
                    .iter()
                    .filter(|(_, p)| p.includes(model))
                    .map(|(h, _)| *h)
                    .collect();
                (!heads.is_empty()).then_some((*e, heads))
            })
            .collect();
        AttentionGraph::from_parts(source, source.model_id().to_string(), nodes, edges)
    }

    /// Per node (layer ≥ 1), per head: which models carry at least one edge
    /// with that head out of the node. Drives split head glyphs.
    pub fn head_provenance(&self, node: Node) -> Result<BTreeMap<usize, Provenance>> {
        if !self.nodes.contains_key(&node) {
            return Err(FlowError::NodeNotInGraph(node));
        }
        let mut out = BTreeMap::new();
        let lo = Edge::new(node.layer, node.position, 0);
        let hi = Edge::new(node.layer, node.position, usize::MAX);
        for (_, tagged) in self.edges.range(lo..=hi) {
            for (&h, &p) in &tagged.heads {
                out.entry(h).and_modify(|q: &mut Provenance| *q = q.join(p)).or_insert(p);
            }
        }
        Ok(out)
    }
}

/// Circle split for one token: shared circles first, then the surplus owned
/// by whichever model scores higher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfluenceComparison {
    pub display_a: u8,
    pub display_b: u8,
    pub shared_circles: u8,
    pub extra_circles: u8,
    pub extra_owner: Option<Provenance>,
}

impl InfluenceComparison {
    pub fn from_displays(display_a: u8, display_b: u8) -> Self {
        let extra_owner = match display_a.cmp(&display_b) {
            std::cmp::Ordering::Greater => Some(Provenance::A),
            std::cmp::Ordering::Less => Some(Provenance::B),
            std::cmp::Ordering::Equal => None,
        };
        InfluenceComparison {
            display_a,
            display_b,
            shared_circles: display_a.min(display_b),
            extra_circles: display_a.abs_diff(display_b),
            extra_owner,
        }
    }
}

pub fn compare_influence<S: Score>(
    table_a: &InfluenceTable<S>,
    table_b: &InfluenceTable<S>,
    layer: usize,
) -> Result<Vec<InfluenceComparison>> {
    if table_a.sequence() != table_b.sequence() {
        return Err(FlowError::TokenMismatch);
    }
    if table_a.top_layer() != table_b.top_layer() {
        return Err(FlowError::ConfigMismatch("influence tables have different roots".into()));
    }
    let a = table_a.scores(layer)?;
    let b = table_b.scores(layer)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(sa, sb)| InfluenceComparison::from_displays(display_influence(sa), display_influence(sb)))
        .collect())
}

/// Query result over a merged graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaggedQueryResult {
    pub nodes: BTreeMap<Node, Provenance>,
    pub edges: BTreeMap<Edge, TaggedEdge>,
}

impl TaggedQueryResult {
    fn add(&mut self, result: QueryResult, model: Provenance) {
        for n in result.nodes {
            tag_node(&mut self.nodes, n, model);
        }
        for (e, heads) in result.edges {
            tag_edge(&mut self.edges, e, heads, model);
        }
    }

    /// The part of the result produced by `model`.
    pub fn project(&self, model: Provenance) -> QueryResult {
        QueryResult {
            nodes: self
                .nodes
                .iter()
                .filter(|(_, p)| p.includes(model))
                .map(|(n, _)| *n)
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|(_, t)| t.provenance.includes(model))
                .map(|(e, t)| {
                    let heads = t
                        .heads
                        .iter()
                        .filter(|(_, p)| p.includes(model))
                        .map(|(h, _)| *h)
                        .collect();
                    (*e, heads)
                })
                .collect(),
        }
    }
}

/// Restricts a query to the anchors present in `graph`; `None` if nothing
/// usable remains.
fn localize<T: Weight>(graph: &AttentionGraph<T>, query: &Query) -> Option<Query> {
    let keep = |v: &[Node]| -> Vec<Node> { v.iter().copied().filter(|n| graph.contains(*n)).collect() };
    match query {
        Query::Upstream { node }
        | Query::Downstream { node }
        | Query::Select { node }
        | Query::Restricted { node, .. } => graph.contains(*node).then(|| query.clone()),
        Query::Brush { anchors } => {
            let anchors = keep(anchors);
            (!anchors.is_empty()).then_some(Query::Brush { anchors })
        }
        Query::Paths { sources, targets } => {
            let (sources, targets) = (keep(sources), keep(targets));
            (!sources.is_empty() && !targets.is_empty()).then_some(Query::Paths { sources, targets })
        }
    }
}

/// Runs `query` on each model separately and unions the results.
///
/// A model is skipped when none of its anchors are in its graph, and a model
/// whose own query fails (no path, head absent) contributes nothing. The
/// call fails only if neither model produced a result.
pub fn combined_traversal<T: Weight>(
    merged: &MergedGraph<T>,
    query: &Query,
) -> Result<TaggedQueryResult> {
    let mut out = TaggedQueryResult::default();
    let mut produced = false;
    let mut failure = None;
    for model in [Provenance::A, Provenance::B] {
        let graph = merged.graph(model).expect("single model");
        let Some(local) = localize(graph, query) else {
            continue;
        };
        match run_query(graph, &local) {
            Ok(result) => {
                out.add(result, model);
                produced = true;
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    if produced {
        return Ok(out);
    }
    Err(failure.unwrap_or_else(|| {
        FlowError::NodeNotInGraph(query.anchors().first().copied().unwrap_or(Node::new(0, 0)))
    }))
}
