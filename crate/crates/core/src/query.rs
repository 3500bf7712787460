//! Read-only traversals over an [`AttentionGraph`].
//!
//! "Upstream" walks toward layer 0 (what a token depends on), "downstream"
//! walks toward the root (what depends on a token).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::graph::{AttentionGraph, Edge, HeadSet, Node};
use crate::scalar::Weight;

/// Highlighted nodes and edges, each edge with its active heads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryResult {
    pub nodes: BTreeSet<Node>,
    pub edges: BTreeMap<Edge, HeadSet>,
}

impl QueryResult {
    fn absorb(&mut self, other: QueryResult) {
        self.nodes.extend(other.nodes);
        for (e, heads) in other.edges {
            self.edges.entry(e).or_default().extend(heads);
        }
    }
}

/// A selection plus the kind of traversal to run on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Query {
    Upstream { node: Node },
    Downstream { node: Node },
    /// Both directions, as when a token is hovered.
    Select { node: Node },
    Restricted { node: Node, head: usize },
    Brush { anchors: Vec<Node> },
    Paths { sources: Vec<Node>, targets: Vec<Node> },
}

impl Query {
    /// Every node the query refers to.
    pub fn anchors(&self) -> Vec<Node> {
        match self {
            Query::Upstream { node }
            | Query::Downstream { node }
            | Query::Select { node }
            | Query::Restricted { node, .. } => vec![*node],
            Query::Brush { anchors } => anchors.clone(),
            Query::Paths { sources, targets } => sources.iter().chain(targets).copied().collect(),
        }
    }
}

pub fn run_query<T: Weight>(graph: &AttentionGraph<T>, query: &Query) -> Result<QueryResult> {
    match query {
        Query::Upstream { node } => upstream_closure(graph, *node),
        Query::Downstream { node } => downstream_closure(graph, *node),
        Query::Select { node } => {
            let mut result = upstream_closure(graph, *node)?;
            result.absorb(downstream_closure(graph, *node)?);
            Ok(result)
        }
        Query::Restricted { node, head } => restricted_closure(graph, *node, *head),
        Query::Brush { anchors } => brush_intersection(graph, anchors),
        Query::Paths { sources, targets } => cross_layer_paths(graph, sources, targets),
    }
}

fn upstream_from<T: Weight>(
    graph: &AttentionGraph<T>,
    start: impl IntoIterator<Item = Node>,
    result: &mut QueryResult,
) {
    let mut stack: Vec<Node> = start.into_iter().collect();
    while let Some(node) = stack.pop() {
        if !result.nodes.insert(node) {
            continue;
        }
        for (e, heads) in graph.out_edges(node) {
            result.edges.insert(*e, heads.clone());
            stack.push(e.lower());
        }
    }
}

/// Everything `node` depends on, down to layer 0.
pub fn upstream_closure<T: Weight>(graph: &AttentionGraph<T>, node: Node) -> Result<QueryResult> {
    graph.require(node)?;
    let mut result = QueryResult::default();
    upstream_from(graph, [node], &mut result);
    Ok(result)
}

/// Everything that depends on `node`, up to the root.
pub fn downstream_closure<T: Weight>(
    graph: &AttentionGraph<T>,
    node: Node,
) -> Result<QueryResult> {
    graph.require(node)?;
    let mut result = QueryResult::default();
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        if !result.nodes.insert(n) {
            continue;
        }
        for p in graph.parents(n) {
            let e = Edge::new(p.layer, p.position, n.position);
            result.edges.insert(e, graph.edges()[&e].clone());
            stack.push(p);
        }
    }
    Ok(result)
}

/// Upstream closure whose first step from `node` uses only `head`; deeper
/// steps use every head.
pub fn restricted_closure<T: Weight>(
    graph: &AttentionGraph<T>,
    node: Node,
    head: usize,
) -> Result<QueryResult> {
    graph.require(node)?;
    let first: Vec<Edge> = graph
        .out_edges(node)
        .filter(|(_, heads)| heads.contains(&head))
        .map(|(e, _)| *e)
        .collect();
    if first.is_empty() {
        return Err(FlowError::HeadNotPresent { node, head });
    }
    let mut result = QueryResult::default();
    result.nodes.insert(node);
    upstream_from(graph, first.iter().map(Edge::lower), &mut result);
    for e in first {
        result.edges.insert(e, HeadSet::from([head]));
    }
    Ok(result)
}

/// Brushed anchors on one layer: the first step keeps only tokens every
/// anchor attends to, later steps follow all edges. Stops at the first empty
/// frontier.
pub fn brush_intersection<T: Weight>(
    graph: &AttentionGraph<T>,
    anchors: &[Node],
) -> Result<QueryResult> {
    let first = *anchors.first().ok_or(FlowError::EmptySelection)?;
    for &a in anchors {
        graph.require(a)?;
    }
    if anchors.iter().any(|a| a.layer != first.layer) {
        return Err(FlowError::MixedLayers);
    }
    let mut result = QueryResult::default();
    result.nodes.extend(anchors.iter().copied());

    let mut frontier: BTreeSet<Node> = graph.children(first).collect();
    for &a in &anchors[1..] {
        let kids: BTreeSet<Node> = graph.children(a).collect();
        frontier.retain(|n| kids.contains(n));
    }
    for &a in anchors {
        for (e, heads) in graph.out_edges(a) {
            if frontier.contains(&e.lower()) {
                result.edges.insert(*e, heads.clone());
            }
        }
    }
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for &n in &frontier {
            result.nodes.insert(n);
            for (e, heads) in graph.out_edges(n) {
                result.edges.insert(*e, heads.clone());
                next.insert(e.lower());
            }
        }
        frontier = next;
    }
    Ok(result)
}

fn layer_of(group: &[Node]) -> Result<usize> {
    let first = group.first().ok_or(FlowError::EmptySelection)?;
    if group.iter().all(|n| n.layer == first.layer) {
        Ok(first.layer)
    } else {
        Err(FlowError::MixedLayers)
    }
}

/// Tokens on paths between selections in two layers.
///
/// For one source/target pair the result is every node and edge on a
/// directed path between them. With several anchors, intermediate layers keep
/// only nodes lying on the paths of every pair; the anchors themselves stay
/// highlighted. Fails with [`FlowError::NoPath`] when a pair is disconnected
/// or the intersection leaves an intermediate layer empty.
pub fn cross_layer_paths<T: Weight>(
    graph: &AttentionGraph<T>,
    sources: &[Node],
    targets: &[Node],
) -> Result<QueryResult> {
    let (mut hi, mut lo) = (layer_of(sources)?, layer_of(targets)?);
    let (mut sources, mut targets) = (sources, targets);
    if hi < lo {
        std::mem::swap(&mut hi, &mut lo);
        std::mem::swap(&mut sources, &mut targets);
    }
    if hi == lo {
        return Err(FlowError::MixedLayers);
    }
    for &n in sources.iter().chain(targets) {
        graph.require(n)?;
    }

    let downs: BTreeMap<Node, BTreeSet<Node>> = targets
        .iter()
        .map(|&t| Ok((t, downstream_closure(graph, t)?.nodes)))
        .collect::<Result<_>>()?;

    let mut pair_results = Vec::new();
    for &s in sources {
        let up = upstream_closure(graph, s)?;
        for &t in targets {
            if !up.nodes.contains(&t) {
                return Err(FlowError::NoPath);
            }
            let nodes: BTreeSet<Node> = up.nodes.intersection(&downs[&t]).copied().collect();
            let edges = up
                .edges
                .iter()
                .filter(|(e, _)| nodes.contains(&e.upper()) && nodes.contains(&e.lower()))
                .map(|(e, h)| (*e, h.clone()))
                .collect();
            pair_results.push(QueryResult { nodes, edges });
        }
    }

    let is_inner = |n: &Node| n.layer > lo && n.layer < hi;
    let mut inner: BTreeSet<Node> = pair_results[0].nodes.iter().copied().filter(is_inner).collect();
    for pr in &pair_results[1..] {
        inner.retain(|n| pr.nodes.contains(n));
    }
    for layer in lo + 1..hi {
        if !inner.iter().any(|n| n.layer == layer) {
            return Err(FlowError::NoPath);
        }
    }

    let mut result = QueryResult::default();
    result.nodes.extend(sources.iter().chain(targets).copied());
    result.nodes.extend(inner);
    for pr in pair_results {
        for (e, heads) in pr.edges {
            if result.nodes.contains(&e.upper()) && result.nodes.contains(&e.lower()) {
                result.edges.entry(e).or_default().extend(heads);
            }
        }
    }
    Ok(result)
}
