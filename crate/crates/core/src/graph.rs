//! Backward attention graph rooted at the classification token.
//!
//! Nodes are `(layer, position)` pairs with layers `0..=L`. An edge
//! `(λ, a) → (λ-1, b)` exists when some allowed head `j` of matrix `λ` has
//! `attention[λ][j][a][b] > τ`, and the graph keeps only what is reachable
//! backwards from the root.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::scalar::Weight;
use crate::store::{AttentionExport, TokenSequence};

/// Sparkline peaks are clamped to this many heads.
pub const MAX_PROFILE_HEIGHT: usize = 3;

/// Serialized as `[layer, position]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Node {
    pub layer: usize,
    pub position: usize,
}

impl Node {
    pub const fn new(layer: usize, position: usize) -> Self {
        Node { layer, position }
    }
}

impl From<(usize, usize)> for Node {
    fn from((layer, position): (usize, usize)) -> Self {
        Node { layer, position }
    }
}

impl From<Node> for (usize, usize) {
    fn from(n: Node) -> Self {
        (n.layer, n.position)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.layer, self.position)
    }
}

/// Edge from `(layer, from)` down to `(layer - 1, to)`; `layer` is also the
/// index of the attention matrix the edge came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub layer: usize,
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub const fn new(layer: usize, from: usize, to: usize) -> Self {
        Edge { layer, from, to }
    }

    pub fn upper(&self) -> Node {
        Node::new(self.layer, self.from)
    }

    pub fn lower(&self) -> Node {
        Node::new(self.layer - 1, self.to)
    }
}

/// 1-based head indices, kept sorted.
pub type HeadSet = BTreeSet<usize>;

/// Allowed heads per attention matrix. Matrices not listed allow every head.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct HeadFilter(BTreeMap<usize, BTreeSet<usize>>);

impl HeadFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn restrict(mut self, matrix: usize, heads: impl IntoIterator<Item = usize>) -> Self {
        self.0.insert(matrix, heads.into_iter().collect());
        self
    }

    pub fn allows(&self, matrix: usize, head: usize) -> bool {
        self.0.get(&matrix).is_none_or(|heads| heads.contains(&head))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> {
        self.0.iter().map(|(&m, h)| (m, h))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn validate(&self, layers: usize, heads: usize) -> Result<()> {
        for (&m, hs) in &self.0 {
            if !(1..=layers).contains(&m) {
                return Err(FlowError::InvalidHeadFilter(format!(
                    "matrix {m} outside 1..={layers}"
                )));
            }
            if let Some(h) = hs.iter().find(|&&h| !(1..=heads).contains(&h)) {
                return Err(FlowError::InvalidHeadFilter(format!(
                    "head {h} outside 1..={heads}"
                )));
            }
        }
        Ok(())
    }
}

/// `matrix:head,head;matrix:head`, e.g. `2:1,3;5:7`. An empty head list
/// disables the matrix entirely.
impl fmt::Display for HeadFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (m, hs) in &self.0 {
            if !first {
                f.write_str(";")?;
            }
            first = false;
            write!(f, "{m}:")?;
            let heads: Vec<String> = hs.iter().map(|h| h.to_string()).collect();
            f.write_str(&heads.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for HeadFilter {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        let mut filter = HeadFilter::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (m, heads) = part
                .split_once(':')
                .ok_or_else(|| FlowError::InvalidHeadFilter(format!("missing ':' in {part:?}")))?;
            let m: usize = m
                .trim()
                .parse()
                .map_err(|_| FlowError::InvalidHeadFilter(format!("bad matrix in {part:?}")))?;
            let heads = heads
                .split(',')
                .map(str::trim)
                .filter(|h| !h.is_empty())
                .map(|h| {
                    h.parse::<usize>()
                        .map_err(|_| FlowError::InvalidHeadFilter(format!("bad head {h:?}")))
                })
                .collect::<Result<BTreeSet<_>>>()?;
            if filter.0.insert(m, heads).is_some() {
                return Err(FlowError::InvalidHeadFilter(format!("matrix {m} listed twice")));
            }
        }
        Ok(filter)
    }
}

/// Threshold, optional head restriction, and root of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig<T> {
    pub tau: T,
    pub head_filter: Option<HeadFilter>,
    /// Defaults to `(L, cls_index)`.
    pub root: Option<Node>,
}

impl<T: Weight> GraphConfig<T> {
    pub fn new(tau: T) -> Self {
        GraphConfig {
            tau,
            head_filter: None,
            root: None,
        }
    }

    pub fn with_head_filter(mut self, filter: HeadFilter) -> Self {
        self.head_filter = Some(filter);
        self
    }

    pub fn with_root(mut self, root: Node) -> Self {
        self.root = Some(root);
        self
    }

    pub fn validate_tau(tau: T) -> Result<()> {
        if tau > T::zero() && tau < T::one() {
            Ok(())
        } else {
            Err(FlowError::InvalidTau(tau.to_string()))
        }
    }

    fn allows(&self, matrix: usize, head: usize) -> bool {
        self.head_filter
            .as_ref()
            .is_none_or(|f| f.allows(matrix, head))
    }
}

/// The thresholded, backward-reachable graph of one export.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGraph<T> {
    model_id: String,
    num_layers: usize,
    num_heads: usize,
    sequence: TokenSequence,
    tau: T,
    head_filter: Option<HeadFilter>,
    root: Node,
    nodes: BTreeSet<Node>,
    edges: BTreeMap<Edge, HeadSet>,
    parents: BTreeMap<Node, BTreeSet<usize>>,
}

/// Builds the graph layer by layer, from the root down to layer 0.
pub fn build_attention_graph<T: Weight>(
    export: &AttentionExport<T>,
    config: &GraphConfig<T>,
) -> Result<AttentionGraph<T>> {
    GraphConfig::validate_tau(config.tau)?;
    let (layers, heads, n) = (export.num_layers(), export.num_heads(), export.seq_len());
    if let Some(filter) = &config.head_filter {
        filter.validate(layers, heads)?;
    }
    let root = config
        .root
        .unwrap_or(Node::new(layers, export.sequence().cls_index()));
    if root.layer > layers || root.position >= n {
        return Err(FlowError::RootOutOfRange(root));
    }

    let mut nodes = BTreeSet::from([root]);
    let mut edges = BTreeMap::new();
    let mut frontier = BTreeSet::from([root.position]);
    for layer in (1..=root.layer).rev() {
        let allowed: Vec<usize> = (1..=heads).filter(|&j| config.allows(layer, j)).collect();
        let mut next = BTreeSet::new();
        for &a in &frontier {
            for b in 0..n {
                let carried: HeadSet = allowed
                    .iter()
                    .copied()
                    .filter(|&j| export.weight(layer, j, a, b) > config.tau)
                    .collect();
                if !carried.is_empty() {
                    edges.insert(Edge::new(layer, a, b), carried);
                    next.insert(b);
                }
            }
        }
        nodes.extend(next.iter().map(|&b| Node::new(layer - 1, b)));
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    let mut parents: BTreeMap<Node, BTreeSet<usize>> = BTreeMap::new();
    for e in edges.keys() {
        parents.entry(e.lower()).or_default().insert(e.from);
    }

    Ok(AttentionGraph {
        model_id: export.model_id().to_string(),
        num_layers: layers,
        num_heads: heads,
        sequence: export.sequence().clone(),
        tau: config.tau,
        head_filter: config.head_filter.clone(),
        root,
        nodes,
        edges,
        parents,
    })
}

impl<T: Weight> AttentionGraph<T> {
    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn seq_len(&self) -> usize {
        self.sequence.len()
    }

    pub fn sequence(&self) -> &TokenSequence {
        &self.sequence
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn head_filter(&self) -> Option<&HeadFilter> {
        self.head_filter.as_ref()
    }

    pub fn root(&self) -> Node {
        self.root
    }

    /// The config this graph was built with, root resolved.
    pub fn config(&self) -> GraphConfig<T> {
        GraphConfig {
            tau: self.tau,
            head_filter: self.head_filter.clone(),
            root: Some(self.root),
        }
    }

    /// Nodes in `(layer, position)` order.
    pub fn nodes(&self) -> &BTreeSet<Node> {
        &self.nodes
    }

    /// Edges in `(layer, from, to)` order with their head sets.
    pub fn edges(&self) -> &BTreeMap<Edge, HeadSet> {
        &self.edges
    }

    pub fn contains(&self, node: Node) -> bool {
        self.nodes.contains(&node)
    }

    pub fn heads(&self, edge: &Edge) -> Option<&HeadSet> {
        self.edges.get(edge)
    }

    pub(crate) fn require(&self, node: Node) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(FlowError::NodeNotInGraph(node))
        }
    }

    /// Nodes at one layer, by position.
    pub fn layer_nodes(&self, layer: usize) -> impl Iterator<Item = Node> + '_ {
        self.nodes
            .range(Node::new(layer, 0)..=Node::new(layer, usize::MAX))
            .copied()
    }

    /// Edges leaving `node` toward the layer below.
    pub fn out_edges(&self, node: Node) -> impl Iterator<Item = (&Edge, &HeadSet)> + '_ {
        let lo = Edge::new(node.layer, node.position, 0);
        let hi = Edge::new(node.layer, node.position, usize::MAX);
        self.edges.range(lo..=hi)
    }

    /// Positions at `node.layer + 1` with an edge into `node`.
    pub fn parents(&self, node: Node) -> impl Iterator<Item = Node> + '_ {
        self.parents
            .get(&node)
            .into_iter()
            .flatten()
            .map(move |&a| Node::new(node.layer + 1, a))
    }

    pub fn children(&self, node: Node) -> impl Iterator<Item = Node> + '_ {
        self.out_edges(node).map(|(e, _)| e.lower())
    }

    /// Per head (index `j - 1`), how many tokens one layer down the node
    /// attends to above the threshold. Filtered-out heads report 0.
    pub fn head_summary(&self, node: Node) -> Result<Vec<usize>> {
        self.require(node)?;
        if node.layer == 0 {
            return Err(FlowError::LayerOutOfRange {
                layer: 0,
                limit: self.num_layers + 1,
            });
        }
        let mut counts = vec![0; self.num_heads];
        for (_, heads) in self.out_edges(node) {
            for &j in heads {
                counts[j - 1] += 1;
            }
        }
        Ok(counts)
    }

    /// Attenders one layer up, in sequence order, each with its head count
    /// clamped to [`MAX_PROFILE_HEIGHT`].
    pub fn incoming_profile(&self, node: Node) -> Result<Vec<(usize, usize)>> {
        self.require(node)?;
        if node.layer >= self.root.layer {
            return Err(FlowError::LayerOutOfRange {
                layer: node.layer,
                limit: self.root.layer,
            });
        }
        Ok(self
            .parents(node)
            .map(|p| {
                let heads = &self.edges[&Edge::new(p.layer, p.position, node.position)];
                (p.position, heads.len().min(MAX_PROFILE_HEIGHT))
            })
            .collect())
    }

    /// Whether this graph could have come from `export`.
    pub fn matches_export(&self, export: &AttentionExport<T>) -> bool {
        self.model_id == export.model_id()
            && self.num_layers == export.num_layers()
            && self.num_heads == export.num_heads()
            && &self.sequence == export.sequence()
    }

    /// Assembles a graph from parts; used by projections of merged graphs.
    pub(crate) fn from_parts(
        template: &AttentionGraph<T>,
        model_id: String,
        nodes: BTreeSet<Node>,
        edges: BTreeMap<Edge, HeadSet>,
    ) -> Self {
        let mut parents: BTreeMap<Node, BTreeSet<usize>> = BTreeMap::new();
        for e in edges.keys() {
            parents.entry(e.lower()).or_default().insert(e.from);
        }
        AttentionGraph {
            model_id,
            num_layers: template.num_layers,
            num_heads: template.num_heads,
            sequence: template.sequence.clone(),
            tau: template.tau,
            head_filter: template.head_filter.clone(),
            root: template.root,
            nodes,
            edges,
            parents,
        }
    }
}
