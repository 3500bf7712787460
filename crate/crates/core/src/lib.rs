//! Attention-flow analysis for transformer encoders.
//!
//! Starting from the classification token at the last layer, the engine
//! walks attention backwards through every layer and head, keeping an edge
//! wherever an attention weight exceeds a threshold. On top of that graph it
//! computes per-token influence scores, answers traversal queries, and merges
//! the graphs of two models (typically pre-trained and fine-tuned) run on the
//! same sentence pair.
//!
//! The engine is generic over the weight type ([`Weight`]: `f32` or `f64`)
//! and the score type ([`Score`]: floats or exact rationals). Aliases below
//! cover the common choices.

pub mod diff;
pub mod error;
pub mod fixture;
pub mod graph;
pub mod influence;
pub mod query;
pub mod report;
pub mod scalar;
pub mod store;

pub use diff::{
    combined_traversal, compare_influence, merge_graphs, InfluenceComparison, MergedGraph,
    Provenance, TaggedEdge, TaggedQueryResult,
};
pub use error::{FlowError, Result};
pub use graph::{build_attention_graph, AttentionGraph, Edge, GraphConfig, HeadFilter, HeadSet, Node};
pub use influence::{compute_influence, display_influence, InfluenceTable};
pub use query::{
    brush_intersection, cross_layer_paths, downstream_closure, restricted_closure, run_query,
    upstream_closure, Query, QueryResult,
};
pub use scalar::{Score, Weight};
pub use store::{load_export, write_export, AttentionExport, TokenSequence};

/// Default edge threshold.
pub const DEFAULT_TAU: f64 = 0.1;
/// Default per-layer influence decay.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Exports as stored on disk.
pub type Export = AttentionExport<f32>;
pub type Graph = AttentionGraph<f32>;
pub type Merged = MergedGraph<f32>;
pub type Config = GraphConfig<f32>;

pub type ExportF64 = AttentionExport<f64>;
pub type GraphF64 = AttentionGraph<f64>;

/// Exact influence arithmetic.
pub type Rational = num_rational::Ratio<i64>;
pub type ExactInfluence = InfluenceTable<Rational>;
pub type Influence = InfluenceTable<f64>;
