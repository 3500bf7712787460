use std::path::PathBuf;

use thiserror::Error;

use crate::graph::Node;

pub type Result<T, E = FlowError> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// [`FlowError::code`] gives the stable machine-readable name used in CLI and
/// HTTP error documents.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("file does not start with the ATNF magic")]
    BadMagic,

    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("row {row} of head {head} in matrix {matrix} sums to {sum}, expected 1 within 1e-3")]
    NonStochasticRow {
        matrix: usize,
        head: usize,
        row: usize,
        sum: f64,
    },

    #[error("weight at matrix {matrix}, head {head}, row {row}, col {col} is negative or not finite")]
    InvalidWeight {
        matrix: usize,
        head: usize,
        row: usize,
        col: usize,
    },

    #[error("invalid token index: {0}")]
    InvalidIndex(String),

    #[error("token sequence is empty")]
    EmptySequence,

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    InvalidTau(String),

    #[error("decay must lie in (0, 1], got {0}")]
    InvalidAlpha(String),

    #[error("invalid head filter: {0}")]
    InvalidHeadFilter(String),

    #[error("root {0} is outside the export")]
    RootOutOfRange(Node),

    #[error("graph was not built from this export")]
    GraphExportMismatch,

    #[error("layer {layer} is outside 0..{limit}")]
    LayerOutOfRange { layer: usize, limit: usize },

    #[error("node {0} is not in the attention graph")]
    NodeNotInGraph(Node),

    #[error("head {head} carries no edge at node {node}")]
    HeadNotPresent { node: Node, head: usize },

    #[error("brushed anchors must share a single layer")]
    MixedLayers,

    #[error("malformed query: {0}")]
    InvalidQuery(String),

    #[error("selection is empty")]
    EmptySelection,

    #[error("no path connects the selected tokens")]
    NoPath,

    #[error("the two exports tokenize the input differently")]
    TokenMismatch,

    #[error("graphs were built with different configurations: {0}")]
    ConfigMismatch(String),

    #[error("{0}")]
    Usage(String),
}

impl FlowError {
    pub fn code(&self) -> &'static str {
        match self {
            FlowError::BadMagic => "BadMagic",
            FlowError::VersionUnsupported(_) => "VersionUnsupported",
            FlowError::ShapeMismatch(_) => "ShapeMismatch",
            FlowError::NonStochasticRow { .. } => "NonStochasticRow",
            FlowError::InvalidWeight { .. } => "InvalidWeight",
            FlowError::InvalidIndex(_) => "InvalidIndex",
            FlowError::EmptySequence => "EmptySequence",
            FlowError::CorruptPayload(_) => "CorruptPayload",
            FlowError::IoFailure { .. } => "IoFailure",
            FlowError::InvalidTau(_) => "InvalidTau",
            FlowError::InvalidAlpha(_) => "InvalidAlpha",
            FlowError::InvalidHeadFilter(_) => "InvalidHeadFilter",
            FlowError::RootOutOfRange(_) => "RootOutOfRange",
            FlowError::GraphExportMismatch => "GraphExportMismatch",
            FlowError::LayerOutOfRange { .. } => "LayerOutOfRange",
            FlowError::NodeNotInGraph(_) => "NodeNotInGraph",
            FlowError::HeadNotPresent { .. } => "HeadNotPresent",
            FlowError::MixedLayers => "MixedLayers",
            FlowError::InvalidQuery(_) => "InvalidQuery",
            FlowError::EmptySelection => "EmptySelection",
            FlowError::NoPath => "NoPath",
            FlowError::TokenMismatch => "TokenMismatch",
            FlowError::ConfigMismatch(_) => "ConfigMismatch",
            FlowError::Usage(_) => "Usage",
        }
    }

    /// True for errors raised while decoding or validating an export.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            FlowError::BadMagic
                | FlowError::VersionUnsupported(_)
                | FlowError::ShapeMismatch(_)
                | FlowError::NonStochasticRow { .. }
                | FlowError::InvalidWeight { .. }
                | FlowError::InvalidIndex(_)
                | FlowError::EmptySequence
                | FlowError::CorruptPayload(_)
        )
    }
}
