//! Classification influence of each token.
//!
//! `c_λ(w)` counts head-edges from graph nodes at layer `λ + 1` into `w`. The
//! score at layer `λ` averages counts from `λ` up to the root's layer minus
//! one, decaying deeper (earlier) layers by `α` per step:
//!
//! ```text
//! I_λ(w) = 1/(top - λ) · Σ_{λ'=λ}^{top-1} α^(top-1-λ') · c_λ'(w)
//! ```
//!
//! where `top` is the root layer (normally `L`). The topmost term is
//! undecayed, so `I_{top-1}(w) = c_{top-1}(w)`.

use crate::error::{FlowError, Result};
use crate::graph::{AttentionGraph, Node};
use crate::scalar::{Score, Weight};
use crate::store::{AttentionExport, TokenSequence};

/// Influence scores are shown as at most this many circles.
pub const MAX_DISPLAY: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTable<S> {
    sequence: TokenSequence,
    top_layer: usize,
    counts: Vec<Vec<u64>>,
    alpha: S,
}

/// Tallies `c_λ(w)` for every layer below the root.
pub fn compute_influence<T: Weight, S: Score>(
    export: &AttentionExport<T>,
    graph: &AttentionGraph<T>,
    alpha: S,
) -> Result<InfluenceTable<S>> {
    if !graph.matches_export(export) {
        return Err(FlowError::GraphExportMismatch);
    }
    validate_alpha(&alpha)?;
    let n = export.seq_len();
    let top = graph.root().layer;
    let tau = graph.tau();
    let allowed = |m: usize, j: usize| graph.head_filter().is_none_or(|f| f.allows(m, j));
    let mut counts = vec![vec![0u64; n]; top];
    for (layer, row) in counts.iter_mut().enumerate() {
        let matrix = layer + 1;
        for upper in graph.layer_nodes(matrix) {
            for j in (1..=export.num_heads()).filter(|&j| allowed(matrix, j)) {
                for (w, &weight) in export.row(matrix, j, upper.position).iter().enumerate() {
                    if weight > tau {
                        row[w] += 1;
                    }
                }
            }
        }
    }
    Ok(InfluenceTable {
        sequence: export.sequence().clone(),
        top_layer: top,
        counts,
        alpha,
    })
}

fn validate_alpha<S: Score>(alpha: &S) -> Result<()> {
    if *alpha > S::zero() && *alpha <= S::one() {
        Ok(())
    } else {
        Err(FlowError::InvalidAlpha(format!("{alpha:?}")))
    }
}

impl<S: Score> InfluenceTable<S> {
    pub fn alpha(&self) -> &S {
        &self.alpha
    }

    /// Same counts under a different decay.
    pub fn with_alpha(&self, alpha: S) -> Result<Self> {
        validate_alpha(&alpha)?;
        Ok(InfluenceTable {
            alpha,
            ..self.clone()
        })
    }

    pub fn sequence(&self) -> &TokenSequence {
        &self.sequence
    }

    /// Layers with counts are `0..top_layer`.
    pub fn top_layer(&self) -> usize {
        self.top_layer
    }

    pub fn seq_len(&self) -> usize {
        self.sequence.len()
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer < self.top_layer {
            Ok(())
        } else {
            Err(FlowError::LayerOutOfRange {
                layer,
                limit: self.top_layer,
            })
        }
    }

    fn check_position(&self, position: usize) -> Result<()> {
        if position < self.seq_len() {
            Ok(())
        } else {
            Err(FlowError::InvalidIndex(format!(
                "position {position} not below {}",
                self.seq_len()
            )))
        }
    }

    /// `c_λ(w)` for every position at `layer`.
    pub fn counts(&self, layer: usize) -> Result<&[u64]> {
        self.check_layer(layer)?;
        Ok(&self.counts[layer])
    }

    pub fn count(&self, node: Node) -> Result<u64> {
        self.check_position(node.position)?;
        Ok(self.counts(node.layer)?[node.position])
    }

    /// `I_λ(w)`.
    pub fn score(&self, layer: usize, position: usize) -> Result<S> {
        self.check_layer(layer)?;
        self.check_position(position)?;
        let mut sum = S::zero();
        let mut decay = S::one();
        for l in (layer..self.top_layer).rev() {
            sum = sum + decay.clone() * S::from_count(self.counts[l][position]);
            decay = decay * self.alpha.clone();
        }
        Ok(sum / S::from_count((self.top_layer - layer) as u64))
    }

    /// `I_λ(w)` for every position.
    pub fn scores(&self, layer: usize) -> Result<Vec<S>> {
        (0..self.seq_len()).map(|w| self.score(layer, w)).collect()
    }
}

/// Circles shown for a score: the ceiling, clamped to `0..=5`.
pub fn display_influence<S: Score>(score: &S) -> u8 {
    score
        .ceil_u64()
        .map_or(0, |c| c.min(u64::from(MAX_DISPLAY)) as u8)
}
