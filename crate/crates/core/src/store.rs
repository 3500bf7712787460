//! The `.attn` export format and its in-memory form.
//!
//! Layout, little-endian throughout:
//!
//! | bytes            | content                                          |
//! |------------------|--------------------------------------------------|
//! | 4                | magic `ATNF`                                     |
//! | 4                | format version, `u32` (= 1)                      |
//! | 4                | header length in bytes, `u32`                    |
//! | header length    | UTF-8 JSON header                                |
//! | `4·L·H·n·n`      | `f32` weights, `[matrix][head][row][col]`        |
//!
//! Embedding layers are numbered `0..=L` and attention matrices `1..=L`:
//! matrix `m` maps layer `m - 1` (columns, inputs) to layer `m` (rows,
//! outputs). Heads are numbered `1..=H`. The store never renormalizes; it
//! only validates that rows are stochastic.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::scalar::Weight;

pub const MAGIC: &[u8; 4] = b"ATNF";
pub const FORMAT_VERSION: u32 = 1;
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;
const PREAMBLE_LEN: usize = 12;

/// Tokens of one sentence pair, framed as `[CLS] s1 [SEP] s2 [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
    cls_index: usize,
    sep_indices: Vec<usize>,
    segment_ids: Vec<u8>,
}

impl TokenSequence {
    pub fn new(
        tokens: Vec<String>,
        cls_index: usize,
        sep_indices: Vec<usize>,
        segment_ids: Vec<u8>,
    ) -> Result<Self> {
        let seq = TokenSequence {
            tokens,
            cls_index,
            sep_indices,
            segment_ids,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Builds the standard pair framing: `[CLS]`, first sentence, `[SEP]`,
    /// second sentence, `[SEP]`.
    pub fn from_pair<S: AsRef<str>>(first: &[S], second: &[S]) -> Self {
        let mut tokens = vec!["[CLS]".to_string()];
        tokens.extend(first.iter().map(|t| t.as_ref().to_string()));
        let first_sep = tokens.len();
        tokens.push("[SEP]".to_string());
        tokens.extend(second.iter().map(|t| t.as_ref().to_string()));
        let second_sep = tokens.len();
        tokens.push("[SEP]".to_string());
        let segment_ids = (0..tokens.len())
            .map(|i| if i <= first_sep { 1 } else { 2 })
            .collect();
        TokenSequence {
            tokens,
            cls_index: 0,
            sep_indices: vec![first_sep, second_sep],
            segment_ids,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(FlowError::EmptySequence);
        }
        if self.cls_index >= n {
            return Err(FlowError::InvalidIndex(format!(
                "cls_index {} not below {n}",
                self.cls_index
            )));
        }
        if let Some(&s) = self.sep_indices.iter().find(|&&s| s >= n) {
            return Err(FlowError::InvalidIndex(format!("sep index {s} not below {n}")));
        }
        if self.segment_ids.len() != n {
            return Err(FlowError::InvalidIndex(format!(
                "{} segment ids for {n} tokens",
                self.segment_ids.len()
            )));
        }
        let boundary = self.sep_indices.iter().copied().min();
        for (i, &seg) in self.segment_ids.iter().enumerate() {
            let expected = match boundary {
                Some(b) if i > b => 2,
                _ => 1,
            };
            if seg != expected {
                return Err(FlowError::InvalidIndex(format!(
                    "segment id {seg} at position {i}; the boundary must follow the first separator"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn cls_index(&self) -> usize {
        self.cls_index
    }

    pub fn sep_indices(&self) -> &[usize] {
        &self.sep_indices
    }

    pub fn segment_ids(&self) -> &[u8] {
        &self.segment_ids
    }
}

/// Attention of one model on one sentence pair: `L` matrices of `H` heads,
/// each `n × n` and row-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionExport<T> {
    model_id: String,
    num_layers: usize,
    num_heads: usize,
    sequence: TokenSequence,
    attention: Vec<T>,
    predicted_label: Option<String>,
    task: Option<String>,
}

impl<T: Weight> AttentionExport<T> {
    /// Validates shape, row-stochasticity and finiteness.
    pub fn new(
        model_id: impl Into<String>,
        num_layers: usize,
        num_heads: usize,
        sequence: TokenSequence,
        attention: Vec<T>,
    ) -> Result<Self> {
        sequence.validate()?;
        let export = AttentionExport {
            model_id: model_id.into(),
            num_layers,
            num_heads,
            sequence,
            attention,
            predicted_label: None,
            task: None,
        };
        export.validate()?;
        Ok(export)
    }

    pub fn with_predicted_label(mut self, label: impl Into<String>) -> Self {
        self.predicted_label = Some(label.into());
        self
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.sequence.len();
        if n == 0 {
            return Err(FlowError::EmptySequence);
        }
        if self.num_layers == 0 || self.num_heads == 0 {
            return Err(FlowError::ShapeMismatch(format!(
                "num_layers={} num_heads={} must both be positive",
                self.num_layers, self.num_heads
            )));
        }
        let expected = payload_len(self.num_layers, self.num_heads, n)
            .ok_or_else(|| FlowError::ShapeMismatch("tensor size overflows".into()))?;
        if self.attention.len() != expected {
            return Err(FlowError::ShapeMismatch(format!(
                "expected {expected} weights for L={} H={} n={n}, found {}",
                self.num_layers,
                self.num_heads,
                self.attention.len()
            )));
        }
        for matrix in 1..=self.num_layers {
            for head in 1..=self.num_heads {
                for row in 0..n {
                    let weights = self.row(matrix, head, row);
                    let mut sum = 0.0f64;
                    for (col, &w) in weights.iter().enumerate() {
                        if !w.is_finite() || w < T::zero() {
                            return Err(FlowError::InvalidWeight {
                                matrix,
                                head,
                                row,
                                col,
                            });
                        }
                        sum += w.to_f64().unwrap_or(f64::NAN);
                    }
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(FlowError::NonStochasticRow {
                            matrix,
                            head,
                            row,
                            sum,
                        });
                    }
                }
            }
        }
        Ok(())
    }

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

    pub fn predicted_label(&self) -> Option<&str> {
        self.predicted_label.as_deref()
    }

    pub fn task(&self) -> Option<&str> {
        self.task.as_deref()
    }

    /// The flat tensor in `[matrix][head][row][col]` order.
    pub fn attention(&self) -> &[T] {
        &self.attention
    }

    fn offset(&self, matrix: usize, head: usize, row: usize) -> usize {
        let n = self.sequence.len();
        (((matrix - 1) * self.num_heads + (head - 1)) * n + row) * n
    }

    /// Row `row` of head `head` (1-based) in matrix `matrix` (1-based).
    ///
    /// Panics if any index is out of range.
    pub fn row(&self, matrix: usize, head: usize, row: usize) -> &[T] {
        assert!(
            (1..=self.num_layers).contains(&matrix) && (1..=self.num_heads).contains(&head),
            "matrix {matrix} head {head} out of range"
        );
        assert!(row < self.seq_len(), "row {row} out of range");
        let start = self.offset(matrix, head, row);
        &self.attention[start..start + self.sequence.len()]
    }

    pub fn weight(&self, matrix: usize, head: usize, row: usize, col: usize) -> T {
        self.row(matrix, head, row)[col]
    }

    /// Converts the tensor to another weight type.
    pub fn cast<U: Weight>(&self) -> AttentionExport<U> {
        AttentionExport {
            model_id: self.model_id.clone(),
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            sequence: self.sequence.clone(),
            attention: self
                .attention
                .iter()
                .map(|w| <U as num_traits::NumCast>::from(*w).unwrap_or_else(U::nan))
                .collect(),
            predicted_label: self.predicted_label.clone(),
            task: self.task.clone(),
        }
    }

    /// Serializes to the `.attn` byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = Header {
            model_id: self.model_id.clone(),
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            seq_len: self.seq_len(),
            tokens: self.sequence.tokens.clone(),
            cls_index: self.sequence.cls_index,
            sep_indices: self.sequence.sep_indices.clone(),
            segment_ids: self.sequence.segment_ids.clone(),
            predicted_label: self.predicted_label.clone(),
            task: self.task.clone(),
        };
        let header = serde_json::to_vec(&header)
            .map_err(|e| FlowError::CorruptPayload(format!("header encoding: {e}")))?;
        let header_len = u32::try_from(header.len())
            .map_err(|_| FlowError::CorruptPayload("header longer than 4 GiB".into()))?;
        let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + 4 * self.attention.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for w in &self.attention {
            out.extend_from_slice(&w.to_payload().to_le_bytes());
        }
        Ok(out)
    }
}

impl AttentionExport<f32> {
    /// Decodes and validates `.attn` bytes. Weights are kept bit-identical.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(FlowError::BadMagic);
        }
        if bytes.len() < PREAMBLE_LEN {
            return Err(FlowError::CorruptPayload("truncated preamble".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(FlowError::VersionUnsupported(version));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = PREAMBLE_LEN
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                FlowError::CorruptPayload(format!(
                    "header length {header_len} exceeds file size {}",
                    bytes.len()
                ))
            })?;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE_LEN..header_end])
            .map_err(|e| FlowError::CorruptPayload(format!("header: {e}")))?;
        if header.tokens.len() != header.seq_len {
            return Err(FlowError::ShapeMismatch(format!(
                "seq_len {} but {} tokens",
                header.seq_len,
                header.tokens.len()
            )));
        }
        if header.seq_len == 0 {
            return Err(FlowError::EmptySequence);
        }
        let expected = payload_len(header.num_layers, header.num_heads, header.seq_len)
            .and_then(|len| len.checked_mul(4))
            .ok_or_else(|| FlowError::ShapeMismatch("declared shape overflows".into()))?;
        let payload = &bytes[header_end..];
        if payload.len() != expected {
            let msg = format!(
                "declared L={} H={} n={} needs {expected} payload bytes, found {}",
                header.num_layers,
                header.num_heads,
                header.seq_len,
                payload.len()
            );
            return Err(if payload.len() < expected {
                FlowError::CorruptPayload(msg)
            } else {
                FlowError::ShapeMismatch(msg)
            });
        }
        let attention = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let sequence = TokenSequence::new(
            header.tokens,
            header.cls_index,
            header.sep_indices,
            header.segment_ids,
        )?;
        let mut export = AttentionExport::new(
            header.model_id,
            header.num_layers,
            header.num_heads,
            sequence,
            attention,
        )?;
        export.predicted_label = header.predicted_label;
        export.task = header.task;
        Ok(export)
    }
}

fn payload_len(layers: usize, heads: usize, n: usize) -> Option<usize> {
    layers.checked_mul(heads)?.checked_mul(n)?.checked_mul(n)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model_id: String,
    num_layers: usize,
    num_heads: usize,
    seq_len: usize,
    tokens: Vec<String>,
    cls_index: usize,
    sep_indices: Vec<usize>,
    segment_ids: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicted_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<String>,
}

/// Reads and validates an `.attn` file.
pub fn load_export(path: impl AsRef<Path>) -> Result<AttentionExport<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FlowError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    AttentionExport::from_bytes(&bytes)
}

/// Writes an export; invalid exports are rejected before anything touches disk.
pub fn write_export<T: Weight>(export: &AttentionExport<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = export.to_bytes()?;
    fs::write(path, bytes).map_err(|source| FlowError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}
