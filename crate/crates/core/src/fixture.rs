//! Small hand-written exports and a seeded synthetic generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Weight;
use crate::store::{AttentionExport, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub layers: usize,
    pub heads: usize,
    pub seq_len: usize,
}

fn tokens(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn t1_sequence() -> TokenSequence {
    TokenSequence::new(tokens(&["[CLS]", "a", "b"]), 0, vec![], vec![1, 1, 1])
        .expect("valid sequence")
}

/// Two layers, one head, three tokens.
///
/// ```text
/// matrix 1: [0.8 0.1 0.1]   matrix 2: [0.5 0.4 0.1]
///           [0.2 0.7 0.1]             [0.2 0.6 0.2]
///           [0.25 0.25 0.5]           [0.1 0.1 0.8]
/// ```
pub fn t1() -> AttentionExport<f32> {
    #[rustfmt::skip]
    let weights = vec![
        0.8, 0.1, 0.1,
        0.2, 0.7, 0.1,
        0.25, 0.25, 0.5,
        0.5, 0.4, 0.1,
        0.2, 0.6, 0.2,
        0.1, 0.1, 0.8,
    ];
    AttentionExport::new("t1", 2, 1, t1_sequence(), weights).expect("valid fixture")
}

/// [`t1`] with row 0 of matrix 1 replaced by `[0.25, 0.4, 0.35]`.
pub fn t1_variant() -> AttentionExport<f32> {
    let mut weights = t1().attention().to_vec();
    weights[0..3].copy_from_slice(&[0.25, 0.4, 0.35]);
    AttentionExport::new("t1-variant", 2, 1, t1_sequence(), weights).expect("valid fixture")
}

/// Placeholder pair framing for `n` tokens: `[CLS] t1 .. [SEP] .. [SEP]`.
pub fn placeholder_sequence(n: usize) -> TokenSequence {
    assert!(n > 0, "sequence must be non-empty");
    match n {
        1 => TokenSequence::new(tokens(&["[CLS]"]), 0, vec![], vec![1]),
        2 => TokenSequence::new(tokens(&["[CLS]", "[SEP]"]), 0, vec![1], vec![1, 1]),
        _ => {
            let words = n - 3;
            let first: Vec<String> = (1..=words.div_ceil(2)).map(|i| format!("t{i}")).collect();
            let second: Vec<String> = (first.len() + 1..=words).map(|i| format!("t{i}")).collect();
            Ok(TokenSequence::from_pair(&first, &second))
        }
    }
    .expect("valid placeholder sequence")
}

/// Every row is `1/n` everywhere.
pub fn uniform<T: Weight>(shape: &Shape) -> AttentionExport<T> {
    let n = shape.seq_len;
    let w = T::one() / T::from_usize(n).expect("n fits");
    let weights = vec![w; shape.layers * shape.heads * n * n];
    AttentionExport::new("uniform", shape.layers, shape.heads, placeholder_sequence(n), weights)
        .expect("uniform rows are stochastic")
}

/// Every row is one-hot on its own position.
pub fn identity<T: Weight>(shape: &Shape) -> AttentionExport<T> {
    let n = shape.seq_len;
    let mut weights = vec![T::zero(); shape.layers * shape.heads * n * n];
    for block in weights.chunks_exact_mut(n * n) {
        for i in 0..n {
            block[i * n + i] = T::one();
        }
    }
    AttentionExport::new("identity", shape.layers, shape.heads, placeholder_sequence(n), weights)
        .expect("identity rows are stochastic")
}

/// Seeded synthetic export.
///
/// A `ChaCha8Rng` seeded with `seed` is walked over rows in
/// `[matrix][head][row]` order. For each row, `n` draws `u ∈ [0, 1)` become
/// raw weights `u³ + 10⁻³`, which are divided by their sum in `f64` and
/// stored as `f32`. Cubing skews rows toward a few large entries, as trained
/// attention tends to be.
pub fn synthetic(shape: &Shape, seed: u64) -> AttentionExport<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.seq_len;
    let mut weights = Vec::with_capacity(shape.layers * shape.heads * n * n);
    let mut raw = vec![0.0f64; n];
    for _ in 0..shape.layers * shape.heads * n {
        for r in raw.iter_mut() {
            let u: f64 = rng.gen();
            *r = u * u * u + 1e-3;
        }
        let sum: f64 = raw.iter().sum();
        weights.extend(raw.iter().map(|r| (r / sum) as f32));
    }
    AttentionExport::new(
        format!("synthetic-{seed}"),
        shape.layers,
        shape.heads,
        placeholder_sequence(n),
        weights,
    )
    .expect("normalized rows are stochastic")
}

/// Builds an export from explicit per-row weights, one closure call per
/// `(matrix, head, row)`; handy for hand-built test cases.
pub fn from_fn<T: Weight>(
    shape: &Shape,
    mut row: impl FnMut(usize, usize, usize) -> Vec<T>,
) -> crate::error::Result<AttentionExport<T>> {
    let n = shape.seq_len;
    let mut weights = Vec::with_capacity(shape.layers * shape.heads * n * n);
    for m in 1..=shape.layers {
        for h in 1..=shape.heads {
            for a in 0..n {
                let r = row(m, h, a);
                assert_eq!(r.len(), n, "row length");
                weights.extend(r);
            }
        }
    }
    AttentionExport::new("custom", shape.layers, shape.heads, placeholder_sequence(n), weights)
}
