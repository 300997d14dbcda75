use nalgebra::DMatrix;

use super::{Result, SummarizationError};

/// Rows are token positions, columns model dimensions.
pub type TokenMatrix = DMatrix<f64>;

/// Projection weights of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    /// `d_model × d_k`
    pub w_q: TokenMatrix,
    /// `d_model × d_k`
    pub w_k: TokenMatrix,
    /// `d_model × d_v`
    pub w_v: TokenMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    heads: Vec<AttentionHead>,
}

impl AttentionWeights {
    pub fn new(heads: Vec<AttentionHead>) -> Result<Self> {
        let Some(first) = heads.first() else {
            return Err(SummarizationError::Shape("at least one head is required".into()));
        };
        let d_model = first.w_q.nrows();
        let d_k = first.w_q.ncols();
        let d_v = first.w_v.ncols();
        if d_k == 0 || d_v == 0 || d_model == 0 {
            return Err(SummarizationError::Shape("zero-sized projection".into()));
        }
        for (h, head) in heads.iter().enumerate() {
            if head.w_q.shape() != (d_model, d_k)
                || head.w_k.shape() != (d_model, d_k)
                || head.w_v.shape() != (d_model, d_v)
            {
                return Err(SummarizationError::Shape(format!(
                    "head {h}: W_Q {:?}, W_K {:?}, W_V {:?}; expected ({d_model}, {d_k}) and ({d_model}, {d_v})",
                    head.w_q.shape(),
                    head.w_k.shape(),
                    head.w_v.shape()
                )));
            }
            for m in [&head.w_q, &head.w_k, &head.w_v] {
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(SummarizationError::NonFinite("attention weights"));
                }
            }
        }
        Ok(AttentionWeights { heads })
    }

    pub fn heads(&self) -> &[AttentionHead] {
        &self.heads
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn d_model(&self) -> usize {
        self.heads[0].w_q.nrows()
    }

    pub fn d_k(&self) -> usize {
        self.heads[0].w_q.ncols()
    }

    pub fn d_v(&self) -> usize {
        self.heads[0].w_v.ncols()
    }
}

fn check_finite(m: &TokenMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SummarizationError::NonFinite(what))
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(logits: &TokenMatrix) -> TokenMatrix {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x = (*x - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

/// `softmax(Q·Kᵀ / √d_k)·V`.
pub fn scaled_dot_attention(q: &TokenMatrix, k: &TokenMatrix, v: &TokenMatrix) -> Result<TokenMatrix> {
    if q.ncols() != k.ncols() || q.ncols() == 0 {
        return Err(SummarizationError::Shape(format!("Q has {} columns, K has {}", q.ncols(), k.ncols())));
    }
    if k.nrows() != v.nrows() || k.nrows() == 0 {
        return Err(SummarizationError::Shape(format!("K has {} rows, V has {}", k.nrows(), v.nrows())));
    }
    check_finite(q, "Q")?;
    check_finite(k, "K")?;
    check_finite(v, "V")?;
    let scores = (q * k.transpose()) / (q.ncols() as f64).sqrt();
    Ok(softmax_rows(&scores) * v)
}

fn check_input(x: &TokenMatrix, d_model: usize, what: &'static str) -> Result<()> {
    if x.ncols() != d_model || x.nrows() == 0 {
        return Err(SummarizationError::Shape(format!(
            "{what} is {:?}, expected (n, {d_model}) with n ≥ 1",
            x.shape()
        )));
    }
    check_finite(x, what)
}

/// One head of self-attention over `x`.
pub fn self_attention(x: &TokenMatrix, head: &AttentionHead) -> Result<TokenMatrix> {
    scaled_dot_attention(&(x * &head.w_q), &(x * &head.w_k), &(x * &head.w_v))
}

/// `Z = Σ_h Attention(X; W_Q_h, W_K_h, W_V_h) + positional`.
///
/// Requires `d_v = d_model` so the head outputs and `positional` share
/// `X`'s shape.
pub fn encode(x: &TokenMatrix, weights: &AttentionWeights, positional: &TokenMatrix) -> Result<TokenMatrix> {
    check_input(x, weights.d_model(), "X")?;
    if positional.shape() != x.shape() {
        return Err(SummarizationError::Shape(format!(
            "positional is {:?}, X is {:?}",
            positional.shape(),
            x.shape()
        )));
    }
    check_finite(positional, "positional")?;
    if weights.d_v() != weights.d_model() {
        return Err(SummarizationError::Shape(format!(
            "encoder needs d_v = d_model, got {} and {}",
            weights.d_v(),
            weights.d_model()
        )));
    }
    let mut z = positional.clone();
    for head in weights.heads() {
        z += self_attention(x, head)?;
    }
    Ok(z)
}

/// One head of cross-attention: queries from the prefix, keys and values
/// from the encoder output.
pub fn cross_attention(z: &TokenMatrix, prefix: &TokenMatrix, head: &AttentionHead) -> Result<TokenMatrix> {
    let d_model = head.w_q.nrows();
    check_input(z, d_model, "Z")?;
    check_input(prefix, d_model, "prefix")?;
    scaled_dot_attention(&(prefix * &head.w_q), &(z * &head.w_k), &(z * &head.w_v))
}

/// Distribution over the vocabulary for the next token: the last prefix
/// row of `Σ_h CrossAttention(Z, Y_<i)` is projected through
/// `vocab_projection` (`d_v × vocab`) and softmax-normalized.
pub fn decode_step(
    z: &TokenMatrix,
    prefix: &TokenMatrix,
    weights: &AttentionWeights,
    vocab_projection: &TokenMatrix,
) -> Result<Vec<f64>> {
    if vocab_projection.nrows() != weights.d_v() || vocab_projection.ncols() == 0 {
        return Err(SummarizationError::Shape(format!(
            "vocab projection is {:?}, expected ({}, vocab ≥ 1)",
            vocab_projection.shape(),
            weights.d_v()
        )));
    }
    check_finite(vocab_projection, "vocab projection")?;
    let mut summed = TokenMatrix::zeros(prefix.nrows(), weights.d_v());
    for head in weights.heads() {
        summed += cross_attention(z, prefix, head)?;
    }
    let last = summed.rows(summed.nrows() - 1, 1).into_owned();
    let probs = softmax_rows(&(last * vocab_projection));
    Ok(probs.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(r: usize, c: usize, v: &[f64]) -> TokenMatrix {
        TokenMatrix::from_row_slice(r, c, v)
    }

    fn head(d_model: usize, d_k: usize, d_v: usize, seed: f64) -> AttentionHead {
        let f = |i: usize, j: usize, s: f64| ((i * 7 + j * 3) as f64 * 0.37 + s).sin();
        AttentionHead {
            w_q: TokenMatrix::from_fn(d_model, d_k, |i, j| f(i, j, seed)),
            w_k: TokenMatrix::from_fn(d_model, d_k, |i, j| f(i, j, seed + 1.0)),
            w_v: TokenMatrix::from_fn(d_model, d_v, |i, j| f(i, j, seed + 2.0)),
        }
    }

    #[test]
    fn single_key_returns_value_row() {
        let q = m(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        let k = m(1, 3, &[0.2, 0.1, -0.4]);
        let v = m(1, 2, &[7.0, -3.0]);
        let out = scaled_dot_attention(&q, &k, &v).unwrap();
        assert_eq!(out, m(2, 2, &[7.0, -3.0, 7.0, -3.0]));
    }

    #[test]
    fn zero_queries_average_values() {
        let q = TokenMatrix::zeros(2, 3);
        let k = m(3, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0, 5.0, 5.0, 5.0]);
        let v = m(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 9.0]);
        let out = scaled_dot_attention(&q, &k, &v).unwrap();
        for r in 0..2 {
            assert!((out[(r, 0)] - 3.0).abs() < 1e-15);
            assert!((out[(r, 1)] - 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let a = TokenMatrix::zeros(2, 3);
        assert!(scaled_dot_attention(&a, &TokenMatrix::zeros(2, 4), &a).is_err());
        assert!(scaled_dot_attention(&a, &a, &TokenMatrix::zeros(3, 3)).is_err());
        let w = AttentionWeights::new(vec![head(3, 2, 3, 0.0)]).unwrap();
        assert!(encode(&a, &w, &TokenMatrix::zeros(3, 3)).is_err());
        assert!(encode(&TokenMatrix::zeros(2, 4), &w, &TokenMatrix::zeros(2, 4)).is_err());
        assert!(decode_step(&a, &a, &w, &TokenMatrix::zeros(2, 5)).is_err());
        assert!(AttentionWeights::new(vec![]).is_err());
        assert!(AttentionWeights::new(vec![head(3, 2, 3, 0.0), head(3, 3, 3, 0.0)]).is_err());
        let nan = m(1, 3, &[f64::NAN, 0.0, 0.0]);
        assert!(matches!(encode(&nan, &w, &nan), Err(SummarizationError::NonFinite(_))));
    }

    #[test]
    fn encode_uniform_attention_gives_column_mean() {
        let w = AttentionWeights::new(vec![AttentionHead {
            w_q: TokenMatrix::zeros(2, 2),
            w_k: TokenMatrix::zeros(2, 2),
            w_v: TokenMatrix::identity(2, 2),
        }])
        .unwrap();
        let x = m(3, 2, &[1.0, 0.0, 2.0, 4.0, 6.0, 2.0]);
        let z = encode(&x, &w, &TokenMatrix::zeros(3, 2)).unwrap();
        for r in 0..3 {
            assert!((z[(r, 0)] - 3.0).abs() < 1e-15);
            assert!((z[(r, 1)] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_zero_input_is_positional() {
        let w = AttentionWeights::new(vec![head(4, 3, 4, 0.3), head(4, 3, 4, 1.1)]).unwrap();
        let p = TokenMatrix::from_fn(5, 4, |i, j| (i as f64) - (j as f64) * 0.5);
        assert_eq!(encode(&TokenMatrix::zeros(5, 4), &w, &p).unwrap(), p);
    }

    #[test]
    fn decode_degenerate_vocab_and_single_row_memory() {
        let w = AttentionWeights::new(vec![head(3, 2, 4, 0.7)]).unwrap();
        let z = m(1, 3, &[0.5, -1.0, 2.0]);
        let prefix = TokenMatrix::from_fn(3, 3, |i, j| (i + j) as f64);
        assert_eq!(decode_step(&z, &prefix, &w, &TokenMatrix::from_element(4, 1, 0.3)).unwrap(), vec![1.0]);

        let h = &w.heads()[0];
        let expected = &z * &h.w_v;
        let other = TokenMatrix::from_fn(2, 3, |i, j| (i as f64 * 3.0 - j as f64).cos());
        for p in [&prefix, &other] {
            let out = cross_attention(&z, p, h).unwrap();
            for r in 0..out.nrows() {
                assert_eq!(out.row(r), expected.row(0));
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-700.0f64..700.0, 1..40), cols in 1usize..6) {
            let rows = vals.len().div_ceil(cols);
            let mut padded = vals.clone();
            padded.resize(rows * cols, 0.0);
            let s = softmax_rows(&TokenMatrix::from_row_slice(rows, cols, &padded));
            for r in s.row_iter() {
                prop_assert!((r.sum() - 1.0).abs() < 1e-9);
                prop_assert!(r.iter().all(|x| x.is_finite() && *x >= 0.0));
            }
        }

        #[test]
        fn decode_is_a_distribution(seed in -3.0f64..3.0, n in 1usize..8, vocab in 1usize..10) {
            let w = AttentionWeights::new(vec![head(4, 3, 5, seed), head(4, 3, 5, seed * 2.0)]).unwrap();
            let z = TokenMatrix::from_fn(n, 4, |i, j| ((i * 4 + j) as f64 + seed).sin() * 3.0);
            let prefix = TokenMatrix::from_fn(2, 4, |i, j| ((i + j) as f64 * seed).cos());
            let proj = TokenMatrix::from_fn(5, vocab, |i, j| ((i * vocab + j) as f64 * 0.9).sin());
            let p = decode_step(&z, &prefix, &w, &proj).unwrap();
            prop_assert_eq!(p.len(), vocab);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(p, decode_step(&z, &prefix, &w, &proj).unwrap());
        }
    }
}
