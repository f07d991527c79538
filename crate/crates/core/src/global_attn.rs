//! Dense multi-head self-attention over every node embedding, followed by a
//! position-wise feed-forward block, residual connections and layer norms.

use crate::error::{Error, Result};
use crate::numerics::{concat_cols, layer_norm_rows, softmax_rows, Matrix};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Transformer weights, borrowed from the model. `D` is the fused width and
/// `d_k = D / heads`.
#[derive(Debug, Clone, Copy)]
pub struct TransformerParams<'a> {
    /// Per head, `D × d_k`.
    pub wq: &'a [Matrix],
    pub wk: &'a [Matrix],
    pub wv: &'a [Matrix],
    /// `D × D`
    pub wo: &'a Matrix,
    /// `D × f`, `1 × f`, `f × D`, `1 × D`
    pub ffn_w1: &'a Matrix,
    pub ffn_b1: &'a Matrix,
    pub ffn_w2: &'a Matrix,
    pub ffn_b2: &'a Matrix,
    pub ln1_gain: &'a Matrix,
    pub ln1_bias: &'a Matrix,
    pub ln2_gain: &'a Matrix,
    pub ln2_bias: &'a Matrix,
}

impl TransformerParams<'_> {
    pub fn heads(&self) -> usize {
        self.wq.len()
    }
}

/// Refuses graphs whose dense `N × N` attention would exceed the configured cap.
pub fn check_node_cap(nodes: usize, max_nodes: usize) -> Result<()> {
    if nodes > max_nodes {
        return Err(Error::Config(format!(
            "{nodes} nodes exceed attn.max_nodes = {max_nodes}; dense attention needs N² memory"
        )));
    }
    Ok(())
}

pub fn project_qkv(h: &Matrix, wq: &Matrix, wk: &Matrix, wv: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
    Ok((h.matmul(wq)?, h.matmul(wk)?, h.matmul(wv)?))
}

/// Row-stochastic `N × N` matrix `softmax(QKᵀ/√d_k)`.
pub fn attention_weights(q: &Matrix, k: &Matrix) -> Result<Matrix> {
    if q.cols() == 0 {
        return Err(Error::shape("attention", "d_k must be at least 1"));
    }
    let scale = 1.0 / (q.cols() as f64).sqrt();
    Ok(softmax_rows(&q.matmul_t(k)?.scale(scale)))
}

/// `softmax(QKᵀ/√d_k)·V`
pub fn attention_head(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    if k.rows() != v.rows() {
        return Err(Error::shape(
            "attention",
            format!("K {:?} vs V {:?}", k.shape(), v.shape()),
        ));
    }
    attention_weights(q, k)?.matmul(v)
}

/// `concat(head₁..head_S)·Wᵒ`, before residual and normalization.
pub fn multi_head_attention(h: &Matrix, params: &TransformerParams<'_>) -> Result<Matrix> {
    let heads = (0..params.heads())
        .map(|s| {
            let (q, k, v) = project_qkv(h, &params.wq[s], &params.wk[s], &params.wv[s])?;
            attention_head(&q, &k, &v)
        })
        .collect::<Result<Vec<_>>>()?;
    concat_cols(&heads.iter().collect::<Vec<_>>())?.matmul(params.wo)
}

pub fn feed_forward(x: &Matrix, params: &TransformerParams<'_>) -> Result<Matrix> {
    x.matmul(params.ffn_w1)?
        .add_row(params.ffn_b1)?
        .tanh()
        .matmul(params.ffn_w2)?
        .add_row(params.ffn_b2)
}

/// Full block: `out = LN(H + MHA(H))`, then `LN(out + FFN(out))`.
pub fn multi_head(h: &Matrix, params: &TransformerParams<'_>) -> Result<Matrix> {
    let d = h.cols();
    if params.heads() == 0 || d % params.heads() != 0 {
        return Err(Error::shape(
            "transformer",
            format!("{} heads do not divide width {d}", params.heads()),
        ));
    }
    let attended = h.add(&multi_head_attention(h, params)?)?;
    let out = layer_norm_rows(&attended, params.ln1_gain, params.ln1_bias, LAYER_NORM_EPS)?;
    let ff = out.add(&feed_forward(&out, params)?)?;
    layer_norm_rows(&ff, params.ln2_gain, params.ln2_bias, LAYER_NORM_EPS)
}
