//! Attribute-driven embedding, per-relation neighbor aggregation, relation
//! attention and inter-layer fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Adjacency, MultiRelationGraph};
use crate::numerics::{concat_cols, softmax_rows, Matrix};

/// How neighbor rows are pooled inside one relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Sum,
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "sum" => Ok(Aggregator::Sum),
            other => Err(Error::Config(format!("gnn.aggr must be mean or sum, got `{other}`"))),
        }
    }
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Sum => "sum",
        }
    }

    /// Weight each neighbor term receives for a node of the given degree.
    #[inline]
    pub fn weight(self, degree: usize) -> f64 {
        match self {
            Aggregator::Mean => 1.0 / degree as f64,
            Aggregator::Sum => 1.0,
        }
    }
}

/// Parameters of one aggregation layer, borrowed from the model.
#[derive(Debug, Clone, Copy)]
pub struct GnnLayerParams<'a> {
    /// Per relation, `2d × d`: projects `[neighbor pool ‖ difference pool]`.
    pub combine: &'a [Matrix],
    /// `1 × d` relation-level query vector.
    pub q: &'a Matrix,
    /// `d × d`
    pub w2: &'a Matrix,
    /// `1 × d`
    pub b: &'a Matrix,
}

/// `h⁰ = tanh(X·W₁)`. Reads node attributes only.
pub fn initial_embed(x: &Matrix, w1: &Matrix) -> Result<Matrix> {
    if x.cols() != w1.rows() {
        return Err(Error::shape(
            "initial_embed",
            format!("features {:?}, W1 {:?}", x.shape(), w1.shape()),
        ));
    }
    Ok(x.matmul(w1)?.tanh())
}

/// Pooled neighbor rows and pooled self-minus-neighbor differences,
/// concatenated as `[a ‖ b]` (`N × 2d`). Isolated nodes get zeros.
pub fn neighbor_aggregate(h: &Matrix, adj: &Adjacency, aggr: Aggregator) -> Matrix {
    let (n, d) = h.shape();
    let mut out = Matrix::zeros(n, 2 * d);
    let mut sum_a = vec![0.0; d];
    let mut sum_b = vec![0.0; d];
    for (i, neigh) in adj.iter().enumerate() {
        if neigh.is_empty() {
            continue;
        }
        sum_a.fill(0.0);
        sum_b.fill(0.0);
        let hi = h.row(i);
        for &j in neigh {
            let hj = h.row(j);
            for c in 0..d {
                sum_a[c] += hj[c];
                sum_b[c] += hi[c] - hj[c];
            }
        }
        let row = out.row_mut(i);
        match aggr {
            Aggregator::Mean => {
                let deg = neigh.len() as f64;
                for c in 0..d {
                    row[c] = sum_a[c] / deg;
                    row[d + c] = sum_b[c] / deg;
                }
            }
            Aggregator::Sum => {
                row[..d].copy_from_slice(&sum_a);
                row[d..].copy_from_slice(&sum_b);
            }
        }
    }
    out
}

/// One relation's graph convolution: `tanh([a ‖ b]·W_r)`.
pub fn intra_relation(
    h_prev: &Matrix,
    graph: &MultiRelationGraph,
    relation: usize,
    combine: &Matrix,
    aggr: Aggregator,
) -> Result<Matrix> {
    if relation >= graph.relation_count() || h_prev.rows() != graph.node_count() {
        return Err(Error::shape(
            "intra_relation",
            format!("relation {relation}, embeddings {:?}", h_prev.shape()),
        ));
    }
    intra_relation_on(h_prev, graph.adjacency(relation), combine, aggr)
}

pub(crate) fn intra_relation_on(
    h_prev: &Matrix,
    adj: &Adjacency,
    combine: &Matrix,
    aggr: Aggregator,
) -> Result<Matrix> {
    if combine.rows() != 2 * h_prev.cols() {
        return Err(Error::shape(
            "intra_relation",
            format!("embeddings {:?}, combine {:?}", h_prev.shape(), combine.shape()),
        ));
    }
    Ok(neighbor_aggregate(h_prev, adj, aggr).matmul(combine)?.tanh())
}

/// Relation importance score: mean over all nodes of `q · tanh(W₂ h + b)`.
pub fn relation_score(h: &Matrix, params: &GnnLayerParams<'_>) -> Result<f64> {
    let t = h.matmul(params.w2)?.add_row(params.b)?.tanh();
    let per_node = t.matmul_t(params.q)?;
    Ok(per_node.mean_over_rows().get(0, 0))
}

/// Blends per-relation embeddings with softmax-normalized relation scores.
/// Returns the blended matrix and the weights.
pub fn relation_attention(
    per_relation: &[Matrix],
    params: &GnnLayerParams<'_>,
) -> Result<(Matrix, Vec<f64>)> {
    if per_relation.is_empty() {
        return Err(Error::shape("relation_attention", "no relations"));
    }
    let scores = per_relation
        .iter()
        .map(|h| relation_score(h, params))
        .collect::<Result<Vec<_>>>()?;
    let alpha = softmax_rows(&Matrix::row_vector(&scores)).into_data();
    Ok((weighted_sum(per_relation, &alpha)?, alpha))
}

/// Equal weights `1/R`, used when relation attention is ablated.
pub fn uniform_relation_mix(per_relation: &[Matrix]) -> Result<(Matrix, Vec<f64>)> {
    if per_relation.is_empty() {
        return Err(Error::shape("relation_attention", "no relations"));
    }
    let alpha = vec![1.0 / per_relation.len() as f64; per_relation.len()];
    Ok((weighted_sum(per_relation, &alpha)?, alpha))
}

fn weighted_sum(parts: &[Matrix], alpha: &[f64]) -> Result<Matrix> {
    let mut out = parts[0].scale(alpha[0]);
    for (h, &a) in parts.iter().zip(alpha).skip(1) {
        out.add_assign(&h.scale(a))?;
    }
    Ok(out)
}

/// Row-wise concatenation of layer outputs `1..L`.
pub fn fuse_layers(per_layer: &[Matrix]) -> Result<Matrix> {
    let width = per_layer
        .first()
        .ok_or_else(|| Error::shape("fuse_layers", "no layers"))?
        .cols();
    if per_layer.iter().any(|h| h.cols() != width) {
        return Err(Error::shape("fuse_layers", "layer widths differ"));
    }
    concat_cols(&per_layer.iter().collect::<Vec<_>>())
}
