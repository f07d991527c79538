//! End-to-end model: parameter layout, initialization and the forward pass
//! recorded on an autodiff tape.
//!
//! The forward pass runs on the graph's canonical node order and maps every
//! result back to the caller's order, so outputs permute exactly with the
//! input nodes.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::global_attn::{check_node_cap, LAYER_NORM_EPS};
use crate::hetero_gnn::Aggregator;
use crate::ingest::{Adjacency, MultiRelationGraph};
use crate::numerics::{glorot_init, Matrix, RngState};
use crate::temporal::{base_matrix, TemporalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width `d`.
    pub dim: usize,
    pub layers: usize,
    pub aggr: Aggregator,
    /// When false the per-relation embeddings are averaged with `α = 1/R`.
    pub relation_attention: bool,
    pub temporal: TemporalConfig,
    /// When false the fused embedding goes straight to the classifier head.
    pub transformer: bool,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_nodes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 32,
            layers: 2,
            aggr: Aggregator::Mean,
            relation_attention: true,
            temporal: TemporalConfig::default(),
            transformer: true,
            heads: 4,
            ffn_mult: 4,
            max_nodes: 20_000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.temporal.validate()?;
        if self.dim == 0 || self.layers == 0 {
            return Err(Error::Config("gnn.dim and gnn.layers must be at least 1".into()));
        }
        if self.heads == 0 || self.fused_width() % self.heads != 0 {
            return Err(Error::Config(format!(
                "attn.heads = {} must divide the fused width {}",
                self.heads,
                self.fused_width()
            )));
        }
        if self.ffn_mult == 0 {
            return Err(Error::Config("attn.ffn_mult must be at least 1".into()));
        }
        Ok(())
    }

    /// `D = layers · dim`
    pub fn fused_width(&self) -> usize {
        self.layers * self.dim
    }

    pub fn head_width(&self) -> usize {
        self.fused_width() / self.heads
    }

    pub fn ffn_width(&self) -> usize {
        self.ffn_mult * self.fused_width()
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.fused_width() / 2).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// One `2d × d` projection per relation.
    pub combine: Vec<Matrix>,
    /// Relation scoring `q` (`1 × d`), `W₂` (`d × d`) and `b` (`1 × d`), shared by all relations.
    pub q: Matrix,
    pub w2: Matrix,
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `s × d`
    pub w1: Matrix,
    pub t_linear: Matrix,
    pub t_bias: Matrix,
    pub layers: Vec<LayerParams>,
    pub wq: Vec<Matrix>,
    pub wk: Vec<Matrix>,
    pub wv: Vec<Matrix>,
    pub wo: Matrix,
    pub ffn_w1: Matrix,
    pub ffn_b1: Matrix,
    pub ffn_w2: Matrix,
    pub ffn_b2: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
    /// Classifier head: `D × m`, `1 × m`, `m × 1`, `1 × 1`.
    pub head_w1: Matrix,
    pub head_b1: Matrix,
    pub head_w2: Matrix,
    pub head_b2: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Glorot,
    Zeros,
    Ones,
}

/// Name, shape and initializer of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    init: Init,
    temporal: bool,
}

/// Every parameter tensor in flat order.
pub fn layout(cfg: &ModelConfig, feature_dim: usize, relations: usize) -> Vec<TensorSpec> {
    let d = cfg.dim;
    let big_d = cfg.fused_width();
    let mut out = Vec::new();
    let mut push = |name: String, rows, cols, init, temporal| {
        out.push(TensorSpec {
            name,
            rows,
            cols,
            init,
            temporal,
        })
    };
    push("w1".into(), feature_dim, d, Init::Glorot, false);
    push("t_linear".into(), d, d, Init::Glorot, true);
    push("t_bias".into(), 1, d, Init::Zeros, true);
    for l in 0..cfg.layers {
        for r in 0..relations {
            push(format!("layer{l}.combine{r}"), 2 * d, d, Init::Glorot, false);
        }
        push(format!("layer{l}.q"), 1, d, Init::Glorot, false);
        push(format!("layer{l}.w2"), d, d, Init::Glorot, false);
        push(format!("layer{l}.b"), 1, d, Init::Zeros, false);
    }
    for kind in ["wq", "wk", "wv"] {
        for s in 0..cfg.heads {
            push(format!("attn.{kind}{s}"), big_d, cfg.head_width(), Init::Glorot, false);
        }
    }
    push("attn.wo".into(), big_d, big_d, Init::Glorot, false);
    push("attn.ffn_w1".into(), big_d, cfg.ffn_width(), Init::Glorot, false);
    push("attn.ffn_b1".into(), 1, cfg.ffn_width(), Init::Zeros, false);
    push("attn.ffn_w2".into(), cfg.ffn_width(), big_d, Init::Glorot, false);
    push("attn.ffn_b2".into(), 1, big_d, Init::Zeros, false);
    push("attn.ln1_gain".into(), 1, big_d, Init::Ones, false);
    push("attn.ln1_bias".into(), 1, big_d, Init::Zeros, false);
    push("attn.ln2_gain".into(), 1, big_d, Init::Ones, false);
    push("attn.ln2_bias".into(), 1, big_d, Init::Zeros, false);
    push("head.w1".into(), big_d, cfg.mlp_hidden(), Init::Glorot, false);
    push("head.b1".into(), 1, cfg.mlp_hidden(), Init::Zeros, false);
    push("head.w2".into(), cfg.mlp_hidden(), 1, Init::Glorot, false);
    push("head.b2".into(), 1, 1, Init::Zeros, false);
    out
}

impl ModelParams {
    /// Glorot matrices, zero biases and unit norm gains. Tensor `k` draws from
    /// its own stream split off `seed`, so changing one shape never shifts
    /// another tensor's values. With temporal encoding disabled the temporal
    /// projection and bias are zero.
    pub fn init(cfg: &ModelConfig, feature_dim: usize, relations: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if feature_dim == 0 || relations == 0 {
            return Err(Error::Config("model needs at least one feature and one relation".into()));
        }
        let root = RngState::new(seed);
        let tensors = layout(cfg, feature_dim, relations)
            .iter()
            .enumerate()
            .map(|(k, spec)| match spec.init {
                _ if spec.temporal && !cfg.temporal.enabled => Matrix::zeros(spec.rows, spec.cols),
                Init::Glorot => glorot_init(&mut root.split(k as u64), spec.rows, spec.cols),
                Init::Zeros => Matrix::zeros(spec.rows, spec.cols),
                Init::Ones => Matrix::filled(spec.rows, spec.cols, 1.0),
            })
            .collect();
        Self::from_tensors(cfg, relations, tensors)
    }

    /// Every tensor set to zero.
    pub fn zeros(cfg: &ModelConfig, feature_dim: usize, relations: usize) -> Result<Self> {
        cfg.validate()?;
        let tensors = layout(cfg, feature_dim, relations)
            .iter()
            .map(|s| Matrix::zeros(s.rows, s.cols))
            .collect();
        Self::from_tensors(cfg, relations, tensors)
    }

    /// Rebuilds the structured view from tensors in flat order. Shapes are
    /// checked against [`layout`].
    pub fn from_tensors(cfg: &ModelConfig, relations: usize, tensors: Vec<Matrix>) -> Result<Self> {
        let feature_dim = tensors.first().map_or(0, Matrix::rows);
        let specs = layout(cfg, feature_dim, relations);
        if specs.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if t.shape() != (spec.rows, spec.cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected ({}, {})",
                    spec.name,
                    t.shape(),
                    spec.rows,
                    spec.cols
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked");
        let w1 = next();
        let t_linear = next();
        let t_bias = next();
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let combine = (0..relations).map(|_| next()).collect();
            layers.push(LayerParams {
                combine,
                q: next(),
                w2: next(),
                b: next(),
            });
        }
        let wq = (0..cfg.heads).map(|_| next()).collect();
        let wk = (0..cfg.heads).map(|_| next()).collect();
        let wv = (0..cfg.heads).map(|_| next()).collect();
        Ok(ModelParams {
            w1,
            t_linear,
            t_bias,
            layers,
            wq,
            wk,
            wv,
            wo: next(),
            ffn_w1: next(),
            ffn_b1: next(),
            ffn_w2: next(),
            ffn_b2: next(),
            ln1_gain: next(),
            ln1_bias: next(),
            ln2_gain: next(),
            ln2_bias: next(),
            head_w1: next(),
            head_b1: next(),
            head_w2: next(),
            head_b2: next(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn relation_count(&self) -> usize {
        self.layers.first().map_or(0, |l| l.combine.len())
    }

    /// Tensors in flat order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.w1, &self.t_linear, &self.t_bias];
        for l in &self.layers {
            out.extend(l.combine.iter());
            out.extend([&l.q, &l.w2, &l.b]);
        }
        out.extend(self.wq.iter());
        out.extend(self.wk.iter());
        out.extend(self.wv.iter());
        out.extend([
            &self.wo,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.head_w1,
            &self.head_b1,
            &self.head_w2,
            &self.head_b2,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w1, &mut self.t_linear, &mut self.t_bias];
        for l in &mut self.layers {
            out.extend(l.combine.iter_mut());
            out.extend([&mut l.q, &mut l.w2, &mut l.b]);
        }
        out.extend(self.wq.iter_mut());
        out.extend(self.wk.iter_mut());
        out.extend(self.wv.iter_mut());
        out.extend([
            &mut self.wo,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.head_w1,
            &mut self.head_b1,
            &mut self.head_w2,
            &mut self.head_b2,
        ]);
        out
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// All parameters concatenated in flat order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn unflatten(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.scalar_count() {
            return Err(Error::Checkpoint(format!(
                "{} values for {} parameters",
                values.len(),
                self.scalar_count()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Whether each tensor is updated by training. The temporal projection is
    /// frozen when temporal encoding is disabled.
    pub fn trainable(cfg: &ModelConfig, feature_dim: usize, relations: usize) -> Vec<bool> {
        layout(cfg, feature_dim, relations)
            .iter()
            .map(|s| !(s.temporal && !cfg.temporal.enabled))
            .collect()
    }
}

/// A graph rearranged into canonical node order, plus the inputs that do not
/// depend on parameters.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    /// `order[k]` is the original id of canonical node `k`.
    order: Vec<usize>,
    /// `position[i]` is the canonical position of original node `i`.
    position: Vec<usize>,
    features: Matrix,
    base: Matrix,
    adjacency: Vec<Rc<Adjacency>>,
}

impl PreparedGraph {
    pub fn new(graph: &MultiRelationGraph, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let n = graph.node_count();
        if cfg.transformer {
            check_node_cap(n, cfg.max_nodes)?;
        }
        let order = graph.canonical_order().to_vec();
        let mut position = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            position[i] = k;
        }
        let timestamps: Vec<f64> = order.iter().map(|&i| graph.timestamps()[i]).collect();
        let adjacency = (0..graph.relation_count())
            .map(|r| {
                let adj = graph.adjacency(r);
                let canon: Adjacency = order
                    .iter()
                    .map(|&i| {
                        let mut list: Vec<usize> = adj[i].iter().map(|&j| position[j]).collect();
                        list.sort_unstable();
                        list
                    })
                    .collect();
                Rc::new(canon)
            })
            .collect();
        Ok(PreparedGraph {
            features: graph.features().select_rows(&order),
            base: base_matrix(&timestamps, cfg.dim, &cfg.temporal),
            order,
            position,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.order.len()
    }

    pub fn relation_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows of a canonical-order matrix put back in original node order.
    fn restore(&self, m: &Matrix) -> Matrix {
        m.select_rows(&self.position)
    }

    /// Canonical `(row, label)` loss targets for original node ids, sorted by
    /// canonical position. Repeated ids count repeatedly.
    pub(crate) fn targets(&self, nodes: &[usize], labels: &[f64]) -> Vec<(usize, f64)> {
        let mut t: Vec<(usize, f64)> = nodes
            .iter()
            .zip(labels)
            .map(|(&i, &y)| (self.position[i], y))
            .collect();
        t.sort_by_key(|&(k, _)| k);
        t
    }
}

/// Handles to the tape nodes of one forward pass.
pub(crate) struct TapeForward {
    pub h0: Var,
    pub h0t: Var,
    pub relation_outputs: Vec<Vec<Var>>,
    pub alphas: Vec<Var>,
    pub layer_outputs: Vec<Var>,
    pub fused: Var,
    /// Attention head outputs; their weights are held by the tape.
    pub attention: Vec<Var>,
    pub z: Var,
    pub logits: Var,
    pub probabilities: Var,
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Shape { detail, .. } => Error::Shape { stage, detail },
        other => other,
    })
}

fn ensure_finite(tape: &Tape, v: Var, stage: impl Into<String>) -> Result<()> {
    if tape.value(v).is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { stage: stage.into() })
    }
}

/// Records the whole forward pass on `tape`. Parameter tensor `k` is
/// registered as slot `k`.
pub(crate) fn forward_on_tape(
    tape: &mut Tape,
    graph: &PreparedGraph,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<TapeForward> {
    if params.feature_dim() != graph.feature_dim() || params.relation_count() != graph.relation_count() {
        return Err(Error::shape(
            "model input",
            format!(
                "parameters expect {} features and {} relations, graph has {} and {}",
                params.feature_dim(),
                params.relation_count(),
                graph.feature_dim(),
                graph.relation_count()
            ),
        ));
    }
    if params.layers.len() != cfg.layers || params.wq.len() != cfg.heads {
        return Err(Error::shape("model input", "parameters do not match the model configuration"));
    }
    let p: Vec<Var> = params
        .tensors()
        .into_iter()
        .enumerate()
        .map(|(k, t)| tape.param(k, t.clone()))
        .collect();
    let mut slot = p.iter().copied();
    let mut next = || slot.next().expect("layout");

    let x = tape.constant(graph.features.clone());
    let (w1, t_linear, t_bias) = (next(), next(), next());
    let xw = staged("initial_embed", tape.matmul(x, w1))?;
    let h0 = tape.tanh(xw);
    ensure_finite(tape, h0, "initial_embed")?;

    let base = tape.constant(graph.base.clone());
    let te = staged("temporal", tape.matmul(base, t_linear))?;
    let te = staged("temporal", tape.add_row(te, t_bias))?;
    let h0t = staged("temporal", tape.add(h0, te))?;
    ensure_finite(tape, h0t, "temporal")?;

    let relations = graph.relation_count();
    let mut h = h0t;
    let mut relation_outputs = Vec::with_capacity(cfg.layers);
    let mut alphas = Vec::with_capacity(cfg.layers);
    let mut layer_outputs = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let combine: Vec<Var> = (0..relations).map(|_| next()).collect();
        let (q, w2, b) = (next(), next(), next());
        let mut per_relation = Vec::with_capacity(relations);
        for (r, &w) in combine.iter().enumerate() {
            let agg = staged("intra_relation", tape.neighbor_aggregate(h, graph.adjacency[r].clone(), cfg.aggr))?;
            let proj = staged("intra_relation", tape.matmul(agg, w))?;
            let hr = tape.tanh(proj);
            ensure_finite(tape, hr, format!("layer{l}.relation{r}"))?;
            per_relation.push(hr);
        }
        let alpha = if cfg.relation_attention {
            let mut scores = Vec::with_capacity(relations);
            for &hr in &per_relation {
                let s = staged("relation_attention", tape.matmul(hr, w2))?;
                let s = staged("relation_attention", tape.add_row(s, b))?;
                let s = tape.tanh(s);
                let u = staged("relation_attention", tape.matmul_t(s, q, 1.0))?;
                scores.push(tape.mean_rows(u));
            }
            let w = staged("relation_attention", tape.concat(&scores))?;
            tape.softmax(w)
        } else {
            tape.constant(Matrix::filled(1, relations, 1.0 / relations as f64))
        };
        ensure_finite(tape, alpha, format!("layer{l}.relation_attention"))?;
        let mut out = staged("relation_attention", tape.scale_by_entry(per_relation[0], alpha, 0))?;
        for (r, &hr) in per_relation.iter().enumerate().skip(1) {
            let term = staged("relation_attention", tape.scale_by_entry(hr, alpha, r))?;
            out = staged("relation_attention", tape.add(out, term))?;
        }
        relation_outputs.push(per_relation);
        alphas.push(alpha);
        layer_outputs.push(out);
        h = out;
    }
    let fused = staged("fuse_layers", tape.concat(&layer_outputs))?;

    let wq: Vec<Var> = (0..cfg.heads).map(|_| next()).collect();
    let wk: Vec<Var> = (0..cfg.heads).map(|_| next()).collect();
    let wv: Vec<Var> = (0..cfg.heads).map(|_| next()).collect();
    let (wo, ffn_w1, ffn_b1, ffn_w2, ffn_b2) = (next(), next(), next(), next(), next());
    let (ln1_gain, ln1_bias, ln2_gain, ln2_bias) = (next(), next(), next(), next());
    let mut attention = Vec::new();
    let z = if cfg.transformer {
        let scale = 1.0 / (cfg.head_width() as f64).sqrt();
        let mut heads = Vec::with_capacity(cfg.heads);
        for s in 0..cfg.heads {
            let q = staged("transformer", tape.matmul(fused, wq[s]))?;
            let k = staged("transformer", tape.matmul(fused, wk[s]))?;
            let v = staged("transformer", tape.matmul(fused, wv[s]))?;
            let head = staged("transformer", tape.attention(q, k, v, scale))?;
            ensure_finite(tape, head, format!("transformer.head{s}"))?;
            attention.push(head);
            heads.push(head);
        }
        let cat = staged("transformer", tape.concat(&heads))?;
        let mha = staged("transformer", tape.matmul(cat, wo))?;
        let res = staged("transformer", tape.add(fused, mha))?;
        let out = staged("transformer", tape.layer_norm(res, ln1_gain, ln1_bias, LAYER_NORM_EPS))?;
        let f = staged("transformer", tape.matmul(out, ffn_w1))?;
        let f = staged("transformer", tape.add_row(f, ffn_b1))?;
        let f = tape.tanh(f);
        let f = staged("transformer", tape.matmul(f, ffn_w2))?;
        let f = staged("transformer", tape.add_row(f, ffn_b2))?;
        let res2 = staged("transformer", tape.add(out, f))?;
        staged("transformer", tape.layer_norm(res2, ln2_gain, ln2_bias, LAYER_NORM_EPS))?
    } else {
        fused
    };
    ensure_finite(tape, z, "transformer")?;

    let (hw1, hb1, hw2, hb2) = (next(), next(), next(), next());
    let hidden = staged("classifier", tape.matmul(z, hw1))?;
    let hidden = staged("classifier", tape.add_row(hidden, hb1))?;
    let hidden = tape.tanh(hidden);
    let logits = staged("classifier", tape.matmul(hidden, hw2))?;
    let logits = staged("classifier", tape.add_row(logits, hb2))?;
    let probabilities = tape.sigmoid(logits);
    ensure_finite(tape, probabilities, "classifier")?;

    Ok(TapeForward {
        h0,
        h0t,
        relation_outputs,
        alphas,
        layer_outputs,
        fused,
        attention,
        z,
        logits,
        probabilities,
    })
}

/// Intermediate values of one forward pass, rows in the graph's node order.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub h0: Matrix,
    /// `h0` plus the temporal encoding.
    pub h0t: Matrix,
    /// `[layer][relation]` embeddings before relation fusion.
    pub relation_outputs: Vec<Vec<Matrix>>,
    /// Relation weights per layer.
    pub alphas: Vec<Vec<f64>>,
    pub layer_outputs: Vec<Matrix>,
    pub fused: Matrix,
    /// Per-head `N × N` attention matrices, rows and columns in node order.
    /// Empty when the transformer is disabled.
    pub attention: Vec<Matrix>,
    pub z: Matrix,
    pub logits: Vec<f64>,
    /// Sigmoid of the logits, clamped into `[1e-7, 1 − 1e-7]`.
    pub probabilities: Vec<f64>,
}

pub fn forward(graph: &MultiRelationGraph, params: &ModelParams, cfg: &ModelConfig) -> Result<ForwardTrace> {
    forward_prepared(&PreparedGraph::new(graph, cfg)?, params, cfg)
}

pub fn forward_prepared(graph: &PreparedGraph, params: &ModelParams, cfg: &ModelConfig) -> Result<ForwardTrace> {
    let mut tape = Tape::new();
    let f = forward_on_tape(&mut tape, graph, params, cfg)?;
    let restore = |v: Var| graph.restore(tape.value(v));
    let attention = f
        .attention
        .iter()
        .map(|&a| {
            let rows = graph.restore(tape.attention_weights(a).expect("attention node"));
            let mut out = Matrix::zeros(rows.rows(), rows.cols());
            for i in 0..rows.rows() {
                for (j, &k) in graph.position.iter().enumerate() {
                    out.set(i, j, rows.get(i, k));
                }
            }
            out
        })
        .collect();
    let logits = restore(f.logits).into_data();
    let probabilities = restore(f.probabilities)
        .into_data()
        .into_iter()
        .map(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        .collect();
    Ok(ForwardTrace {
        h0: restore(f.h0),
        h0t: restore(f.h0t),
        relation_outputs: f
            .relation_outputs
            .iter()
            .map(|layer| layer.iter().map(|&v| restore(v)).collect())
            .collect(),
        alphas: f.alphas.iter().map(|&a| tape.value(a).data().to_vec()).collect(),
        layer_outputs: f.layer_outputs.iter().map(|&v| restore(v)).collect(),
        fused: restore(f.fused),
        attention,
        z: restore(f.z),
        logits,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::global_attn::{multi_head, TransformerParams};
    use crate::hetero_gnn::{fuse_layers, initial_embed, intra_relation, relation_attention, GnnLayerParams};
    use crate::ingest::Label;
    use crate::temporal::{inject, TemporalEncoder};

    pub(crate) fn toy_graph(n: usize, seed: u64) -> MultiRelationGraph {
        let mut rng = RngState::new(seed);
        let features = Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.next_f64()).collect()).unwrap();
        let timestamps = (0..n).map(|_| rng.uniform(0.0, 86_400.0).floor()).collect();
        let mut adjacency = vec![vec![Vec::new(); n]; 2];
        for (r, adj) in adjacency.iter_mut().enumerate() {
            for i in 0..n {
                for j in i + 1..n {
                    if rng.bernoulli(0.25 + 0.1 * r as f64) {
                        adj[i].push(j);
                        adj[j].push(i);
                    }
                }
            }
        }
        let labels = (0..n).map(|i| if i % 3 == 0 { Label::Fraud } else { Label::Legit }).collect();
        MultiRelationGraph::new(
            vec!["ip".into(), "mac".into()],
            adjacency,
            features,
            timestamps,
            labels,
            (0..n).map(|i| i % 2 == 0).collect(),
            (0..n).map(|i| i % 2 == 1).collect(),
        )
        .unwrap()
    }

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            dim: 4,
            layers: 2,
            heads: 2,
            ffn_mult: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn layout_matches_structured_view() {
        let cfg = small_cfg();
        let p = ModelParams::init(&cfg, 3, 2, 1).unwrap();
        let specs = layout(&cfg, 3, 2);
        assert_eq!(specs.len(), p.tensor_count());
        for (s, t) in specs.iter().zip(p.tensors()) {
            assert_eq!((s.rows, s.cols), t.shape(), "{}", s.name);
        }
        assert_eq!(p.layers[1].combine[1].shape(), (8, 4));
        assert_eq!(p.wq[1].shape(), (8, 4));
        assert_eq!(p.head_w1.shape(), (8, 4));
    }

    #[test]
    fn flatten_round_trip() {
        let cfg = small_cfg();
        let p = ModelParams::init(&cfg, 3, 2, 5).unwrap();
        let flat = p.flatten();
        let mut q = ModelParams::zeros(&cfg, 3, 2).unwrap();
        q.unflatten(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.unflatten(&flat[1..]).is_err());
        let again = ModelParams::from_tensors(&cfg, 2, p.tensors().into_iter().cloned().collect()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn init_is_seeded_and_per_tensor() {
        let cfg = small_cfg();
        let a = ModelParams::init(&cfg, 3, 2, 9).unwrap();
        assert_eq!(a, ModelParams::init(&cfg, 3, 2, 9).unwrap());
        assert_ne!(a, ModelParams::init(&cfg, 3, 2, 10).unwrap());
        assert_eq!(a.ln1_gain, Matrix::filled(1, 8, 1.0));
        assert_eq!(a.head_b2, Matrix::zeros(1, 1));
        let off = ModelConfig {
            temporal: TemporalConfig {
                enabled: false,
                ..TemporalConfig::default()
            },
            ..cfg
        };
        let b = ModelParams::init(&off, 3, 2, 9).unwrap();
        assert_eq!(b.t_linear, Matrix::zeros(4, 4));
        assert_eq!(b.w1, a.w1);
        assert_eq!(b.head_w2, a.head_w2);
        assert_eq!(ModelParams::trainable(&off, 3, 2)[1..3], [false, false]);
    }

    #[test]
    fn zero_params_predict_one_half() {
        let cfg = small_cfg();
        let g = toy_graph(7, 2);
        let trace = forward(&g, &ModelParams::zeros(&cfg, 3, 2).unwrap(), &cfg).unwrap();
        assert!(trace.probabilities.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn matches_composition_of_stage_functions() {
        let cfg = small_cfg();
        let g = toy_graph(9, 3);
        let p = ModelParams::init(&cfg, 3, 2, 4).unwrap();
        let trace = forward(&g, &p, &cfg).unwrap();

        let h0 = initial_embed(g.features(), &p.w1).unwrap();
        let enc = TemporalEncoder::new(cfg.temporal.clone(), p.t_linear.clone(), p.t_bias.clone()).unwrap();
        let mut h = inject(&h0, &enc, g.timestamps()).unwrap();
        let mut layers = Vec::new();
        for lp in &p.layers {
            let per: Vec<Matrix> = (0..2)
                .map(|r| intra_relation(&h, &g, r, &lp.combine[r], cfg.aggr).unwrap())
                .collect();
            let params = GnnLayerParams {
                combine: &lp.combine,
                q: &lp.q,
                w2: &lp.w2,
                b: &lp.b,
            };
            h = relation_attention(&per, &params).unwrap().0;
            layers.push(h.clone());
        }
        let fused = fuse_layers(&layers).unwrap();
        let tp = TransformerParams {
            wq: &p.wq,
            wk: &p.wk,
            wv: &p.wv,
            wo: &p.wo,
            ffn_w1: &p.ffn_w1,
            ffn_b1: &p.ffn_b1,
            ffn_w2: &p.ffn_w2,
            ffn_b2: &p.ffn_b2,
            ln1_gain: &p.ln1_gain,
            ln1_bias: &p.ln1_bias,
            ln2_gain: &p.ln2_gain,
            ln2_bias: &p.ln2_bias,
        };
        let z = multi_head(&fused, &tp).unwrap();
        let logits = z
            .matmul(&p.head_w1)
            .unwrap()
            .add_row(&p.head_b1)
            .unwrap()
            .tanh()
            .matmul(&p.head_w2)
            .unwrap()
            .add_row(&p.head_b2)
            .unwrap();
        for (a, b) in trace.logits.iter().zip(logits.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (a, b) in trace.h0.data().iter().zip(h0.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn ablations_change_the_pipeline() {
        let g = toy_graph(8, 6);
        let cfg = small_cfg();
        let p = ModelParams::init(&cfg, 3, 2, 1).unwrap();
        let no_tf = ModelConfig {
            transformer: false,
            ..cfg.clone()
        };
        let t = forward(&g, &p, &no_tf).unwrap();
        assert!(t.attention.is_empty());
        assert_eq!(t.z, t.fused);
        let uniform = ModelConfig {
            relation_attention: false,
            ..cfg
        };
        let t = forward(&g, &p, &uniform).unwrap();
        assert!(t.alphas.iter().all(|a| a == &vec![0.5, 0.5]));
    }

    #[test]
    fn stage_names_reach_shape_errors() {
        let cfg = small_cfg();
        let g = toy_graph(6, 1);
        let p = ModelParams::init(&cfg, 4, 2, 1).unwrap();
        let err = forward(&g, &p, &cfg).unwrap_err();
        assert!(err.to_string().contains("model input"), "{err}");
    }

    #[test]
    fn node_cap_is_enforced() {
        let cfg = ModelConfig {
            max_nodes: 5,
            ..small_cfg()
        };
        assert!(PreparedGraph::new(&toy_graph(6, 1), &cfg).is_err());
        let no_tf = ModelConfig {
            transformer: false,
            ..cfg
        };
        assert!(PreparedGraph::new(&toy_graph(6, 1), &no_tf).is_ok());
    }

    #[test]
    fn non_finite_parameters_name_the_stage() {
        let cfg = small_cfg();
        let g = toy_graph(6, 1);
        let mut p = ModelParams::init(&cfg, 3, 2, 1).unwrap();
        p.layers[0].combine[1].set(0, 0, f64::NAN);
        match forward(&g, &p, &cfg).unwrap_err() {
            Error::NonFinite { stage } => assert_eq!(stage, "layer0.relation1"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn attention_restored_to_node_order() {
        let cfg = small_cfg();
        let g = toy_graph(7, 8);
        let p = ModelParams::init(&cfg, 3, 2, 2).unwrap();
        let t = forward(&g, &p, &cfg).unwrap();
        let perm: Vec<usize> = (0..7).rev().collect();
        let t2 = forward(&g.permuted(&perm).unwrap(), &p, &cfg).unwrap();
        for (a, b) in t.attention.iter().zip(&t2.attention) {
            for i in 0..7 {
                for j in 0..7 {
                    assert_eq!(a.get(perm[i], perm[j]), b.get(i, j));
                }
            }
        }
    }
}
