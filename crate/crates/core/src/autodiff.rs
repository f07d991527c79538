//! Minimal reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation of one forward pass together with its
//! value. [`Tape::backward`] walks the records in reverse and returns the
//! gradient of a scalar output with respect to each registered parameter.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::hetero_gnn::{neighbor_aggregate, Aggregator};
use crate::ingest::Adjacency;
use crate::numerics::{
    concat_cols, dot, layer_norm_rows_cached, sigmoid, softmax_in_place, softmax_rows, LayerNormCache, Matrix,
};

/// Lower clamp applied to probabilities inside the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ · scale`
    MatMulT(Var, Var, f64),
    Add(Var, Var),
    AddRow(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    /// `x · s[0, col]`
    ScaleByEntry(Var, Var, usize),
    Concat(Vec<Var>),
    Softmax(Var),
    LayerNorm(Var, Var, Var, LayerNormCache),
    NeighborAgg(Var, Rc<Adjacency>, Aggregator),
    MeanRows(Var),
    /// `softmax(Q·Kᵀ·scale)·V`; keeps the attention weights for backward.
    Attention {
        q: Var,
        k: Var,
        v: Var,
        scale: f64,
        weights: Matrix,
    },
    /// Summed binary cross-entropy of probabilities against `(row, label)` targets.
    Bce(Var, Rc<Vec<(usize, f64)>>),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Registers a differentiable leaf under parameter slot `index`.
    pub fn param(&mut self, index: usize, value: Matrix) -> Var {
        self.push(value, Op::Param(index), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let g = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), g))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var, scale: f64) -> Result<Var> {
        let mut value = self.value(a).matmul_t(self.value(b))?;
        if scale != 1.0 {
            value.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        let g = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMulT(a, b, scale), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let g = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), g))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(bias))?;
        let g = self.needs(&[x, bias]);
        Ok(self.push(value, Op::AddRow(x, bias), g))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).tanh();
        let g = self.needs(&[x]);
        self.push(value, Op::Tanh(x), g)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).sigmoid();
        let g = self.needs(&[x]);
        self.push(value, Op::Sigmoid(x), g)
    }

    pub fn scale_by_entry(&mut self, x: Var, s: Var, col: usize) -> Result<Var> {
        let sv = self.value(s);
        if sv.rows() != 1 || col >= sv.cols() {
            return Err(Error::shape("scale_by_entry", format!("entry {col} of {:?}", sv.shape())));
        }
        let value = self.value(x).scale(sv.get(0, col));
        let g = self.needs(&[x, s]);
        Ok(self.push(value, Op::ScaleByEntry(x, s, col), g))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let value = concat_cols(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>())?;
        let g = self.needs(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), g))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x));
        let g = self.needs(&[x]);
        self.push(value, Op::Softmax(x), g)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (value, cache) = layer_norm_rows_cached(self.value(x), self.value(gain), self.value(bias), eps)?;
        let g = self.needs(&[x, gain, bias]);
        Ok(self.push(value, Op::LayerNorm(x, gain, bias, cache), g))
    }

    pub fn neighbor_aggregate(&mut self, h: Var, adj: Rc<Adjacency>, aggr: Aggregator) -> Result<Var> {
        if adj.len() != self.value(h).rows() {
            return Err(Error::shape(
                "neighbor_aggregate",
                format!("{} neighbor lists for {} rows", adj.len(), self.value(h).rows()),
            ));
        }
        let value = neighbor_aggregate(self.value(h), &adj, aggr);
        let g = self.needs(&[h]);
        Ok(self.push(value, Op::NeighborAgg(h, adj, aggr), g))
    }

    /// Scaled dot-product attention computed row by row; only the `N × N`
    /// weight matrix is stored.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, scale: f64) -> Result<Var> {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        if qm.cols() != km.cols() || km.rows() != vm.rows() {
            return Err(Error::shape(
                "attention",
                format!("Q {:?}, K {:?}, V {:?}", qm.shape(), km.shape(), vm.shape()),
            ));
        }
        let (n, m) = (qm.rows(), km.rows());
        let mut weights = Matrix::zeros(n, m);
        let mut out = Matrix::zeros(n, vm.cols());
        for i in 0..n {
            let qi = qm.row(i);
            let row = weights.row_mut(i);
            for (j, w) in row.iter_mut().enumerate() {
                *w = dot(qi, km.row(j)) * scale;
            }
            softmax_in_place(row);
            let oi = out.row_mut(i);
            for (j, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (o, &x) in oi.iter_mut().zip(vm.row(j)) {
                    *o += w * x;
                }
            }
        }
        let g = self.needs(&[q, k, v]);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                scale,
                weights,
            },
            g,
        ))
    }

    /// Attention weights recorded by [`Tape::attention`].
    pub fn attention_weights(&self, v: Var) -> Option<&Matrix> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let value = self.value(x).mean_over_rows();
        let g = self.needs(&[x]);
        self.push(value, Op::MeanRows(x), g)
    }

    /// `−Σ [y·ln P + (1−y)·ln(1−P)]` over `targets`, with `P` clamped to
    /// `[PROB_CLAMP, 1 − PROB_CLAMP]`. `probs` must be a column vector.
    pub fn bce(&mut self, probs: Var, targets: Rc<Vec<(usize, f64)>>) -> Result<Var> {
        let p = self.value(probs);
        if p.cols() != 1 || targets.iter().any(|&(i, _)| i >= p.rows()) {
            return Err(Error::shape("loss", format!("probabilities {:?}", p.shape())));
        }
        let loss = bce_value(p, &targets);
        let g = self.needs(&[probs]);
        Ok(self.push(Matrix::filled(1, 1, loss), Op::Bce(probs, targets), g))
    }

    /// Gradients of the scalar `output` for parameter slots `0..param_count`.
    /// Slots the output does not depend on come back as `None`.
    pub fn backward(&self, output: Var, param_count: usize) -> Result<Vec<Option<Matrix>>> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::shape("backward", "output must be a scalar"));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut params: Vec<Option<Matrix>> = (0..param_count).map(|_| None).collect();

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => accumulate(&mut params[*slot], g)?,
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let da = g.matmul_t(self.value(*b))?;
                        self.acc(&mut grads, *a, da)?;
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = self.value(*a).t_matmul(&g)?;
                        self.acc(&mut grads, *b, db)?;
                    }
                }
                Op::MatMulT(a, b, scale) => {
                    let gs = if *scale != 1.0 { g.scale(*scale) } else { g };
                    if self.nodes[a.0].needs_grad {
                        let da = gs.matmul(self.value(*b))?;
                        self.acc(&mut grads, *a, da)?;
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = gs.t_matmul(self.value(*a))?;
                        self.acc(&mut grads, *b, db)?;
                    }
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, g.clone())?;
                    self.acc(&mut grads, *b, g)?;
                }
                Op::AddRow(x, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.acc(&mut grads, *bias, db)?;
                    self.acc(&mut grads, *x, g)?;
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let dx = g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv));
                    self.acc(&mut grads, *x, dx)?;
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv));
                    self.acc(&mut grads, *x, dx)?;
                }
                Op::ScaleByEntry(x, s, col) => {
                    let sv = self.value(*s).get(0, *col);
                    if self.nodes[s.0].needs_grad {
                        let xv = self.value(*x);
                        let total: f64 = g.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
                        let mut ds = Matrix::zeros(1, self.value(*s).cols());
                        ds.set(0, *col, total);
                        self.acc(&mut grads, *s, ds)?;
                    }
                    self.acc(&mut grads, *x, g.scale(sv))?;
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if self.nodes[p.0].needs_grad {
                            self.acc(&mut grads, *p, g.slice_cols(start, w))?;
                        }
                        start += w;
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (&yv, &gv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - inner);
                        }
                    }
                    self.acc(&mut grads, *x, dx)?;
                }
                Op::LayerNorm(x, gain, bias, cache) => {
                    let (rows, cols) = g.shape();
                    let gv = self.value(*gain);
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dbias = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    let n = cols as f64;
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..rows {
                        let (gr, xhat) = (g.row(r), cache.normalized.row(r));
                        for c in 0..cols {
                            dgain.data_mut()[c] += gr[c] * xhat[c];
                            dbias.data_mut()[c] += gr[c];
                            dxhat[c] = gr[c] * gv.data()[c];
                        }
                        let sum: f64 = dxhat.iter().sum();
                        let dot: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum();
                        let istd = cache.inv_std[r];
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = istd * (dxhat[c] - sum / n - xhat[c] * dot / n);
                        }
                    }
                    self.acc(&mut grads, *gain, dgain)?;
                    self.acc(&mut grads, *bias, dbias)?;
                    self.acc(&mut grads, *x, dx)?;
                }
                Op::NeighborAgg(h, adj, aggr) => {
                    let d = self.value(*h).cols();
                    let mut dh = Matrix::zeros(adj.len(), d);
                    for (i, neigh) in adj.iter().enumerate() {
                        if neigh.is_empty() {
                            continue;
                        }
                        let w = aggr.weight(neigh.len());
                        let gr = g.row(i);
                        let (ga, gb) = gr.split_at(d);
                        for &j in neigh {
                            for (o, (&a, &b)) in dh.row_mut(j).iter_mut().zip(ga.iter().zip(gb)) {
                                *o += w * (a - b);
                            }
                        }
                        let self_w = w * neigh.len() as f64;
                        for (o, &b) in dh.row_mut(i).iter_mut().zip(gb) {
                            *o += self_w * b;
                        }
                    }
                    self.acc(&mut grads, *h, dh)?;
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    scale,
                    weights,
                } => {
                    let (qm, km, vm) = (self.value(*q), self.value(*k), self.value(*v));
                    let (n, m) = weights.shape();
                    let mut dq = Matrix::zeros(n, qm.cols());
                    let mut dk = Matrix::zeros(m, km.cols());
                    let mut dv = Matrix::zeros(m, vm.cols());
                    let mut ds = vec![0.0; m];
                    for i in 0..n {
                        let (a, go) = (weights.row(i), g.row(i));
                        for (j, d) in ds.iter_mut().enumerate() {
                            *d = dot(go, vm.row(j));
                        }
                        let inner = dot(&ds, a);
                        let qi = qm.row(i);
                        for j in 0..m {
                            let aij = a[j];
                            if aij == 0.0 {
                                continue;
                            }
                            for (o, &x) in dv.row_mut(j).iter_mut().zip(go) {
                                *o += aij * x;
                            }
                            let s = aij * (ds[j] - inner) * scale;
                            for (o, &x) in dq.row_mut(i).iter_mut().zip(km.row(j)) {
                                *o += s * x;
                            }
                            for (o, &x) in dk.row_mut(j).iter_mut().zip(qi) {
                                *o += s * x;
                            }
                        }
                    }
                    self.acc(&mut grads, *q, dq)?;
                    self.acc(&mut grads, *k, dk)?;
                    self.acc(&mut grads, *v, dv)?;
                }
                Op::MeanRows(x) => {
                    let rows = self.value(*x).rows();
                    let inv = 1.0 / rows as f64;
                    let mut dx = Matrix::zeros(rows, g.cols());
                    for r in 0..rows {
                        for (o, &v) in dx.row_mut(r).iter_mut().zip(g.data()) {
                            *o = v * inv;
                        }
                    }
                    self.acc(&mut grads, *x, dx)?;
                }
                Op::Bce(probs, targets) => {
                    let p = self.value(*probs);
                    let scale = g.get(0, 0);
                    let mut dp = Matrix::zeros(p.rows(), 1);
                    for &(i, y) in targets.iter() {
                        let pi = p.get(i, 0);
                        if pi <= PROB_CLAMP || pi >= 1.0 - PROB_CLAMP {
                            continue;
                        }
                        let d = -y / pi + (1.0 - y) / (1.0 - pi);
                        dp.data_mut()[i] += scale * d;
                    }
                    self.acc(&mut grads, *probs, dp)?;
                }
            }
        }
        Ok(params)
    }

    fn acc(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.nodes[v.0].needs_grad {
            return Ok(());
        }
        accumulate(&mut grads[v.0], g)
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

pub(crate) fn bce_value(p: &Matrix, targets: &[(usize, f64)]) -> f64 {
    let mut loss = 0.0;
    for &(i, y) in targets {
        let pi = p.get(i, 0).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= y * pi.ln() + (1.0 - y) * (1.0 - pi).ln();
    }
    loss
}

impl Matrix {
    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect();
        Matrix::from_vec(self.rows(), self.cols(), data).expect("same shape")
    }
}

/// Logistic function, re-exported for callers that compute probabilities
/// outside a tape.
pub fn probability(logit: f64) -> f64 {
    sigmoid(logit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{glorot_init, RngState};

    /// Central differences of `f` around every entry of `inputs[which]`.
    fn numeric_grad(inputs: &[Matrix], which: usize, f: &dyn Fn(&[Matrix]) -> f64) -> Matrix {
        let h = 1e-6;
        let mut out = Matrix::zeros(inputs[which].rows(), inputs[which].cols());
        for k in 0..inputs[which].data().len() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[k] += h;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[k] -= h;
            out.data_mut()[k] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn check(inputs: Vec<Matrix>, build: &dyn Fn(&mut Tape, &[Var]) -> Var) {
        let eval = |xs: &[Matrix]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = xs.iter().enumerate().map(|(i, m)| t.param(i, m.clone())).collect();
            let out = build(&mut t, &vars);
            t.value(out).get(0, 0)
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, m)| tape.param(i, m.clone())).collect();
        let out = build(&mut tape, &vars);
        let grads = tape.backward(out, inputs.len()).unwrap();
        for (i, g) in grads.iter().enumerate() {
            let numeric = numeric_grad(&inputs, i, &eval);
            let analytic = g.clone().unwrap_or_else(|| Matrix::zeros(numeric.rows(), numeric.cols()));
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                assert!((a - n).abs() <= 1e-6 * n.abs().max(1.0), "input {i}: analytic {a} numeric {n}");
            }
        }
    }

    /// Reduces a matrix to a scalar with a fixed random weighting so every
    /// output entry is exercised.
    fn probe(t: &mut Tape, x: Var, seed: u64) -> Var {
        let (r, c) = t.value(x).shape();
        let w = glorot_init(&mut RngState::new(seed), r, c);
        let wv = t.constant(w);
        let prod = t.matmul_t(x, wv, 1.0).unwrap();
        let tr = t.tanh(prod);
        let m = t.mean_rows(tr);
        let ones = t.constant(Matrix::filled(m_cols(t, m), 1, 1.0));
        t.matmul(m, ones).unwrap()
    }

    fn m_cols(t: &Tape, v: Var) -> usize {
        t.value(v).cols()
    }

    fn rand(seed: u64, r: usize, c: usize) -> Matrix {
        glorot_init(&mut RngState::new(seed), r, c)
    }

    #[test]
    fn matmul_family() {
        check(vec![rand(1, 3, 4), rand(2, 4, 2)], &|t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            probe(t, y, 9)
        });
        check(vec![rand(3, 3, 4), rand(4, 5, 4)], &|t, v| {
            let y = t.matmul_t(v[0], v[1], 0.7).unwrap();
            probe(t, y, 9)
        });
    }

    #[test]
    fn elementwise_and_broadcast() {
        check(vec![rand(5, 3, 4), rand(6, 1, 4), rand(7, 3, 4)], &|t, v| {
            let a = t.add_row(v[0], v[1]).unwrap();
            let b = t.add(a, v[2]).unwrap();
            let c = t.sigmoid(b);
            probe(t, c, 3)
        });
    }

    #[test]
    fn softmax_and_layer_norm() {
        check(vec![rand(8, 3, 5).scale(3.0), rand(9, 1, 5), rand(10, 1, 5)], &|t, v| {
            let s = t.softmax(v[0]);
            let n = t.layer_norm(s, v[1], v[2], 1e-5).unwrap();
            probe(t, n, 4)
        });
    }

    #[test]
    fn concat_and_scale_by_entry() {
        check(vec![rand(11, 4, 2), rand(12, 4, 3), rand(13, 1, 3)], &|t, v| {
            let c = t.concat(&[v[0], v[1]]).unwrap();
            let s = t.softmax(v[2]);
            let y = t.scale_by_entry(c, s, 1).unwrap();
            probe(t, y, 5)
        });
    }

    #[test]
    fn neighbor_aggregation() {
        let adj = Rc::new(vec![vec![1, 2], vec![0], vec![0, 3], vec![2], vec![]]);
        for aggr in [Aggregator::Mean, Aggregator::Sum] {
            let adj = adj.clone();
            check(vec![rand(14, 5, 3)], &move |t, v| {
                let y = t.neighbor_aggregate(v[0], adj.clone(), aggr).unwrap();
                probe(t, y, 6)
            });
        }
    }

    #[test]
    fn fused_attention() {
        check(vec![rand(16, 5, 3).scale(2.0), rand(17, 5, 3).scale(2.0), rand(18, 5, 2)], &|t, v| {
            let y = t.attention(v[0], v[1], v[2], 0.6).unwrap();
            probe(t, y, 7)
        });
    }

    #[test]
    fn fused_attention_matches_composition() {
        let (q, k, v) = (rand(19, 6, 4), rand(20, 6, 4), rand(21, 6, 3));
        let mut t = Tape::new();
        let (qv, kv, vv) = (t.param(0, q), t.param(1, k), t.param(2, v));
        let fused = t.attention(qv, kv, vv, 0.5).unwrap();
        let s = t.matmul_t(qv, kv, 0.5).unwrap();
        let a = t.softmax(s);
        let composed = t.matmul(a, vv).unwrap();
        assert_eq!(t.attention_weights(fused).unwrap(), t.value(a));
        for (x, y) in t.value(fused).data().iter().zip(t.value(composed).data()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(t.attention_weights(composed).is_none());
    }

    #[test]
    fn cross_entropy() {
        let targets = Rc::new(vec![(0, 1.0), (2, 0.0), (3, 1.0), (0, 1.0)]);
        check(vec![rand(15, 4, 1)], &move |t, v| {
            let p = t.sigmoid(v[0]);
            t.bce(p, targets.clone()).unwrap()
        });
    }

    #[test]
    fn cross_entropy_values() {
        let p = Matrix::from_rows(&[vec![0.5], vec![1.0]]);
        let ln2 = 2f64.ln();
        assert!((bce_value(&p, &[(0, 1.0)]) - ln2).abs() < 1e-15);
        assert!((bce_value(&p, &[(0, 0.0)]) - ln2).abs() < 1e-15);
        assert!(bce_value(&p, &[(1, 1.0)]) <= 1e-6);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.constant(rand(1, 2, 2));
        let w = t.param(0, rand(2, 2, 1));
        let y = t.matmul(x, w).unwrap();
        let s = t.mean_rows(y);
        let unused_slot = 1;
        let grads = t.backward(s, 2).unwrap();
        assert!(grads[0].is_some());
        assert!(grads[unused_slot].is_none());
    }
}
