//! Cross-entropy objective, parameter gradients and the full-batch Adam loop.

use std::fmt::Write as _;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{bce_value, Tape};
use crate::error::{Error, Result};
use crate::ingest::{Label, MultiRelationGraph};
use crate::model::{forward_on_tape, layout, ModelConfig, ModelParams, PreparedGraph};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be a non-negative number, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam decays must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}

/// Node ids selected by a boolean mask.
pub fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// `−Σ [y·ln P + (1−y)·ln(1−P)]` over the masked nodes, with `P` clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn loss(probabilities: &[f64], labels: &[Label], mask: &[bool]) -> Result<f64> {
    if probabilities.len() != labels.len() || labels.len() != mask.len() {
        return Err(Error::shape("loss", "probabilities, labels and mask differ in length"));
    }
    let targets = binary_targets(labels, &mask_indices(mask))?;
    let p = Matrix::from_vec(probabilities.len(), 1, probabilities.to_vec())?;
    Ok(bce_value(&p, &targets))
}

fn binary_targets(labels: &[Label], nodes: &[usize]) -> Result<Vec<(usize, f64)>> {
    if nodes.is_empty() {
        return Err(Error::Data("loss mask is empty".into()));
    }
    nodes
        .iter()
        .map(|&i| {
            labels
                .get(i)
                .and_then(|l| l.as_binary())
                .map(|y| (i, y))
                .ok_or_else(|| Error::Data(format!("loss node {i} has no binary label")))
        })
        .collect()
}

/// Loss over `nodes` (original ids, repeats allowed) and its gradient for
/// every parameter tensor in flat order. Frozen tensors get zero gradients.
pub fn compute_gradients(
    graph: &MultiRelationGraph,
    prepared: &PreparedGraph,
    params: &ModelParams,
    cfg: &ModelConfig,
    nodes: &[usize],
) -> Result<(f64, Vec<Matrix>)> {
    let targets = binary_targets(graph.labels(), nodes)?;
    let (ids, ys): (Vec<usize>, Vec<f64>) = targets.into_iter().unzip();
    let targets = Rc::new(prepared.targets(&ids, &ys));

    let mut tape = Tape::new();
    let f = forward_on_tape(&mut tape, prepared, params, cfg)?;
    let loss_var = tape.bce(f.probabilities, targets)?;
    let loss = tape.value(loss_var).get(0, 0);
    if !loss.is_finite() {
        return Err(Error::NonFinite { stage: "loss".into() });
    }
    let grads = tape.backward(loss_var, params.tensor_count())?;
    let specs = layout(cfg, params.feature_dim(), params.relation_count());
    let trainable = ModelParams::trainable(cfg, params.feature_dim(), params.relation_count());
    let mut out = Vec::with_capacity(specs.len());
    for ((spec, g), train) in specs.iter().zip(grads).zip(trainable) {
        let g = match g {
            Some(g) if train => g,
            _ => Matrix::zeros(spec.rows, spec.cols),
        };
        if !g.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("gradient of {}", spec.name),
            });
        }
        out.push(g);
    }
    Ok((loss, out))
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub coordinates: usize,
    /// `max |analytic − numeric| / max(1, |numeric|)` over all coordinates.
    pub max_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: String,
}

/// Probes every trainable coordinate with `(L(θ+h) − L(θ−h)) / 2h`.
pub fn check_gradients(
    graph: &MultiRelationGraph,
    params: &ModelParams,
    cfg: &ModelConfig,
    mask: &[bool],
    step: f64,
) -> Result<GradientCheck> {
    let prepared = PreparedGraph::new(graph, cfg)?;
    let (_, grads) = compute_gradients(graph, &prepared, params, cfg, &mask_indices(mask))?;
    let specs = layout(cfg, params.feature_dim(), params.relation_count());
    let trainable = ModelParams::trainable(cfg, params.feature_dim(), params.relation_count());
    let objective = |p: &ModelParams| -> Result<f64> {
        let trace = crate::model::forward_prepared(&prepared, p, cfg)?;
        loss(&trace.probabilities, graph.labels(), mask)
    };
    let mut report = GradientCheck {
        coordinates: 0,
        max_error: 0.0,
        worst: String::new(),
    };
    let mut probe = params.clone();
    for (k, spec) in specs.iter().enumerate() {
        if !trainable[k] {
            continue;
        }
        for idx in 0..spec.rows * spec.cols {
            let original = probe.tensors()[k].data()[idx];
            probe.tensors_mut()[k].data_mut()[idx] = original + step;
            let up = objective(&probe)?;
            probe.tensors_mut()[k].data_mut()[idx] = original - step;
            let down = objective(&probe)?;
            probe.tensors_mut()[k].data_mut()[idx] = original;
            let numeric = (up - down) / (2.0 * step);
            let err = (grads[k].data()[idx] - numeric).abs() / numeric.abs().max(1.0);
            report.coordinates += 1;
            if err > report.max_error || report.worst.is_empty() {
                report.max_error = report.max_error.max(err);
                report.worst = format!("{}[{idx}]", spec.name);
            }
        }
    }
    Ok(report)
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: i32,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &[Matrix], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (k, p) in params.tensors_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for (((pv, mv), vv), &gv) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
                *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training loss before this epoch's update.
    pub loss: f64,
    /// Seconds since the loop started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,wall_time\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{:.6}", e.epoch, e.loss, e.wall_time);
        }
        s
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Training stopped early; `params` is the last state whose forward pass was
/// finite, absent when initialization itself failed.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub params: Option<ModelParams>,
    pub log: TrainingLog,
}

/// Full-batch training from a seeded initialization.
pub fn train_loop(
    graph: &MultiRelationGraph,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainingLog), Box<TrainFailure>> {
    let params = ModelParams::init(model, graph.features().cols(), graph.relation_count(), cfg.seed)
        .map_err(|error| {
            Box::new(TrainFailure {
                error,
                params: None,
                log: TrainingLog::default(),
            })
        })?;
    train_from(graph, model, cfg, params)
}

/// Continues training from `params`.
pub fn train_from(
    graph: &MultiRelationGraph,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut params: ModelParams,
) -> Result<(ModelParams, TrainingLog), Box<TrainFailure>> {
    let mut log = TrainingLog::default();
    let setup = (|| {
        cfg.validate()?;
        let nodes = mask_indices(graph.train_mask());
        if nodes.is_empty() {
            return Err(Error::Data("training mask is empty".into()));
        }
        Ok((PreparedGraph::new(graph, model)?, nodes))
    })();
    let (prepared, nodes) = match setup {
        Ok(v) => v,
        Err(error) => return Err(Box::new(TrainFailure { error, params: Some(params), log })),
    };
    let mut adam = Adam::new(&params);
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        let (loss, grads) = match compute_gradients(graph, &prepared, &params, model, &nodes) {
            Ok(v) => v,
            Err(error) => return Err(Box::new(TrainFailure { error, params: Some(params), log })),
        };
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            wall_time: start.elapsed().as_secs_f64(),
        });
        let mut next = params.clone();
        adam.update(&mut next, &grads, cfg);
        if !next.is_finite() {
            let error = Error::NonFinite {
                stage: format!("parameter update at epoch {epoch}"),
            };
            return Err(Box::new(TrainFailure { error, params: Some(params), log }));
        }
        params = next;
    }
    Ok((params, log))
}
