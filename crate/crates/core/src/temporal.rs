//! Sinusoidal time features and the learnable temporal encoding added to the
//! initial node embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{glorot_init, Matrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalConfig {
    pub enabled: bool,
    /// Raw timestamps are divided by this before the sinusoids (3600 = hours).
    pub time_scale: f64,
    /// Subtracted from raw timestamps before scaling.
    pub epoch_offset: f64,
    /// Use `10000^{2i/d}` for the cosine slots too instead of `10000^{(2i+1)/d}`.
    pub standard_sinusoid: bool,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            enabled: true,
            time_scale: 3600.0,
            epoch_offset: 0.0,
            standard_sinusoid: false,
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::Config(format!(
                "temporal.time_scale must be positive, got {}",
                self.time_scale
            )));
        }
        if !self.epoch_offset.is_finite() {
            return Err(Error::Config("temporal.epoch_offset must be finite".into()));
        }
        Ok(())
    }

    pub fn scaled_time(&self, raw: f64) -> f64 {
        (raw - self.epoch_offset) / self.time_scale
    }
}

/// Sinusoidal base vector of length `d`.
///
/// Even slot `2i` holds `sin(t / 10000^{2i/d})` and odd slot `2i+1` holds
/// `cos(t / 10000^{(2i+1)/d})`. With `standard` set, the odd slot uses the
/// exponent `2i/d` of its even partner.
pub fn base_encoding(t: f64, d: usize, standard: bool) -> Vec<f64> {
    let mut out = vec![0.0; d];
    base_encoding_into(t, standard, &mut out);
    out
}

fn base_encoding_into(t: f64, standard: bool, out: &mut [f64]) {
    let d = out.len() as f64;
    for (k, slot) in out.iter_mut().enumerate() {
        if k % 2 == 0 {
            *slot = (t / 10000f64.powf(k as f64 / d)).sin();
        } else {
            let exponent = if standard { (k - 1) as f64 } else { k as f64 };
            *slot = (t / 10000f64.powf(exponent / d)).cos();
        }
    }
}

/// `N × d` matrix of base encodings for raw timestamps.
pub fn base_matrix(timestamps: &[f64], d: usize, cfg: &TemporalConfig) -> Matrix {
    let mut m = Matrix::zeros(timestamps.len(), d);
    for (i, &t) in timestamps.iter().enumerate() {
        base_encoding_into(cfg.scaled_time(t), cfg.standard_sinusoid, m.row_mut(i));
    }
    m
}

/// Learnable projection of the sinusoidal base: `TE(t) = base(t)·T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEncoder {
    pub config: TemporalConfig,
    /// `d × d`
    pub t_linear: Matrix,
    /// `1 × d`
    pub t_bias: Matrix,
}

impl TemporalEncoder {
    pub fn new(config: TemporalConfig, t_linear: Matrix, t_bias: Matrix) -> Result<Self> {
        config.validate()?;
        let d = t_linear.rows();
        if t_linear.cols() != d || t_bias.shape() != (1, d) {
            return Err(Error::shape(
                "temporal",
                format!("T {:?}, bias {:?}", t_linear.shape(), t_bias.shape()),
            ));
        }
        Ok(TemporalEncoder {
            config,
            t_linear,
            t_bias,
        })
    }

    /// Glorot-initialized projection with a zero bias.
    pub fn init(config: TemporalConfig, dim: usize, rng: &mut RngState) -> Result<Self> {
        Self::new(config, glorot_init(rng, dim, dim), Matrix::zeros(1, dim))
    }

    pub fn dim(&self) -> usize {
        self.t_linear.rows()
    }

    /// Temporal encodings for a batch of raw timestamps, one row each.
    pub fn encode_all(&self, timestamps: &[f64]) -> Result<Matrix> {
        base_matrix(timestamps, self.dim(), &self.config)
            .matmul(&self.t_linear)?
            .add_row(&self.t_bias)
    }
}

pub fn temporal_encode(enc: &TemporalEncoder, t: f64) -> Result<Vec<f64>> {
    Ok(enc.encode_all(&[t])?.into_data())
}

/// Adds each node's temporal encoding to its initial embedding row.
pub fn inject(h0: &Matrix, enc: &TemporalEncoder, timestamps: &[f64]) -> Result<Matrix> {
    if h0.rows() != timestamps.len() || h0.cols() != enc.dim() {
        return Err(Error::shape(
            "temporal inject",
            format!(
                "embeddings {:?}, {} timestamps, encoder dim {}",
                h0.shape(),
                timestamps.len(),
                enc.dim()
            ),
        ));
    }
    h0.add(&enc.encode_all(timestamps)?)
}
