//! Versioned JSON dump of model parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{layout, ModelConfig, ModelParams};
use crate::numerics::Matrix;

pub const CHECKPOINT_FORMAT: &str = "fraudgt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Hash of the resolved configuration the parameters were trained under.
    pub config_hash: String,
    pub relation_names: Vec<String>,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, cfg: &ModelConfig, config_hash: &str, relation_names: &[String]) -> Self {
        let specs = layout(cfg, params.feature_dim(), params.relation_count());
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            relation_names: relation_names.to_vec(),
            tensors: specs
                .iter()
                .zip(params.tensors())
                .map(|(s, t)| TensorRecord {
                    name: s.name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} version {}",
                ck.format, ck.version
            )));
        }
        Ok(ck)
    }

    /// Parameters for `cfg`, refusing a different configuration hash, other
    /// relations or any tensor whose name or shape disagrees with the layout.
    pub fn into_params(
        self,
        cfg: &ModelConfig,
        expected_hash: &str,
        relation_names: &[String],
    ) -> Result<ModelParams> {
        if self.config_hash != expected_hash {
            return Err(Error::Checkpoint(format!(
                "configuration hash {} does not match {}",
                self.config_hash, expected_hash
            )));
        }
        if self.relation_names != relation_names {
            return Err(Error::Checkpoint(format!(
                "checkpoint relations {:?} differ from data relations {:?}",
                self.relation_names, relation_names
            )));
        }
        let feature_dim = self.tensors.first().map_or(0, |t| t.rows);
        let specs = layout(cfg, feature_dim, relation_names.len());
        if specs.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors, layout expects {}",
                self.tensors.len(),
                specs.len()
            )));
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, rec) in specs.iter().zip(self.tensors) {
            if spec.name != rec.name || (spec.rows, spec.cols) != (rec.rows, rec.cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {}x{} does not match expected `{}` {}x{}",
                    rec.name, rec.rows, rec.cols, spec.name, spec.rows, spec.cols
                )));
            }
            let m = Matrix::from_vec(rec.rows, rec.cols, rec.values)
                .map_err(|_| Error::Checkpoint(format!("tensor `{}` has the wrong value count", rec.name)))?;
            if !m.is_finite() {
                return Err(Error::Checkpoint(format!("tensor `{}` is not finite", rec.name)));
            }
            tensors.push(m);
        }
        ModelParams::from_tensors(cfg, relation_names.len(), tensors)
    }
}
