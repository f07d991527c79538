//! Records to graph: time split, legitimate down-sampling on the training
//! side, feature encoding fitted on training rows, and edge construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    build_graph, downsample_legitimate_where, fit_codec, FeatureCodec, GraphOptions, MultiRelationGraph,
    TransactionRecord,
};
use crate::numerics::RngState;
use crate::synth::{quantile_boundary, split_temporal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Explicit split timestamp; overrides `split_quantile`.
    pub split_time: Option<i64>,
    pub split_quantile: f64,
    /// Probability of keeping each legitimate training row.
    pub downsample: f64,
    pub clique_cap: usize,
    pub cross_split_edges: bool,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            split_time: None,
            split_quantile: 0.6,
            downsample: 1.0,
            clique_cap: 100,
            cross_split_edges: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub graph: MultiRelationGraph,
    /// Records that became graph nodes, in node order.
    pub records: Vec<TransactionRecord>,
    pub codec: FeatureCodec,
    pub boundary: i64,
}

pub fn prepare_data(
    records: &[TransactionRecord],
    relation_fields: &[String],
    cfg: &DataConfig,
) -> Result<PreparedData> {
    if !(cfg.downsample > 0.0 && cfg.downsample <= 1.0) {
        return Err(Error::Config(format!("data.downsample must lie in (0, 1], got {}", cfg.downsample)));
    }
    let boundary = match cfg.split_time {
        Some(t) => t,
        None => quantile_boundary(records, cfg.split_quantile)?,
    };
    split_temporal(records, boundary)?;
    let root = RngState::new(cfg.seed);
    let kept = if cfg.downsample < 1.0 {
        downsample_legitimate_where(records, cfg.downsample, &mut root.split(11), |r| r.timestamp < boundary)?
    } else {
        records.to_vec()
    };
    let (train, test) = split_temporal(&kept, boundary)?;
    let train_rows: Vec<TransactionRecord> = kept
        .iter()
        .zip(&train)
        .filter(|(_, &m)| m)
        .map(|(r, _)| r.clone())
        .collect();
    let codec = fit_codec(&train_rows);
    let encoded = codec.encode(&kept);
    let opts = GraphOptions {
        clique_cap: cfg.clique_cap,
        seed: root.split(12).seed(),
        cross_split_edges: cfg.cross_split_edges,
    };
    let graph = build_graph(&kept, encoded, relation_fields, &opts, train, test)?;
    Ok(PreparedData {
        graph,
        records: kept,
        codec,
        boundary,
    })
}
