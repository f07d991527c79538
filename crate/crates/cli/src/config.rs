//! Flat `key = value` run configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fraudgt_core::hetero_gnn::Aggregator;
use fraudgt_core::synth::RelationSpec;
use fraudgt_core::{DataConfig, Error, ModelConfig, Result, SynthConfig, TrainConfig};
use sha2::{Digest, Sha256};

/// Every recognised key, in the order the resolved configuration is printed.
pub const KEYS: &[&str] = &[
    "temporal.enabled",
    "temporal.time_scale",
    "temporal.epoch_offset",
    "temporal.standard_sinusoid",
    "gnn.layers",
    "gnn.dim",
    "gnn.aggr",
    "gnn.relation_attention",
    "attn.enabled",
    "attn.heads",
    "attn.ffn_mult",
    "attn.max_nodes",
    "train.lr",
    "train.epochs",
    "train.seed",
    "train.threshold",
    "data.schema",
    "data.split_time",
    "data.split_quantile",
    "data.downsample",
    "data.clique_cap",
    "data.cross_split_edges",
    "synth.n_transactions",
    "synth.fraud_ratio",
    "synth.relations",
    "synth.start_time",
    "synth.horizon",
    "synth.burst_window",
    "synth.burst_size",
    "synth.burst_day_band",
    "synth.legit_repeat_share",
    "synth.legit_hot_share",
    "synth.repeat_size",
    "synth.n_continuous",
    "synth.feature_shift",
    "synth.noise_scale",
    "synth.seed",
];

/// Keys that do not change what a checkpoint means and stay out of the hash.
fn hashed(key: &str) -> bool {
    !(key.starts_with("synth.") || key == "train.threshold" || key == "data.schema")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub threshold: f64,
    /// Schema file; empty means the data path with a `.schema` extension.
    pub schema: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            threshold: 0.5,
            schema: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_relations(value: &str) -> Result<Vec<RelationSpec>> {
    value
        .split(',')
        .map(|part| {
            let fields: Vec<&str> = part.trim().split(':').collect();
            match fields.as_slice() {
                [name, entities, pool] if !name.is_empty() => Ok(RelationSpec {
                    name: name.to_string(),
                    entities: parse("synth.relations", entities)?,
                    fraud_pool: parse("synth.relations", pool)?,
                }),
                _ => Err(Error::Config(format!(
                    "synth.relations: expected `name:entities:pool`, got `{part}`"
                ))),
            }
        })
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        let s = &mut self.synth;
        match key.trim() {
            k @ "temporal.enabled" => m.temporal.enabled = parse(k, v)?,
            k @ "temporal.time_scale" => m.temporal.time_scale = parse(k, v)?,
            k @ "temporal.epoch_offset" => m.temporal.epoch_offset = parse(k, v)?,
            k @ "temporal.standard_sinusoid" => m.temporal.standard_sinusoid = parse(k, v)?,
            k @ "gnn.layers" => m.layers = parse(k, v)?,
            k @ "gnn.dim" => m.dim = parse(k, v)?,
            "gnn.aggr" => m.aggr = v.parse::<Aggregator>()?,
            k @ "gnn.relation_attention" => m.relation_attention = parse(k, v)?,
            k @ "attn.enabled" => m.transformer = parse(k, v)?,
            k @ "attn.heads" => m.heads = parse(k, v)?,
            k @ "attn.ffn_mult" => m.ffn_mult = parse(k, v)?,
            k @ "attn.max_nodes" => m.max_nodes = parse(k, v)?,
            k @ "train.lr" => self.train.lr = parse(k, v)?,
            k @ "train.epochs" => self.train.epochs = parse(k, v)?,
            k @ "train.seed" => self.train.seed = parse(k, v)?,
            k @ "train.threshold" => self.threshold = parse(k, v)?,
            "data.schema" => self.schema = (!v.is_empty()).then(|| PathBuf::from(v)),
            k @ "data.split_time" => {
                self.data.split_time = if v == "none" { None } else { Some(parse(k, v)?) }
            }
            k @ "data.split_quantile" => self.data.split_quantile = parse(k, v)?,
            k @ "data.downsample" => self.data.downsample = parse(k, v)?,
            k @ "data.clique_cap" => self.data.clique_cap = parse(k, v)?,
            k @ "data.cross_split_edges" => self.data.cross_split_edges = parse(k, v)?,
            k @ "synth.n_transactions" => s.n_transactions = parse(k, v)?,
            k @ "synth.fraud_ratio" => s.fraud_ratio = parse(k, v)?,
            "synth.relations" => s.relations = parse_relations(v)?,
            k @ "synth.start_time" => s.start_time = parse(k, v)?,
            k @ "synth.horizon" => s.horizon = parse(k, v)?,
            k @ "synth.burst_window" => s.burst_window = parse(k, v)?,
            k @ "synth.burst_size" => s.burst_size = parse(k, v)?,
            k @ "synth.burst_day_band" => s.burst_day_band = parse(k, v)?,
            k @ "synth.legit_repeat_share" => s.legit_repeat_share = parse(k, v)?,
            k @ "synth.legit_hot_share" => s.legit_hot_share = parse(k, v)?,
            k @ "synth.repeat_size" => s.repeat_size = parse(k, v)?,
            k @ "synth.n_continuous" => s.n_continuous = parse(k, v)?,
            k @ "synth.feature_shift" => s.feature_shift = parse(k, v)?,
            k @ "synth.noise_scale" => s.noise_scale = parse(k, v)?,
            k @ "synth.seed" => s.seed = parse(k, v)?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        let s = &self.synth;
        let d = &self.data;
        Some(match key {
            "temporal.enabled" => m.temporal.enabled.to_string(),
            "temporal.time_scale" => m.temporal.time_scale.to_string(),
            "temporal.epoch_offset" => m.temporal.epoch_offset.to_string(),
            "temporal.standard_sinusoid" => m.temporal.standard_sinusoid.to_string(),
            "gnn.layers" => m.layers.to_string(),
            "gnn.dim" => m.dim.to_string(),
            "gnn.aggr" => m.aggr.as_str().to_string(),
            "gnn.relation_attention" => m.relation_attention.to_string(),
            "attn.enabled" => m.transformer.to_string(),
            "attn.heads" => m.heads.to_string(),
            "attn.ffn_mult" => m.ffn_mult.to_string(),
            "attn.max_nodes" => m.max_nodes.to_string(),
            "train.lr" => self.train.lr.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.seed" => self.train.seed.to_string(),
            "train.threshold" => self.threshold.to_string(),
            "data.schema" => self.schema.as_ref().map_or(String::new(), |p| p.display().to_string()),
            "data.split_time" => d.split_time.map_or("none".to_string(), |t| t.to_string()),
            "data.split_quantile" => d.split_quantile.to_string(),
            "data.downsample" => d.downsample.to_string(),
            "data.clique_cap" => d.clique_cap.to_string(),
            "data.cross_split_edges" => d.cross_split_edges.to_string(),
            "synth.n_transactions" => s.n_transactions.to_string(),
            "synth.fraud_ratio" => s.fraud_ratio.to_string(),
            "synth.relations" => s
                .relations
                .iter()
                .map(|r| format!("{}:{}:{}", r.name, r.entities, r.fraud_pool))
                .collect::<Vec<_>>()
                .join(","),
            "synth.start_time" => s.start_time.to_string(),
            "synth.horizon" => s.horizon.to_string(),
            "synth.burst_window" => s.burst_window.to_string(),
            "synth.burst_size" => s.burst_size.to_string(),
            "synth.burst_day_band" => s.burst_day_band.to_string(),
            "synth.legit_repeat_share" => s.legit_repeat_share.to_string(),
            "synth.legit_hot_share" => s.legit_hot_share.to_string(),
            "synth.repeat_size" => s.repeat_size.to_string(),
            "synth.n_continuous" => s.n_continuous.to_string(),
            "synth.feature_shift" => s.feature_shift.to_string(),
            "synth.noise_scale" => s.noise_scale.to_string(),
            "synth.seed" => s.seed.to_string(),
            _ => return None,
        })
    }

    /// Applies every assignment in a config file body. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.apply_text(&text)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, arg: &str) -> Result<()> {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{arg}`")))?;
        self.set(k, v)
    }

    /// Seeds training (and with it down-sampling and clique sampling) and
    /// synthetic generation.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    /// Data preparation settings with the run seed filled in.
    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            seed: self.train.seed,
            ..self.data.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("train.threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if !(self.data.split_quantile > 0.0 && self.data.split_quantile < 1.0) {
            return Err(Error::Config("data.split_quantile must lie in (0, 1)".into()));
        }
        if !(self.data.downsample > 0.0 && self.data.downsample <= 1.0) {
            return Err(Error::Config("data.downsample must lie in (0, 1]".into()));
        }
        if self.data.clique_cap < 2 {
            return Err(Error::Config("data.clique_cap must be at least 2".into()));
        }
        Ok(())
    }

    /// Every key with its value, one `key = value` line each.
    pub fn resolved(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Hex SHA-256 of the resolved lines that affect trained parameters.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| hashed(k)) {
            h.update(format!("{k} = {}\n", self.get(k).expect("listed key")));
        }
        hex::encode(h.finalize())
    }
}
