//! Seeded synthetic transactions with two planted fraud signatures: rings
//! that reuse a small pool of entities, and bursts of activity inside a
//! short time window.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnRole, Label, Schema, TransactionRecord};
use crate::numerics::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    /// Size of the full entity pool.
    pub entities: usize,
    /// Entities `0..fraud_pool` are the ones fraud rings use.
    pub fraud_pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_transactions: usize,
    pub fraud_ratio: f64,
    pub relations: Vec<RelationSpec>,
    /// Timestamp of the start of the horizon, epoch seconds.
    pub start_time: i64,
    /// Length of the horizon in seconds.
    pub horizon: i64,
    /// Every fraud burst fits inside a window of this many seconds.
    pub burst_window: i64,
    /// Fraud rows per burst; rows of one burst share all their entities.
    pub burst_size: usize,
    /// Bursts start within this many seconds after the start of a day,
    /// counted from `start_time`. `86_400` or more leaves start times uniform.
    pub burst_day_band: i64,
    /// Share of legitimate rows issued by repeat users, who reuse one entity
    /// per relation for `repeat_size` rows spread over the horizon. Other
    /// legitimate rows draw entities uniformly from the full pools.
    pub legit_repeat_share: f64,
    /// Probability that a repeat user's entities come from the fraud pool,
    /// so that fraud bursts and spread-out legitimate activity share entities.
    pub legit_hot_share: f64,
    pub repeat_size: usize,
    /// Continuous features: `amount` then `f1`, `f2`, ...
    pub n_continuous: usize,
    /// Mean offset of fraud rows on every continuous feature, in units before
    /// noise scaling.
    pub feature_shift: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::pr_style()
    }
}

const DAY: i64 = 86_400;

const CHANNELS: [&str; 3] = ["web", "app", "pos"];
const LEGIT_CHANNEL: [f64; 3] = [0.5, 0.3, 0.2];
const FRAUD_CHANNEL: [f64; 3] = [0.35, 0.45, 0.2];

impl SynthConfig {
    /// Two relations (ip, mac).
    pub fn pr_style() -> Self {
        SynthConfig {
            n_transactions: 4000,
            fraud_ratio: 0.1,
            relations: vec![
                RelationSpec {
                    name: "ip".into(),
                    entities: 20_000,
                    fraud_pool: 40,
                },
                RelationSpec {
                    name: "mac".into(),
                    entities: 20_000,
                    fraud_pool: 40,
                },
            ],
            start_time: 1_600_000_000,
            horizon: 60 * 86_400,
            burst_window: 1_800,
            burst_size: 8,
            burst_day_band: 4 * 3_600,
            legit_repeat_share: 0.3,
            legit_hot_share: 0.5,
            repeat_size: 8,
            n_continuous: 3,
            feature_shift: 0.5,
            noise_scale: 1.0,
            seed: 7,
        }
    }

    /// Four relations (ip, mac, device1, device2).
    pub fn tc_style() -> Self {
        let rel = |name: &str, entities, fraud_pool| RelationSpec {
            name: name.into(),
            entities,
            fraud_pool,
        };
        SynthConfig {
            relations: vec![
                rel("ip", 20_000, 40),
                rel("mac", 20_000, 40),
                rel("device1", 10_000, 30),
                rel("device2", 10_000, 30),
            ],
            ..SynthConfig::pr_style()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "pr-style" => Ok(Self::pr_style()),
            "tc-style" => Ok(Self::tc_style()),
            other => Err(Error::Config(format!("unknown synthetic preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_transactions < 2 {
            return bad("synth.n_transactions must be at least 2".into());
        }
        if !(self.fraud_ratio > 0.0 && self.fraud_ratio < 1.0) {
            return bad(format!("synth.fraud_ratio must lie in (0, 1), got {}", self.fraud_ratio));
        }
        if self.relations.is_empty() {
            return bad("at least one synthetic relation is required".into());
        }
        for r in &self.relations {
            if r.fraud_pool == 0 || r.fraud_pool > r.entities {
                return bad(format!(
                    "relation `{}`: fraud pool {} must lie in 1..={}",
                    r.name, r.fraud_pool, r.entities
                ));
            }
        }
        if self.burst_day_band <= 0 {
            return bad("synth.burst_day_band must be positive".into());
        }
        if self.horizon <= 0 || self.burst_window <= 0 || self.burst_window > self.horizon {
            return bad("need 0 < synth.burst_window <= synth.horizon".into());
        }
        if self.start_time < 0 {
            return bad("synth.start_time must be non-negative".into());
        }
        if self.burst_size == 0 || self.repeat_size == 0 || self.n_continuous == 0 {
            return bad("burst size, repeat size and feature count must be at least 1".into());
        }
        for (key, v) in [
            ("synth.legit_hot_share", self.legit_hot_share),
            ("synth.legit_repeat_share", self.legit_repeat_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{key} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.noise_scale > 0.0) || !self.feature_shift.is_finite() {
            return bad("synth.noise_scale must be positive and synth.feature_shift finite".into());
        }
        Ok(())
    }

    pub fn fraud_count(&self) -> usize {
        (self.n_transactions as f64 * self.fraud_ratio).round() as usize
    }

    pub fn continuous_names(&self) -> Vec<String> {
        (0..self.n_continuous)
            .map(|k| if k == 0 { "amount".into() } else { format!("f{k}") })
            .collect()
    }

    /// Column layout of generated CSV files.
    pub fn schema(&self) -> Schema {
        let mut cols = vec![
            ("txn_id".to_string(), ColumnRole::Id),
            ("timestamp".to_string(), ColumnRole::Timestamp),
        ];
        for n in self.continuous_names() {
            cols.push((n.clone(), ColumnRole::Continuous(n)));
        }
        cols.push(("channel".into(), ColumnRole::Categorical("channel".into())));
        for r in &self.relations {
            cols.push((r.name.clone(), ColumnRole::Relation(r.name.clone())));
        }
        cols.push(("label".into(), ColumnRole::Label));
        Schema::new(cols).expect("generated schema is valid")
    }
}

/// Per-relation reuse audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseStats {
    pub relation: String,
    /// Fraud rows per distinct entity used by fraud rows.
    pub fraud_reuse: f64,
    pub legit_reuse: f64,
    pub ratio: f64,
}

/// Ground-truth statistics recorded while generating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub rows: usize,
    pub fraud_rows: usize,
    pub legit_rows: usize,
    pub bursts: usize,
    /// Mean over bursts of the mean pairwise `|Δt|` inside the burst.
    pub mean_intra_burst_abs_dt: f64,
    pub max_intra_burst_abs_dt: f64,
    pub burst_window: i64,
    pub reuse: Vec<ReuseStats>,
}

pub struct Generated {
    pub records: Vec<TransactionRecord>,
    pub stats: GenerationStats,
}

struct Draft {
    timestamp: i64,
    fraud: bool,
    entities: Vec<usize>,
    burst: Option<usize>,
}

fn pick(rng: &mut RngState, probs: &[f64]) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Generates `cfg.n_transactions` labeled records sorted by timestamp.
pub fn generate(cfg: &SynthConfig) -> Result<Generated> {
    cfg.validate()?;
    let root = RngState::new(cfg.seed);
    let mut time_rng = root.split(1);
    let mut entity_rng = root.split(2);
    let mut feature_rng = root.split(3);

    let n_fraud = cfg.fraud_count();
    let n_legit = cfg.n_transactions - n_fraud;
    let mut drafts = Vec::with_capacity(cfg.n_transactions);

    let n_bursts = n_fraud.div_ceil(cfg.burst_size);
    for b in 0..n_bursts {
        let size = n_fraud / n_bursts + usize::from(b < n_fraud % n_bursts);
        let latest_start = cfg.horizon - cfg.burst_window;
        let mut start = (time_rng.next_f64() * (latest_start + 1) as f64) as i64;
        if cfg.burst_day_band < DAY {
            let phase = (time_rng.next_f64() * cfg.burst_day_band as f64) as i64;
            start = (start / DAY * DAY + phase).min(latest_start);
        }
        let entities: Vec<usize> = cfg.relations.iter().map(|r| entity_rng.below(r.fraud_pool)).collect();
        for _ in 0..size {
            let offset = (time_rng.next_f64() * (cfg.burst_window + 1) as f64) as i64;
            drafts.push(Draft {
                timestamp: start + offset.min(cfg.burst_window),
                fraud: true,
                entities: entities.clone(),
                burst: Some(b),
            });
        }
    }

    let uniform_time = |rng: &mut RngState| (rng.next_f64() * (cfg.horizon + 1) as f64) as i64;
    let n_repeat = ((n_legit as f64 * cfg.legit_repeat_share).round() as usize).min(n_legit);
    let mut made = 0;
    while made < n_repeat {
        let size = cfg.repeat_size.min(n_repeat - made);
        let hot = entity_rng.bernoulli(cfg.legit_hot_share);
        let entities: Vec<usize> = cfg
            .relations
            .iter()
            .map(|r| entity_rng.below(if hot { r.fraud_pool } else { r.entities }))
            .collect();
        for _ in 0..size {
            drafts.push(Draft {
                timestamp: uniform_time(&mut time_rng).min(cfg.horizon),
                fraud: false,
                entities: entities.clone(),
                burst: None,
            });
        }
        made += size;
    }
    for _ in n_repeat..n_legit {
        let entities = cfg.relations.iter().map(|r| entity_rng.below(r.entities)).collect();
        drafts.push(Draft {
            timestamp: uniform_time(&mut time_rng).min(cfg.horizon),
            fraud: false,
            entities,
            burst: None,
        });
    }

    // Stable sort keeps generation order among equal timestamps.
    drafts.sort_by_key(|d| d.timestamp);
    let names = cfg.continuous_names();
    let width = (cfg.n_transactions.max(2) - 1).to_string().len().max(6);
    let records: Vec<TransactionRecord> = drafts
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mean = if d.fraud { cfg.feature_shift } else { 0.0 };
            let mut continuous = BTreeMap::new();
            for (k, name) in names.iter().enumerate() {
                let g = mean + cfg.noise_scale * feature_rng.normal();
                let v = if k == 0 { 60.0 * (0.5 * g).exp() } else { g };
                continuous.insert(name.clone(), (v * 1e4).round() / 1e4);
            }
            let channel = pick(&mut feature_rng, if d.fraud { &FRAUD_CHANNEL } else { &LEGIT_CHANNEL });
            TransactionRecord {
                txn_id: format!("t{i:0width$}"),
                timestamp: cfg.start_time + d.timestamp,
                continuous,
                categorical: BTreeMap::from([("channel".to_string(), CHANNELS[channel].to_string())]),
                relations: cfg
                    .relations
                    .iter()
                    .zip(&d.entities)
                    .map(|(r, &e)| (r.name.clone(), format!("{}{e}", r.name)))
                    .collect(),
                label: if d.fraud { Label::Fraud } else { Label::Legit },
            }
        })
        .collect();

    let stats = audit(cfg, &drafts);
    Ok(Generated { records, stats })
}

fn audit(cfg: &SynthConfig, drafts: &[Draft]) -> GenerationStats {
    let mut bursts: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    for d in drafts {
        if let Some(b) = d.burst {
            bursts.entry(b).or_default().push(d.timestamp);
        }
    }
    let mut burst_means = Vec::new();
    let mut max_dt = 0.0f64;
    for times in bursts.values() {
        if times.len() < 2 {
            continue;
        }
        let mut total = 0.0;
        let mut pairs = 0.0;
        for a in 0..times.len() {
            for b in a + 1..times.len() {
                let dt = (times[a] - times[b]).abs() as f64;
                total += dt;
                pairs += 1.0;
                max_dt = max_dt.max(dt);
            }
        }
        burst_means.push(total / pairs);
    }
    let reuse = cfg
        .relations
        .iter()
        .enumerate()
        .map(|(r, spec)| {
            let rate = |fraud: bool| {
                let rows: Vec<usize> = drafts.iter().filter(|d| d.fraud == fraud).map(|d| d.entities[r]).collect();
                let distinct: BTreeSet<usize> = rows.iter().copied().collect();
                if distinct.is_empty() {
                    0.0
                } else {
                    rows.len() as f64 / distinct.len() as f64
                }
            };
            let (f, l) = (rate(true), rate(false));
            ReuseStats {
                relation: spec.name.clone(),
                fraud_reuse: f,
                legit_reuse: l,
                ratio: if l > 0.0 { f / l } else { f64::INFINITY },
            }
        })
        .collect();
    let fraud_rows = drafts.iter().filter(|d| d.fraud).count();
    GenerationStats {
        rows: drafts.len(),
        fraud_rows,
        legit_rows: drafts.len() - fraud_rows,
        bursts: bursts.len(),
        mean_intra_burst_abs_dt: if burst_means.is_empty() {
            0.0
        } else {
            burst_means.iter().sum::<f64>() / burst_means.len() as f64
        },
        max_intra_burst_abs_dt: max_dt,
        burst_window: cfg.burst_window,
        reuse,
    }
}

/// Masks for a time split: labeled rows strictly before `boundary` train,
/// labeled rows at or after it test. Unlabeled rows are in neither.
pub fn split_temporal(records: &[TransactionRecord], boundary: i64) -> Result<(Vec<bool>, Vec<bool>)> {
    let train: Vec<bool> = records
        .iter()
        .map(|r| r.label.is_labeled() && r.timestamp < boundary)
        .collect();
    let test: Vec<bool> = records
        .iter()
        .map(|r| r.label.is_labeled() && r.timestamp >= boundary)
        .collect();
    if !train.iter().any(|&m| m) || !test.iter().any(|&m| m) {
        return Err(Error::Data(format!(
            "split at {boundary} leaves the training or test side empty"
        )));
    }
    Ok((train, test))
}

/// Timestamp at quantile `q` of the records (nearest rank).
pub fn quantile_boundary(records: &[TransactionRecord], q: f64) -> Result<i64> {
    if records.is_empty() || !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("split quantile must lie in (0, 1), got {q}")));
    }
    let mut ts: Vec<i64> = records.iter().map(|r| r.timestamp).collect();
    ts.sort_unstable();
    let idx = ((ts.len() as f64 * q).ceil() as usize).clamp(1, ts.len()) - 1;
    Ok(ts[idx])
}
