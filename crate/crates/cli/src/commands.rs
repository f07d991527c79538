//! The four batch commands. Each takes a resolved [`RunConfig`] and paths and
//! returns what it wrote; `main` only parses arguments and maps exit codes.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fraudgt_core::ingest::{parse_csv, write_csv};
use fraudgt_core::model::forward;
use fraudgt_core::synth::GenerationStats;
use fraudgt_core::{
    evaluate, generate, prepare_data, train_loop, Checkpoint, Error, MetricsReport, ModelParams, PreparedData, Result,
    Schema, TrainingLog,
};

use crate::config::RunConfig;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Schema file used for `data`: `data.schema` if set, otherwise the data path
/// with its extension replaced by `schema`.
pub fn schema_path(cfg: &RunConfig, data: &Path) -> PathBuf {
    cfg.schema.clone().unwrap_or_else(|| data.with_extension("schema"))
}

pub fn stats_path(data: &Path) -> PathBuf {
    data.with_extension("stats.json")
}

pub struct Generated {
    pub csv: PathBuf,
    pub schema: PathBuf,
    pub stats_file: PathBuf,
    pub stats: GenerationStats,
}

/// Writes the synthetic CSV, its schema file and a JSON sidecar of
/// generation statistics.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<Generated> {
    let generated = generate(&cfg.synth)?;
    let schema = cfg.synth.schema();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = fs::File::create(out).map_err(io_err(out))?;
    write_csv(BufWriter::new(file), &schema, &generated.records)?;
    let schema_file = out.with_extension("schema");
    write(&schema_file, schema.to_text())?;
    let stats_file = stats_path(out);
    write(&stats_file, serde_json::to_string_pretty(&generated.stats)? + "\n")?;
    Ok(Generated {
        csv: out.to_path_buf(),
        schema: schema_file,
        stats_file,
        stats: generated.stats,
    })
}

/// Parses the CSV under its schema and builds the graph.
pub fn load_data(cfg: &RunConfig, data: &Path) -> Result<PreparedData> {
    let schema = Schema::load(&schema_path(cfg, data))?;
    let records = parse_csv(data, &schema)?;
    prepare_data(&records, &schema.relation_names(), &cfg.data_config())
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PARTIAL_CHECKPOINT_FILE: &str = "checkpoint.last_finite.json";
pub const LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.resolved";
pub const METRICS_FILE: &str = "metrics.json";
pub const ABLATION_FILE: &str = "ablation.csv";

pub struct Trained {
    pub checkpoint: PathBuf,
    pub log: TrainingLog,
    pub params: ModelParams,
}

fn train_on(cfg: &RunConfig, data: &PreparedData, out_dir: &Path) -> Result<Trained> {
    create_dir(out_dir)?;
    write(&out_dir.join(CONFIG_FILE), cfg.resolved())?;
    let names = data.graph.relation_names().to_vec();
    let log_path = out_dir.join(LOG_FILE);
    match train_loop(&data.graph, &cfg.model, &cfg.train) {
        Ok((params, log)) => {
            let checkpoint = out_dir.join(CHECKPOINT_FILE);
            Checkpoint::new(&params, &cfg.model, &cfg.hash(), &names).save(&checkpoint)?;
            write(&log_path, log.to_csv())?;
            Ok(Trained {
                checkpoint,
                log,
                params,
            })
        }
        Err(failure) => {
            write(&log_path, failure.log.to_csv())?;
            if let Some(params) = &failure.params {
                Checkpoint::new(params, &cfg.model, &cfg.hash(), &names).save(&out_dir.join(PARTIAL_CHECKPOINT_FILE))?;
            }
            Err(failure.error)
        }
    }
}

/// Trains on `data` and writes the checkpoint, the training log and the
/// resolved configuration into `out_dir`. On divergence the last finite
/// parameters go to [`PARTIAL_CHECKPOINT_FILE`] and the error is returned.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out_dir: &Path) -> Result<Trained> {
    let prepared = load_data(cfg, data)?;
    train_on(cfg, &prepared, out_dir)
}

/// Test-mask metrics for per-node probabilities given in graph node order.
/// The probabilities double as ranking scores.
pub fn report_for_scores(cfg: &RunConfig, data: &PreparedData, probabilities: &[f64]) -> Result<MetricsReport> {
    let g = &data.graph;
    if probabilities.len() != g.node_count() {
        return Err(Error::Data(format!(
            "{} scores for {} nodes",
            probabilities.len(),
            g.node_count()
        )));
    }
    evaluate(probabilities, probabilities, g.labels(), g.test_mask(), cfg.threshold)
}

fn metrics_for(cfg: &RunConfig, data: &PreparedData, params: &ModelParams) -> Result<MetricsReport> {
    let trace = forward(&data.graph, params, &cfg.model)?;
    let g = &data.graph;
    evaluate(&trace.probabilities, &trace.logits, g.labels(), g.test_mask(), cfg.threshold)
}

/// Loads a checkpoint trained under the same configuration hash, runs the
/// forward pass and writes test-mask metrics to `out`.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<MetricsReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let prepared = load_data(cfg, data)?;
    let params = ck.into_params(&cfg.model, &cfg.hash(), prepared.graph.relation_names())?;
    let report = metrics_for(cfg, &prepared, &params)?;
    write(out, report.to_json())?;
    Ok(report)
}

pub const VARIANTS: [&str; 4] = ["full", "no_temporal", "no_transformer", "no_relation_attention"];

/// Configuration of one ablation variant.
pub fn variant_config(base: &RunConfig, variant: &str) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match variant {
        "full" => {}
        "no_temporal" => cfg.model.temporal.enabled = false,
        "no_transformer" => cfg.model.transformer = false,
        "no_relation_attention" => cfg.model.relation_attention = false,
        other => return Err(Error::Config(format!("unknown ablation variant `{other}`"))),
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub report: MetricsReport,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,recall,f1,auc\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.variant, r.report.recall, r.report.f1, r.report.auc));
    }
    s
}

/// Trains and evaluates every variant on the same graph and seed, one after
/// another. Each variant's run files go to `out_dir/<variant>/`; the table
/// goes to `out_dir/ablation.csv`.
pub fn cmd_ablate(cfg: &RunConfig, data: &Path, out_dir: &Path) -> Result<Vec<AblationRow>> {
    let prepared = load_data(cfg, data)?;
    create_dir(out_dir)?;
    let mut rows = Vec::with_capacity(VARIANTS.len());
    for variant in VARIANTS {
        let vcfg = variant_config(cfg, variant)?;
        let dir = out_dir.join(variant);
        let trained = train_on(&vcfg, &prepared, &dir)?;
        let report = metrics_for(&vcfg, &prepared, &trained.params)?;
        write(&dir.join(METRICS_FILE), report.to_json())?;
        rows.push(AblationRow {
            variant: variant.to_string(),
            report,
        });
    }
    write(&out_dir.join(ABLATION_FILE), ablation_csv(&rows))?;
    Ok(rows)
}
