use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fraudgt_cli::commands::{self, METRICS_FILE};
use fraudgt_cli::{exit_code, RunConfig};
use fraudgt_core::Result;

#[derive(Parser)]
#[command(name = "fraudgt", version, about = "Graph fraud detection on transaction data")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Sets `train.seed` and `synth.seed`; `--set` still wins.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (generate, evaluate) or directory (train, ablate).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic CSV with its schema and generation statistics.
    Generate,
    /// Train on a CSV and write checkpoint, training log and resolved config.
    Train { data: PathBuf },
    /// Score the test split with a checkpoint and report metrics as JSON.
    Evaluate { checkpoint: PathBuf, data: PathBuf },
    /// Train and evaluate the four ablation variants.
    Ablate { data: PathBuf },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    eprint!("# resolved configuration (hash {})\n{}", cfg.hash(), cfg.resolved());
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Generate => {
            let g = commands::cmd_generate(&cfg, out.unwrap_or(Path::new("data.csv")))?;
            eprintln!("wrote {} rows to {}", g.stats.rows, g.csv.display());
        }
        Command::Train { data } => {
            let t = commands::cmd_train(&cfg, data, out.unwrap_or(Path::new("run")))?;
            let last = t.log.losses().last().copied();
            eprintln!("wrote {} (final loss {last:?})", t.checkpoint.display());
        }
        Command::Evaluate { checkpoint, data } => {
            let default = checkpoint.with_file_name(METRICS_FILE);
            let report = commands::cmd_evaluate(&cfg, checkpoint, data, out.unwrap_or(&default))?;
            print!("{}", report.to_json());
        }
        Command::Ablate { data } => {
            let rows = commands::cmd_ablate(&cfg, data, out.unwrap_or(Path::new("ablation")))?;
            print!("{}", commands::ablation_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
