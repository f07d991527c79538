//! Trains the full model and the no-temporal ablation on a synthetic preset
//! and prints both test AUCs.
//!
//! usage: cargo run --release -p fraudgt-core --example pilot -- [key=value ...]
//! keys: seed synth_seed n epochs lr dim layers heads ffn downsample hot repeat shift noise window burst transformer scale standard both

use std::collections::HashMap;
use std::time::Instant;

use fraudgt_core::model::forward;
use fraudgt_core::{evaluate, generate, prepare_data, train_loop, DataConfig, ModelConfig, SynthConfig, TrainConfig};

fn main() {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: f64| args.get(k).map_or(d, |v| v.parse().unwrap());

    let mut synth = SynthConfig::pr_style();
    synth.seed = get("synth_seed", 7.0) as u64;
    synth.n_transactions = get("n", 4000.0) as usize;
    synth.legit_hot_share = get("hot", synth.legit_hot_share);
    synth.legit_repeat_share = get("repeat", synth.legit_repeat_share);
    synth.feature_shift = get("shift", synth.feature_shift);
    synth.noise_scale = get("noise", synth.noise_scale);
    synth.burst_window = get("window", synth.burst_window as f64) as i64;
    synth.burst_size = get("burst", synth.burst_size as f64) as usize;
    synth.burst_day_band = get("band", synth.burst_day_band as f64) as i64;
    let generated = generate(&synth).unwrap();
    println!("stats: {}", serde_json::to_string(&generated.stats).unwrap());

    let data_cfg = DataConfig {
        downsample: get("downsample", 0.5),
        seed: get("seed", 7.0) as u64,
        ..DataConfig::default()
    };
    let names: Vec<String> = synth.relations.iter().map(|r| r.name.clone()).collect();
    let data = prepare_data(&generated.records, &names, &data_cfg).unwrap();
    println!("nodes {} summary {:?}", data.graph.node_count(), data.graph.summary().edge_counts);

    let train = TrainConfig {
        lr: get("lr", 0.01),
        epochs: get("epochs", 150.0) as usize,
        seed: get("seed", 7.0) as u64,
        ..TrainConfig::default()
    };
    let variants: &[bool] = if get("both", 1.0) != 0.0 { &[true, false] } else { &[true] };
    for &temporal in variants {
        let mut model = ModelConfig {
            dim: get("dim", 8.0) as usize,
            layers: get("layers", 2.0) as usize,
            heads: get("heads", 2.0) as usize,
            ffn_mult: get("ffn", 2.0) as usize,
            transformer: get("transformer", 1.0) != 0.0,
            ..ModelConfig::default()
        };
        model.temporal.enabled = temporal;
        model.temporal.time_scale = get("scale", 3600.0);
        model.temporal.standard_sinusoid = get("standard", 0.0) != 0.0;
        let start = Instant::now();
        let (params, log) = train_loop(&data.graph, &model, &train).map_err(|f| f.error).unwrap();
        let trace = forward(&data.graph, &params, &model).unwrap();
        let g = &data.graph;
        let test = evaluate(&trace.probabilities, &trace.logits, g.labels(), g.test_mask(), 0.5).unwrap();
        let tr = evaluate(&trace.probabilities, &trace.logits, g.labels(), g.train_mask(), 0.5).unwrap();
        let l = log.losses();
        println!(
            "temporal={temporal} loss {:.3}->{:.3} train_auc {:.4} test_auc {:.4} f1 {:.3} ({:.1}s)",
            l[0],
            l[l.len() - 1],
            tr.auc,
            test.auc,
            test.f1,
            start.elapsed().as_secs_f64()
        );
    }
}
