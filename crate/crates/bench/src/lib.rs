//! Fixtures shared by the benchmarks.

use fraudgt_core::{generate, prepare_data, DataConfig, Matrix, MultiRelationGraph, RngState, SynthConfig};

/// Dense matrix with entries uniform in `[-1, 1)`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = RngState::new(seed);
    let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("sizes agree")
}

/// Graph built from `n` synthetic two-relation transactions.
pub fn synthetic_graph(n: usize) -> MultiRelationGraph {
    let cfg = SynthConfig {
        n_transactions: n,
        ..SynthConfig::pr_style()
    };
    let generated = generate(&cfg).expect("preset is valid");
    let names: Vec<String> = cfg.relations.iter().map(|r| r.name.clone()).collect();
    prepare_data(&generated.records, &names, &DataConfig::default())
        .expect("preset splits")
        .graph
}
