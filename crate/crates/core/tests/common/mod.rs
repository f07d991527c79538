#![allow(dead_code)]

use fraudgt_core::{Label, Matrix, ModelConfig, ModelParams, MultiRelationGraph, RngState};

/// Random multi-relation graph with features in `[0, 1]`, hour-spread
/// timestamps and roughly a quarter of the nodes labeled fraud.
pub fn random_graph(n: usize, relations: usize, density: f64, seed: u64) -> MultiRelationGraph {
    let mut rng = RngState::new(seed);
    let features = Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.next_f64()).collect()).unwrap();
    let mut adj = vec![vec![Vec::new(); n]; relations];
    for a in adj.iter_mut() {
        for i in 0..n {
            for j in i + 1..n {
                if rng.bernoulli(density) {
                    a[i].push(j);
                    a[j].push(i);
                }
            }
        }
    }
    let times = (0..n).map(|_| 1.6e9 + rng.uniform(0.0, 86_400.0)).collect();
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if rng.bernoulli(0.25) { Label::Fraud } else { Label::Legit })
        .collect();
    labels[0] = Label::Fraud;
    labels[1] = Label::Legit;
    let train: Vec<bool> = (0..n).map(|i| i % 3 != 2).collect();
    let test: Vec<bool> = train.iter().map(|t| !t).collect();
    let names = (0..relations).map(|r| format!("rel{r}")).collect();
    MultiRelationGraph::new(names, adj, features, times, labels, train, test).unwrap()
}

/// Seeded initialization with every zero-initialized tensor (biases, layer
/// norm offsets) filled with small random values so no gradient path is idle.
pub fn generic_params(cfg: &ModelConfig, graph: &MultiRelationGraph, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(cfg, graph.features().cols(), graph.relation_count(), seed).unwrap();
    let mut rng = RngState::new(seed ^ 0x5eed);
    let frozen_temporal = !cfg.temporal.enabled;
    for (k, t) in p.tensors_mut().into_iter().enumerate() {
        if frozen_temporal && (k == 1 || k == 2) {
            continue;
        }
        for v in t.data_mut() {
            *v += rng.uniform(-0.3, 0.3);
        }
    }
    p
}
