//! A five-node forward pass recomputed with plain loops, sharing nothing with
//! the library except the parameter values.

use fraudgt_core::hetero_gnn::Aggregator;
use fraudgt_core::{forward, Label, Matrix, ModelConfig, ModelParams, MultiRelationGraph, RngState, TemporalConfig};

type M = Vec<Vec<f64>>;

fn m(x: &Matrix) -> M {
    (0..x.rows()).map(|r| x.row(r).to_vec()).collect()
}

fn mm(a: &M, b: &M) -> M {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols).map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum()).collect()
        })
        .collect()
}

fn add_bias(a: &M, bias: &M) -> M {
    a.iter().map(|row| row.iter().zip(&bias[0]).map(|(x, y)| x + y).collect()).collect()
}

fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn tanh(a: &M) -> M {
    a.iter().map(|row| row.iter().map(|v| v.tanh()).collect()).collect()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn layer_norm(a: &M, gain: &M, bias: &M) -> M {
    a.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(c, x)| (x - mean) / (var + 1e-5).sqrt() * gain[0][c] + bias[0][c])
                .collect()
        })
        .collect()
}

fn encoding(t: f64, d: usize, standard: bool) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let i = (k / 2) as f64;
            if k % 2 == 0 {
                (t / 10000f64.powf(2.0 * i / d as f64)).sin()
            } else {
                let e = if standard { 2.0 * i } else { 2.0 * i + 1.0 };
                (t / 10000f64.powf(e / d as f64)).cos()
            }
        })
        .collect()
}

struct Oracle<'a> {
    cfg: &'a ModelConfig,
    p: &'a ModelParams,
    adj: Vec<Vec<Vec<usize>>>,
}

impl Oracle<'_> {
    fn probabilities(&self, x: &M, times: &[f64]) -> Vec<f64> {
        let cfg = self.cfg;
        let p = self.p;
        let n = x.len();
        let d = cfg.dim;
        let h0 = tanh(&mm(x, &m(&p.w1)));
        let base: M = times
            .iter()
            .map(|&t| {
                let s = (t - cfg.temporal.epoch_offset) / cfg.temporal.time_scale;
                encoding(s, d, cfg.temporal.standard_sinusoid)
            })
            .collect();
        let te = add_bias(&mm(&base, &m(&p.t_linear)), &m(&p.t_bias));
        let mut h = if cfg.temporal.enabled { add(&h0, &te) } else { h0 };

        let mut fused: M = vec![Vec::new(); n];
        for layer in &p.layers {
            let mut per_relation = Vec::new();
            for (r, w) in layer.combine.iter().enumerate() {
                let pooled: M = (0..n)
                    .map(|i| {
                        let nb = &self.adj[r][i];
                        let mut a = vec![0.0; d];
                        let mut b = vec![0.0; d];
                        for &j in nb {
                            for c in 0..d {
                                a[c] += h[j][c];
                                b[c] += h[i][c] - h[j][c];
                            }
                        }
                        if cfg.aggr == Aggregator::Mean && !nb.is_empty() {
                            for c in 0..d {
                                a[c] /= nb.len() as f64;
                                b[c] /= nb.len() as f64;
                            }
                        }
                        a.extend(b);
                        a
                    })
                    .collect();
                per_relation.push(tanh(&mm(&pooled, &m(w))));
            }
            let alpha = if cfg.relation_attention {
                let scores: Vec<f64> = per_relation
                    .iter()
                    .map(|hr| {
                        let s = tanh(&add_bias(&mm(hr, &m(&layer.w2)), &m(&layer.b)));
                        let q = &m(&layer.q)[0];
                        s.iter().map(|row| row.iter().zip(q).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>()
                            / n as f64
                    })
                    .collect();
                softmax(&scores)
            } else {
                vec![1.0 / per_relation.len() as f64; per_relation.len()]
            };
            h = (0..n)
                .map(|i| (0..d).map(|c| (0..per_relation.len()).map(|r| alpha[r] * per_relation[r][i][c]).sum()).collect())
                .collect();
            for i in 0..n {
                fused[i].extend(&h[i]);
            }
        }

        let z = if cfg.transformer {
            let dk = cfg.head_width() as f64;
            let mut cat: M = vec![Vec::new(); n];
            for s in 0..cfg.heads {
                let q = mm(&fused, &m(&p.wq[s]));
                let k = mm(&fused, &m(&p.wk[s]));
                let v = mm(&fused, &m(&p.wv[s]));
                for i in 0..n {
                    let logits: Vec<f64> = (0..n)
                        .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / dk.sqrt())
                        .collect();
                    let w = softmax(&logits);
                    let row: Vec<f64> = (0..v[0].len()).map(|c| (0..n).map(|j| w[j] * v[j][c]).sum()).collect();
                    cat[i].extend(row);
                }
            }
            let out = layer_norm(&add(&fused, &mm(&cat, &m(&p.wo))), &m(&p.ln1_gain), &m(&p.ln1_bias));
            let f = tanh(&add_bias(&mm(&out, &m(&p.ffn_w1)), &m(&p.ffn_b1)));
            let f = add_bias(&mm(&f, &m(&p.ffn_w2)), &m(&p.ffn_b2));
            layer_norm(&add(&out, &f), &m(&p.ln2_gain), &m(&p.ln2_bias))
        } else {
            fused
        };
        let hidden = tanh(&add_bias(&mm(&z, &m(&p.head_w1)), &m(&p.head_b1)));
        let logit = add_bias(&mm(&hidden, &m(&p.head_w2)), &m(&p.head_b2));
        logit.iter().map(|row| 1.0 / (1.0 + (-row[0]).exp())).collect()
    }
}

fn five_nodes() -> (MultiRelationGraph, Vec<Vec<Vec<usize>>>) {
    // relation 0: path 0-1-2 plus edge 3-4; relation 1: triangle 0-2-4, nodes 1 and 3 isolated
    let adj = vec![
        vec![vec![1], vec![0, 2], vec![1], vec![4], vec![3]],
        vec![vec![2, 4], vec![], vec![0, 4], vec![], vec![0, 2]],
    ];
    let features = Matrix::from_rows(&[
        vec![0.1, 0.9, 0.0],
        vec![0.5, 0.2, 1.0],
        vec![0.8, 0.4, 0.0],
        vec![0.3, 0.7, 1.0],
        vec![1.0, 0.0, 0.0],
    ]);
    let g = MultiRelationGraph::new(
        vec!["ip".into(), "mac".into()],
        adj.clone(),
        features,
        vec![1_600_000_000.0, 1_600_000_600.0, 1_600_003_600.0, 1_600_090_000.0, 1_600_000_060.0],
        vec![Label::Fraud, Label::Legit, Label::Fraud, Label::Legit, Label::Legit],
        vec![true, true, true, false, false],
        vec![false, false, false, true, true],
    )
    .unwrap();
    (g, adj)
}

fn randomized(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(cfg, 3, 2, seed).unwrap();
    let mut rng = RngState::new(seed + 1000);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.uniform(-0.8, 0.8);
        }
    }
    if !cfg.temporal.enabled {
        // disabled means the projection is held at zero
        p.t_linear = Matrix::zeros(cfg.dim, cfg.dim);
        p.t_bias = Matrix::zeros(1, cfg.dim);
    }
    p
}

fn check(cfg: ModelConfig) {
    let (g, adj) = five_nodes();
    for seed in 0..5 {
        let p = randomized(&cfg, seed);
        let got = forward(&g, &p, &cfg).unwrap().probabilities;
        let oracle = Oracle { cfg: &cfg, p: &p, adj: adj.clone() };
        let x = m(g.features());
        let want = oracle.probabilities(&x, g.timestamps());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

fn base() -> ModelConfig {
    ModelConfig {
        dim: 4,
        layers: 2,
        heads: 2,
        ffn_mult: 2,
        ..ModelConfig::default()
    }
}

#[test]
fn full_model_matches_loop_oracle() {
    check(base());
}

#[test]
fn variants_match_loop_oracle() {
    check(ModelConfig {
        aggr: Aggregator::Sum,
        relation_attention: false,
        ..base()
    });
    check(ModelConfig {
        transformer: false,
        layers: 1,
        temporal: TemporalConfig {
            standard_sinusoid: true,
            time_scale: 60.0,
            epoch_offset: 1.6e9,
            ..TemporalConfig::default()
        },
        ..base()
    });
    check(ModelConfig {
        temporal: TemporalConfig {
            enabled: false,
            ..TemporalConfig::default()
        },
        heads: 4,
        ..base()
    });
}
