use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

use super::codec::EncodedFeatures;
use super::records::{Label, TransactionRecord};

/// Per-node sorted neighbor ids for one relation.
pub type Adjacency = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphOptions {
    /// Entities shared by more transactions than this get a subsampled clique
    /// of `cap·(cap−1)/2` edges.
    pub clique_cap: usize,
    pub seed: u64,
    /// When false, edges only join two training rows or two non-training rows.
    pub cross_split_edges: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            clique_cap: 100,
            seed: 0,
            cross_split_edges: true,
        }
    }
}

/// Connects every pair of records that share a non-empty entity value, per
/// relation field.
///
/// `partition`, when given, assigns each record a side; with
/// `cross_split_edges = false` only same-side pairs are linked.
pub fn build_adjacency(
    records: &[TransactionRecord],
    relation_fields: &[String],
    opts: &GraphOptions,
    partition: Option<&[bool]>,
) -> Result<Vec<Adjacency>> {
    if relation_fields.is_empty() {
        return Err(Error::Config("at least one relation field is required".into()));
    }
    if opts.clique_cap < 2 {
        return Err(Error::Config("clique cap must be at least 2".into()));
    }
    let n = records.len();
    let root = RngState::new(opts.seed);
    let mut out = Vec::with_capacity(relation_fields.len());
    for (r, field) in relation_fields.iter().enumerate() {
        let mut groups: BTreeMap<(bool, &str), Vec<usize>> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            let entity = rec.relations.get(field).map_or("", String::as_str);
            if entity.is_empty() {
                continue;
            }
            let side = match (opts.cross_split_edges, partition) {
                (false, Some(p)) => p[i],
                _ => false,
            };
            groups.entry((side, entity)).or_default().push(i);
        }

        let mut rng = root.split(r as u64);
        let mut adj: Adjacency = vec![Vec::new(); n];
        for members in groups.values() {
            let k = members.len();
            if k < 2 {
                continue;
            }
            if k <= opts.clique_cap {
                for a in 0..k {
                    for b in a + 1..k {
                        adj[members[a]].push(members[b]);
                        adj[members[b]].push(members[a]);
                    }
                }
            } else {
                let total = k * (k - 1) / 2;
                let target = opts.clique_cap * (opts.clique_cap - 1) / 2;
                for p in index::sample(&mut rng, total, target).into_iter() {
                    let (a, b) = pair_from_index(p);
                    adj[members[a]].push(members[b]);
                    adj[members[b]].push(members[a]);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        out.push(adj);
    }
    Ok(out)
}

/// Maps `p ∈ [0, k(k−1)/2)` to the pair `(a, b)` with `b < a`, enumerated row by row.
fn pair_from_index(p: usize) -> (usize, usize) {
    let mut a = ((1.0 + (1.0 + 8.0 * p as f64).sqrt()) / 2.0) as usize;
    while a * (a - 1) / 2 > p {
        a -= 1;
    }
    while (a + 1) * a / 2 <= p {
        a += 1;
    }
    (a, p - a * (a - 1) / 2)
}

/// Transactions as nodes, one undirected edge set per shared-entity relation.
///
/// Immutable after construction. The constructor checks symmetry, the absence
/// of self-edges, mask disjointness and that masked nodes carry binary labels.
#[derive(Debug, Clone)]
pub struct MultiRelationGraph {
    relation_names: Vec<String>,
    adjacency: Vec<Adjacency>,
    features: Matrix,
    timestamps: Vec<f64>,
    labels: Vec<Label>,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
    canonical: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub node_count: usize,
    pub relation_names: Vec<String>,
    pub edge_counts: BTreeMap<String, usize>,
    pub feature_dim: usize,
}

impl MultiRelationGraph {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        relation_names: Vec<String>,
        mut adjacency: Vec<Adjacency>,
        features: Matrix,
        timestamps: Vec<f64>,
        labels: Vec<Label>,
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = features.rows();
        if relation_names.is_empty() || relation_names.len() != adjacency.len() {
            return Err(Error::Data(format!(
                "{} relation names for {} adjacency sets",
                relation_names.len(),
                adjacency.len()
            )));
        }
        for (what, len) in [
            ("timestamps", timestamps.len()),
            ("labels", labels.len()),
            ("train mask", train_mask.len()),
            ("test mask", test_mask.len()),
        ] {
            if len != n {
                return Err(Error::Data(format!("{what} has length {len}, expected {n}")));
            }
        }
        if !features.is_finite() || features.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data("features must be finite and lie in [0, 1]".into()));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("timestamps must be finite".into()));
        }
        for (r, adj) in adjacency.iter_mut().enumerate() {
            if adj.len() != n {
                return Err(Error::Data(format!(
                    "relation `{}` has {} neighbor lists for {n} nodes",
                    relation_names[r],
                    adj.len()
                )));
            }
            for list in adj.iter_mut() {
                list.sort_unstable();
                list.dedup();
            }
            for (i, list) in adj.iter().enumerate() {
                for &j in list {
                    if j >= n || j == i {
                        return Err(Error::Data(format!(
                            "relation `{}`: invalid edge {i}-{j}",
                            relation_names[r]
                        )));
                    }
                    if adj[j].binary_search(&i).is_err() {
                        return Err(Error::Data(format!(
                            "relation `{}`: edge {i}->{j} has no reverse",
                            relation_names[r]
                        )));
                    }
                }
            }
        }
        for i in 0..n {
            if train_mask[i] && test_mask[i] {
                return Err(Error::Data(format!("node {i} is in both train and test masks")));
            }
            if (train_mask[i] || test_mask[i]) && !labels[i].is_labeled() {
                return Err(Error::Data(format!("masked node {i} is unlabeled")));
            }
        }
        let canonical = canonical_order(&features, &timestamps, &adjacency);
        Ok(MultiRelationGraph {
            relation_names,
            adjacency,
            features,
            timestamps,
            labels,
            train_mask,
            test_mask,
            canonical,
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn adjacency(&self, relation: usize) -> &Adjacency {
        &self.adjacency[relation]
    }

    pub fn neighbors(&self, relation: usize, node: usize) -> &[usize] {
        &self.adjacency[relation][node]
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    /// Undirected edge count of one relation.
    pub fn edge_count(&self, relation: usize) -> usize {
        self.adjacency[relation].iter().map(Vec::len).sum::<usize>() / 2
    }

    /// A node order that depends only on the graph up to relabeling.
    ///
    /// Position `k` holds the original id of the `k`-th node. Nodes are sorted
    /// by their stable color under relation-aware color refinement seeded with
    /// (timestamp, feature row). Nodes sharing a color receive bit-identical
    /// values from every computation in the model, so their relative order
    /// never affects a result.
    pub fn canonical_order(&self) -> &[usize] {
        &self.canonical
    }

    /// Copy with node `i` of the result taken from node `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<MultiRelationGraph> {
        let n = self.node_count();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::Data("argument is not a permutation".into()));
            }
            inverse[old] = new;
        }
        if order.len() != n {
            return Err(Error::Data("argument is not a permutation".into()));
        }
        let adjacency = self
            .adjacency
            .iter()
            .map(|adj| {
                order
                    .iter()
                    .map(|&old| adj[old].iter().map(|&j| inverse[j]).collect())
                    .collect()
            })
            .collect();
        MultiRelationGraph::new(
            self.relation_names.clone(),
            adjacency,
            self.features.select_rows(order),
            order.iter().map(|&i| self.timestamps[i]).collect(),
            order.iter().map(|&i| self.labels[i]).collect(),
            order.iter().map(|&i| self.train_mask[i]).collect(),
            order.iter().map(|&i| self.test_mask[i]).collect(),
        )
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            node_count: self.node_count(),
            relation_names: self.relation_names.clone(),
            edge_counts: self
                .relation_names
                .iter()
                .enumerate()
                .map(|(r, name)| (name.clone(), self.edge_count(r)))
                .collect(),
            feature_dim: self.features.cols(),
        }
    }
}

/// Assembles a graph from already-encoded records.
pub fn build_graph(
    records: &[TransactionRecord],
    encoded: EncodedFeatures,
    relation_fields: &[String],
    opts: &GraphOptions,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
) -> Result<MultiRelationGraph> {
    if encoded.features.rows() != records.len() {
        return Err(Error::Data(format!(
            "{} encoded rows for {} records",
            encoded.features.rows(),
            records.len()
        )));
    }
    let adjacency = build_adjacency(records, relation_fields, opts, Some(&train_mask))?;
    MultiRelationGraph::new(
        relation_fields.to_vec(),
        adjacency,
        encoded.features,
        encoded.timestamps,
        records.iter().map(|r| r.label).collect(),
        train_mask,
        test_mask,
    )
}

fn dense_rank<K: Ord>(keys: &[K]) -> (Vec<u32>, usize) {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0u32; keys.len()];
    let mut classes = 0usize;
    for (pos, &i) in idx.iter().enumerate() {
        if pos > 0 && keys[idx[pos - 1]] != keys[i] {
            classes += 1;
        }
        ranks[i] = classes as u32;
    }
    (ranks, if keys.is_empty() { 0 } else { classes + 1 })
}

fn canonical_order(features: &Matrix, timestamps: &[f64], adjacency: &[Adjacency]) -> Vec<usize> {
    let n = features.rows();
    let initial: Vec<Vec<u64>> = (0..n)
        .map(|i| {
            std::iter::once(timestamps[i].to_bits())
                .chain(features.row(i).iter().map(|v| v.to_bits()))
                .collect()
        })
        .collect();
    let (mut color, mut classes) = dense_rank(&initial);
    loop {
        let signatures: Vec<Vec<u32>> = (0..n)
            .map(|i| {
                let mut sig = vec![color[i]];
                for adj in adjacency {
                    let mut neigh: Vec<u32> = adj[i].iter().map(|&j| color[j]).collect();
                    neigh.sort_unstable();
                    sig.push(neigh.len() as u32);
                    sig.extend(neigh);
                }
                sig
            })
            .collect();
        let (next, next_classes) = dense_rank(&signatures);
        color = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (color[i], i));
    order
}
