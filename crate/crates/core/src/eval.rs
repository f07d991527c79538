//! Confusion counts, recall/precision/F1 and rank-based AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn masked_binary(labels: &[Label], mask: &[bool], len: usize) -> Result<Vec<(usize, bool)>> {
    if labels.len() != len || mask.len() != len {
        return Err(Error::Data("scores, labels and mask differ in length".into()));
    }
    let picked: Vec<(usize, bool)> = (0..len)
        .filter(|&i| mask[i])
        .map(|i| match labels[i] {
            Label::Fraud => Ok((i, true)),
            Label::Legit => Ok((i, false)),
            Label::Unlabeled => Err(Error::Data(format!("evaluated node {i} is unlabeled"))),
        })
        .collect::<Result<_>>()?;
    if picked.is_empty() {
        return Err(Error::Data("evaluation mask is empty".into()));
    }
    Ok(picked)
}

/// Predicts fraud iff `P ≥ threshold` and tallies outcomes over the mask.
pub fn confusion(probabilities: &[f64], labels: &[Label], mask: &[bool], threshold: f64) -> Result<Confusion> {
    let mut c = Confusion::default();
    for (i, positive) in masked_binary(labels, mask, probabilities.len())? {
        match (probabilities[i] >= threshold, positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(recall, precision, f1)` with `0/0` taken as 0.
pub fn recall_precision_f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    };
    (recall, precision, f1)
}

/// Mann–Whitney AUC: `(Σ ranks of positives − n₊(n₊+1)/2) / (n₊·n₋)`, with
/// tied scores sharing their average rank.
pub fn auc(scores: &[f64], labels: &[Label], mask: &[bool]) -> Result<f64> {
    let picked = masked_binary(labels, mask, scores.len())?;
    if picked.iter().any(|&(i, _)| scores[i].is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let mut order: Vec<(f64, bool)> = picked.iter().map(|&(i, y)| (scores[i], y)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = order.iter().filter(|(_, y)| *y).count();
    let n_neg = order.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("AUC needs at least one fraud and one legitimate node".into()));
    }
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && order[end + 1].0 == order[start].0 {
            end += 1;
        }
        // ranks start + 1 ..= end + 1
        let avg = (start + end + 2) as f64 / 2.0;
        let positives = order[start..=end].iter().filter(|(_, y)| *y).count();
        rank_sum += avg * positives as f64;
        start = end + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auc: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub threshold: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct") + "\n"
    }
}

/// Threshold metrics from probabilities; AUC from `scores`, which may be any
/// strictly increasing transform of the probabilities (logits avoid ties from
/// saturated sigmoids).
pub fn evaluate(
    probabilities: &[f64],
    scores: &[f64],
    labels: &[Label],
    mask: &[bool],
    threshold: f64,
) -> Result<MetricsReport> {
    let c = confusion(probabilities, labels, mask, threshold)?;
    let (recall, precision, f1) = recall_precision_f1(c.tp, c.fp, c.fn_);
    Ok(MetricsReport {
        recall,
        precision,
        f1,
        auc: auc(scores, labels, mask)?,
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| if b == 1 { Label::Fraud } else { Label::Legit }).collect()
    }

    fn pairwise(scores: &[f64], y: &[Label]) -> f64 {
        let (mut good, mut total) = (0.0, 0.0);
        for (i, a) in y.iter().enumerate() {
            for (j, b) in y.iter().enumerate() {
                if *a == Label::Fraud && *b == Label::Legit {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        good += 1.0;
                    } else if scores[i] == scores[j] {
                        good += 0.5;
                    }
                }
            }
        }
        good / total
    }

    #[test]
    fn confusion_examples() {
        let y = labels(&[1, 1, 1]);
        let all = [true; 3];
        let c = confusion(&[1.0; 3], &y, &all, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (3, 0, 0, 0));
        let c = confusion(&[0.0; 3], &y, &all, 0.5).unwrap();
        assert_eq!(c.fn_, 3);
        let c = confusion(&[0.9, 0.4, 0.6, 0.1], &labels(&[1, 1, 0, 0]), &[true; 4], 0.5).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (1, 1, 1, 1));
        let c = confusion(&[0.5], &labels(&[1]), &[true], 0.5).unwrap();
        assert_eq!(c.tp, 1);
        assert!(confusion(&[0.5], &labels(&[1]), &[false], 0.5).is_err());
    }

    #[test]
    fn rate_examples() {
        let (r, p, f) = recall_precision_f1(8, 0, 2);
        assert_eq!((r, p), (0.8, 1.0));
        assert_eq!(f, 1.6 / 1.8);
        let (_, _, f) = recall_precision_f1(4, 1, 1);
        assert!((f - 0.8).abs() < 1e-15);
        assert_eq!(recall_precision_f1(0, 3, 2), (0.0, 0.0, 0.0));
        assert_eq!(recall_precision_f1(0, 0, 0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn auc_examples() {
        let y = labels(&[1, 1, 0, 0]);
        let m = [true; 4];
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &y, &m).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &y, &m).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.4, 0.6, 0.1], &y, &m).unwrap(), 0.75);
        assert!(auc(&[0.1, 0.2], &labels(&[1, 1]), &[true, true]).is_err());
    }

    #[test]
    fn report_json_keys() {
        let r = evaluate(&[0.9, 0.4, 0.6, 0.1], &[0.9, 0.4, 0.6, 0.1], &labels(&[1, 1, 0, 0]), &[true; 4], 0.5)
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["auc", "f1", "fn", "fp", "precision", "recall", "threshold", "tn", "tp"]);
        assert_eq!(r.tp + r.fp + r.tn + r.fn_, 4);
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = RngState::new(99);
        for _ in 0..1000 {
            let n = 2 + rng.below(49);
            let coarse = rng.bernoulli(0.5);
            let scores: Vec<f64> = (0..n)
                .map(|_| if coarse { rng.below(5) as f64 } else { rng.next_f64() })
                .collect();
            let mut bits: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
            bits[0] = 1;
            bits[1] = 0;
            let y = labels(&bits);
            let got = auc(&scores, &y, &vec![true; n]).unwrap();
            assert!((got - pairwise(&scores, &y)).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn auc_rank_invariant(raw in prop::collection::vec(-5.0f64..5.0, 4..40), seed in 0u64..1000) {
            let mut rng = RngState::new(seed);
            let mut bits: Vec<u8> = raw.iter().map(|_| rng.bernoulli(0.5) as u8).collect();
            bits[0] = 1;
            bits[1] = 0;
            let y = labels(&bits);
            let m = vec![true; raw.len()];
            let base = auc(&raw, &y, &m).unwrap();
            let affine: Vec<f64> = raw.iter().map(|s| 3.0 * s + 1.0).collect();
            let cube: Vec<f64> = raw.iter().map(|s| s * s * s).collect();
            prop_assert_eq!(auc(&affine, &y, &m).unwrap(), base);
            prop_assert_eq!(auc(&cube, &y, &m).unwrap(), base);
            let mut sorted = raw.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[0] != w[1]) {
                let neg: Vec<f64> = raw.iter().map(|s| -s).collect();
                prop_assert!((auc(&neg, &y, &m).unwrap() - (1.0 - base)).abs() <= 1e-12);
            }
        }

        #[test]
        fn confusion_ignores_node_order(p in prop::collection::vec(0.0f64..1.0, 1..30), seed in 0u64..100) {
            let mut rng = RngState::new(seed);
            let bits: Vec<u8> = p.iter().map(|_| rng.bernoulli(0.5) as u8).collect();
            let y = labels(&bits);
            let m = vec![true; p.len()];
            let a = confusion(&p, &y, &m, 0.5).unwrap();
            let rp: Vec<f64> = p.iter().rev().copied().collect();
            let ry: Vec<Label> = y.iter().rev().copied().collect();
            prop_assert_eq!(a, confusion(&rp, &ry, &m, 0.5).unwrap());
            prop_assert_eq!(a.total(), p.len());
        }
    }
}
