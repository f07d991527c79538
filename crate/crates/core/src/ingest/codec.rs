use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

use super::records::TransactionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// One-hot vocabularies and min-max ranges fitted on training rows.
///
/// Feature layout: continuous fields in name order, then one one-hot block per
/// categorical field in name order, categories sorted within each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCodec {
    pub continuous: Vec<ContinuousRange>,
    pub categorical: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeatures {
    pub features: Matrix,
    pub timestamps: Vec<f64>,
}

pub fn fit_codec(records: &[TransactionRecord]) -> FeatureCodec {
    let mut ranges: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    let mut vocab: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for rec in records {
        for (name, &v) in &rec.continuous {
            let e = ranges.entry(name).or_insert((v, v));
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        }
        for (name, v) in &rec.categorical {
            vocab.entry(name).or_default().insert(v);
        }
    }
    FeatureCodec {
        continuous: ranges
            .into_iter()
            .map(|(name, (min, max))| ContinuousRange {
                name: name.to_string(),
                min,
                max,
            })
            .collect(),
        categorical: vocab
            .into_iter()
            .map(|(name, cats)| (name.to_string(), cats.into_iter().map(str::to_string).collect()))
            .collect(),
    }
}

impl FeatureCodec {
    pub fn feature_dim(&self) -> usize {
        self.continuous.len() + self.categorical.iter().map(|(_, v)| v.len()).sum::<usize>()
    }

    /// Min-max scaling clamped to `[0, 1]`; a constant training column maps to 0.
    pub fn scale(range: &ContinuousRange, x: f64) -> f64 {
        let span = range.max - range.min;
        if span <= 0.0 {
            0.0
        } else {
            ((x - range.min) / span).clamp(0.0, 1.0)
        }
    }

    pub fn category_index(&self, field: &str, value: &str) -> Option<usize> {
        let (_, vocab) = self.categorical.iter().find(|(n, _)| n == field)?;
        vocab.binary_search_by(|c| c.as_str().cmp(value)).ok()
    }

    pub fn decode_category(&self, field: &str, index: usize) -> Option<&str> {
        let (_, vocab) = self.categorical.iter().find(|(n, _)| n == field)?;
        vocab.get(index).map(String::as_str)
    }

    pub fn encode_record(&self, rec: &TransactionRecord, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.feature_dim());
        out.fill(0.0);
        for (slot, range) in out.iter_mut().zip(&self.continuous) {
            if let Some(&v) = rec.continuous.get(&range.name) {
                *slot = Self::scale(range, v);
            }
        }
        let mut offset = self.continuous.len();
        for (name, vocab) in &self.categorical {
            if let Some(v) = rec.categorical.get(name) {
                if let Ok(i) = vocab.binary_search_by(|c| c.as_str().cmp(v)) {
                    out[offset + i] = 1.0;
                }
            }
            offset += vocab.len();
        }
    }

    /// Encodes rows into an `N × feature_dim` matrix plus raw timestamps.
    pub fn encode(&self, records: &[TransactionRecord]) -> EncodedFeatures {
        let dim = self.feature_dim();
        let mut features = Matrix::zeros(records.len(), dim);
        for (i, rec) in records.iter().enumerate() {
            self.encode_record(rec, features.row_mut(i));
        }
        EncodedFeatures {
            features,
            timestamps: records.iter().map(|r| r.timestamp as f64).collect(),
        }
    }
}
