use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::RngState;

use super::schema::{ColumnRole, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Label {
    Legit,
    Fraud,
    Unlabeled,
}

impl Label {
    pub fn as_binary(self) -> Option<f64> {
        match self {
            Label::Legit => Some(0.0),
            Label::Fraud => Some(1.0),
            Label::Unlabeled => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }

    fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "0" => Some(Label::Legit),
            "1" => Some(Label::Fraud),
            "" => Some(Label::Unlabeled),
            _ => None,
        }
    }

    fn as_csv(self) -> &'static str {
        match self {
            Label::Legit => "0",
            Label::Fraud => "1",
            Label::Unlabeled => "",
        }
    }
}

/// One raw transaction row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub txn_id: String,
    /// Integer seconds since the epoch.
    pub timestamp: i64,
    pub continuous: BTreeMap<String, f64>,
    pub categorical: BTreeMap<String, String>,
    /// Relation name to entity id (empty string: no entity).
    pub relations: BTreeMap<String, String>,
    pub label: Label,
}

/// Parses a transaction CSV laid out according to `schema`.
pub fn parse_csv(path: &Path, schema: &Schema) -> Result<Vec<TransactionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Vec<TransactionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();

    let mut index = Vec::with_capacity(schema.columns().len());
    for (col, role) in schema.columns() {
        let pos = headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| Error::Schema(format!("missing column `{col}` ({role})")))?;
        index.push((pos, role));
    }

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Row {
                line,
                detail: e.to_string(),
            }
        })?;
        let line = row.position().map_or(out.len() + 2, |p| p.line() as usize);
        let row_err = |detail: String| Error::Row { line, detail };

        let mut rec = TransactionRecord {
            txn_id: String::new(),
            timestamp: 0,
            continuous: BTreeMap::new(),
            categorical: BTreeMap::new(),
            relations: BTreeMap::new(),
            label: Label::Unlabeled,
        };
        for &(pos, role) in &index {
            let raw = row.get(pos).unwrap_or("");
            match role {
                ColumnRole::Id => rec.txn_id = raw.to_string(),
                ColumnRole::Timestamp => {
                    let t: i64 = raw
                        .trim()
                        .parse()
                        .map_err(|_| row_err(format!("unparseable timestamp `{raw}`")))?;
                    if t < 0 {
                        return Err(row_err(format!("negative timestamp {t}")));
                    }
                    rec.timestamp = t;
                }
                ColumnRole::Label => {
                    rec.label =
                        Label::parse(raw).ok_or_else(|| row_err(format!("invalid label `{raw}`")))?;
                }
                ColumnRole::Continuous(name) => {
                    let v: f64 = raw
                        .trim()
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| row_err(format!("unparseable value `{raw}` for {name}")))?;
                    rec.continuous.insert(name.clone(), v);
                }
                ColumnRole::Categorical(name) => {
                    rec.categorical.insert(name.clone(), raw.to_string());
                }
                ColumnRole::Relation(name) => {
                    rec.relations.insert(name.clone(), raw.trim().to_string());
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes records in the column order of `schema`.
pub fn write_csv<W: Write>(writer: W, schema: &Schema, records: &[TransactionRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
    wtr.write_record(schema.columns().iter().map(|(c, _)| c.as_str()))
        .map_err(to_err)?;
    let mut fields: Vec<String> = Vec::with_capacity(schema.columns().len());
    for rec in records {
        fields.clear();
        for (_, role) in schema.columns() {
            fields.push(match role {
                ColumnRole::Id => rec.txn_id.clone(),
                ColumnRole::Timestamp => rec.timestamp.to_string(),
                ColumnRole::Label => rec.label.as_csv().to_string(),
                ColumnRole::Continuous(n) => rec.continuous.get(n).map_or(String::new(), |v| v.to_string()),
                ColumnRole::Categorical(n) => rec.categorical.get(n).cloned().unwrap_or_default(),
                ColumnRole::Relation(n) => rec.relations.get(n).cloned().unwrap_or_default(),
            });
        }
        wtr.write_record(&fields).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Keeps every fraud row and each legitimate row independently with
/// probability `ratio`. One uniform draw is consumed per legitimate row, in
/// input order.
pub fn downsample_legitimate(
    records: &[TransactionRecord],
    ratio: f64,
    rng: &mut RngState,
) -> Result<Vec<TransactionRecord>> {
    downsample_legitimate_where(records, ratio, rng, |_| true)
}

/// Like [`downsample_legitimate`], restricted to rows selected by `eligible`
/// (typically the training period). Other rows pass through untouched.
pub fn downsample_legitimate_where(
    records: &[TransactionRecord],
    ratio: f64,
    rng: &mut RngState,
    eligible: impl Fn(&TransactionRecord) -> bool,
) -> Result<Vec<TransactionRecord>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "down-sampling ratio must lie in (0, 1], got {ratio}"
        )));
    }
    let mut kept = Vec::with_capacity(records.len());
    for rec in records {
        if rec.label == Label::Legit && eligible(rec) {
            if rng.next_f64() < ratio {
                kept.push(rec.clone());
            }
        } else {
            kept.push(rec.clone());
        }
    }
    Ok(kept)
}
