use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What a CSV column means to the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRole {
    Id,
    Timestamp,
    Label,
    Continuous(String),
    Categorical(String),
    Relation(String),
}

impl FromStr for ColumnRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "id" => return Ok(ColumnRole::Id),
            "timestamp" => return Ok(ColumnRole::Timestamp),
            "label" => return Ok(ColumnRole::Label),
            _ => {}
        }
        let (kind, name) = s
            .split_once(':')
            .ok_or_else(|| Error::Schema(format!("unknown column role `{s}`")))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Schema(format!("role `{s}` is missing a field name")));
        }
        match kind.trim() {
            "continuous" => Ok(ColumnRole::Continuous(name.to_string())),
            "categorical" => Ok(ColumnRole::Categorical(name.to_string())),
            "relation" => Ok(ColumnRole::Relation(name.to_string())),
            other => Err(Error::Schema(format!("unknown column role `{other}`"))),
        }
    }
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRole::Id => f.write_str("id"),
            ColumnRole::Timestamp => f.write_str("timestamp"),
            ColumnRole::Label => f.write_str("label"),
            ColumnRole::Continuous(n) => write!(f, "continuous:{n}"),
            ColumnRole::Categorical(n) => write!(f, "categorical:{n}"),
            ColumnRole::Relation(n) => write!(f, "relation:{n}"),
        }
    }
}

/// Column-role map for a transaction CSV.
///
/// The text form is one `column = role` pair per line; blank lines and lines
/// starting with `#` are ignored. Exactly one id, timestamp and label column
/// is required.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<(String, ColumnRole)>,
}

impl Schema {
    pub fn new(columns: Vec<(String, ColumnRole)>) -> Result<Self> {
        for required in [ColumnRole::Id, ColumnRole::Timestamp, ColumnRole::Label] {
            let count = columns.iter().filter(|(_, r)| *r == required).count();
            if count != 1 {
                return Err(Error::Schema(format!(
                    "expected exactly one `{required}` column, found {count}"
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (col, _) in &columns {
            if !seen.insert(col.as_str()) {
                return Err(Error::Schema(format!("column `{col}` listed twice")));
            }
        }
        Ok(Schema { columns })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (col, role) = line.split_once('=').ok_or_else(|| {
                Error::Schema(format!("schema line {}: expected `column = role`", lineno + 1))
            })?;
            columns.push((col.trim().to_string(), role.parse()?));
        }
        Schema::new(columns)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.columns
            .iter()
            .map(|(c, r)| format!("{c} = {r}\n"))
            .collect()
    }

    pub fn columns(&self) -> &[(String, ColumnRole)] {
        &self.columns
    }

    pub fn column_for(&self, role: &ColumnRole) -> Option<&str> {
        self.columns
            .iter()
            .find(|(_, r)| r == role)
            .map(|(c, _)| c.as_str())
    }

    /// Relation field names in schema order.
    pub fn relation_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter_map(|(_, r)| match r {
                ColumnRole::Relation(n) => Some(n.clone()),
                _ => None,
            })
            .collect()
    }
}
