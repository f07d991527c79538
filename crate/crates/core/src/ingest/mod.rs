//! Raw transaction records, CSV ingestion, feature preprocessing and the
//! multi-relation transaction graph.

mod codec;
mod graph;
mod records;
mod schema;

pub use codec::{fit_codec, ContinuousRange, EncodedFeatures, FeatureCodec};
pub use graph::{build_adjacency, build_graph, Adjacency, GraphOptions, GraphSummary, MultiRelationGraph};
pub use records::{downsample_legitimate, downsample_legitimate_where, parse_csv, read_csv, write_csv, Label, TransactionRecord};
pub use schema::{ColumnRole, Schema};
