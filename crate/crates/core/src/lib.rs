//! Heterogeneous graph neural network with temporal encoding and global
//! self-attention for transaction fraud detection.

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod global_attn;
pub mod hetero_gnn;
pub mod ingest;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod synth;
pub mod temporal;
pub mod train;

pub use checkpoint::Checkpoint;
pub use error::{Error, ErrorKind, Result};
pub use eval::{evaluate, MetricsReport};
pub use ingest::{Label, MultiRelationGraph, Schema, TransactionRecord};
pub use model::{forward, ForwardTrace, ModelConfig, ModelParams};
pub use numerics::{Matrix, RngState};
pub use pipeline::{prepare_data, DataConfig, PreparedData};
pub use synth::{generate, SynthConfig};
pub use temporal::TemporalConfig;
pub use train::{train_loop, TrainConfig, TrainingLog};
