//! Command-line front end: configuration handling and the `generate`,
//! `train`, `evaluate` and `ablate` commands.

pub mod commands;
pub mod config;

use fraudgt_core::{Error, ErrorKind};

pub use config::RunConfig;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
        ErrorKind::Io => EXIT_IO,
    }
}
