//! File formats, configuration and the command-line inspection pipeline
//! built on `scaffold-core`.
//!
//! The `scaffold-inspect` binary wraps [`commands`]; the same functions are
//! usable as a library on in-memory clouds through [`pipeline`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use io::{load_cloud, save_cloud, CloudFormat, SaveFormat};
pub use pipeline::{PipelineError, Stage};
