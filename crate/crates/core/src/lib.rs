//! Spatiotemporal action tube toolkit.
//!
//! Builds, predicts and evaluates action tubes from frame-level detection
//! data: offline two-pass dynamic-programming construction, incremental
//! online linking with causal temporal labelling, anchor transition-matrix
//! estimation for micro-tube proposals, future-tube completion, the full
//! ST-IoU metric suite, and a deterministic synthetic detection simulator.

pub mod anchors;
pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod offline;
pub mod online;
pub mod pipeline;
pub mod sim;

pub use error::{Error, Result};
