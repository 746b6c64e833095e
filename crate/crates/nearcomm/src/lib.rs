//! File formats, the experiment driver and the `nearcomm` command line on
//! top of `nearcomm-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod document;
pub mod error;
pub mod pipeline;
pub mod scan;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
