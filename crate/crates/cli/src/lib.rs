//! Scenario runner for the `kerr-junction` simulator: strict configuration,
//! named experiments and CSV output with a checksummed manifest.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod scenario;

pub use config::{default_config, ScenarioConfig};
