//! Reference-based validation metrics for image analysis, plus a decision
//! graph that maps a problem fingerprint to a recommended metric pool.
//!
//! Layout:
//! - [`model`]: shared value types (fingerprints, confusion matrices, grids, instances, samples).
//! - [`counting`], [`threshold`], [`boundary`], [`calibration`], [`detection`]: metric families.
//! - [`aggregation`]: NaN handling, hierarchical and class aggregation, bootstrap intervals.
//! - [`catalog`]: metric identities, ranges and cheat-sheet records.
//! - [`recommend`]: decision graph, traversal, sessions and metric pools.
//! - [`evaluate`]: dataset ingestion and pool-driven evaluation reports.

// `!(x >= 0.0)` style guards reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod aggregation;
pub mod boundary;
pub mod calibration;
pub mod catalog;
pub mod counting;
pub mod detection;
pub mod error;
pub mod evaluate;
pub mod model;
pub mod recommend;
pub mod threshold;

pub use error::{Error, Result};
