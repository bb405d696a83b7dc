//! Quality assessment of low-resolution fetal brain MR stacks.
//!
//! The crate extracts a catalog of interpretable image quality metrics from
//! each stack and its brain mask, learns to predict expert ratings from
//! them, and renders per-stack HTML review reports.

pub mod error;
pub mod eval;
pub mod io;
pub mod iqm;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{BrainMask, Stack};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
