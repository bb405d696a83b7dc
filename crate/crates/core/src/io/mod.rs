//! File formats: NIfTI volumes, BIDS layouts and the toolkit's tables.

pub mod bids;
pub mod nifti;
pub mod tables;

pub use bids::{index_bids, DatasetEntry, DatasetIndex};
pub use nifti::{load_mask, load_nifti, save_mask, save_nifti};
pub use tables::{IqmRow, IqmTable, QcLabel, Rating};
