//! Image quality metrics computed from a stack and its brain mask.

pub mod catalog;
pub mod filters;
pub mod intensity;
pub mod pair;
pub mod shape;

use serde::{Deserialize, Serialize};

use crate::volume::{in_plane_axes, BrainMask, Stack};

pub use catalog::{extract_all_iqms, FeatureCatalog, FeatureDef, FeatureKind, IqmVector};
pub use intensity::{
    bias_level, image_entropy, sharpness_filters, slice_loss, summary_stats, SliceLossParams,
    SummaryStats,
};
pub use pair::{mutual_information, PairMetric, SlicePairMetricSet};
pub use shape::{centroid_features, closing_mask, mask_sharpness, mask_volume, rank_error};

/// Which slices of the stack a metric looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// The third of the brain slices closest to the mask centroid.
    CenterThird,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Mean,
    Median,
}

impl Aggregate {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Aggregate::Mean => crate::stats::mean(values),
            Aggregate::Median => crate::stats::median(values),
        }
    }
}

/// How the masks of two slices are combined into a comparison region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskCombine {
    Union,
    #[default]
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Laplace,
    Sobel,
}

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_CLOSING_RADIUS: usize = 1;
pub const DEFAULT_RANK_THRESHOLD: f64 = 0.99;
pub const PAIR_HISTOGRAM_BINS: usize = 32;
pub const ENTROPY_BINS: usize = 128;

/// Slices containing brain that belong to `region`, in increasing order.
pub fn region_slices(mask: &BrainMask, region: Region) -> Vec<usize> {
    let occupied = mask.occupied_slices();
    match region {
        Region::Full => occupied,
        Region::CenterThird => {
            if occupied.is_empty() {
                return occupied;
            }
            let centroid = mask_centroid_along(mask, mask.through_plane_axis);
            let keep = occupied.len().div_ceil(3);
            let mut by_distance = occupied.clone();
            by_distance.sort_by(|&a, &b| {
                (a as f64 - centroid)
                    .abs()
                    .total_cmp(&(b as f64 - centroid).abs())
                    .then(a.cmp(&b))
            });
            let mut chosen: Vec<usize> = by_distance.into_iter().take(keep).collect();
            chosen.sort_unstable();
            chosen
        }
    }
}

/// Voxel-weighted mean index of the mask along `axis`.
fn mask_centroid_along(mask: &BrainMask, axis: usize) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (idx, &v) in mask.voxels.indexed_iter() {
        if v {
            let i = [idx.0, idx.1, idx.2][axis];
            sum += i as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One slice with background zeroed, flattened row-major over the two
/// in-plane axes.
#[derive(Debug, Clone)]
pub struct MaskedSlice {
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn masked_slice(stack: &Stack, mask: &BrainMask, index: usize) -> MaskedSlice {
    let img = stack.slice(index);
    let m = mask.slice(index);
    let (rows, cols) = img.dim();
    let mut values = Vec::with_capacity(rows * cols);
    let mut flags = Vec::with_capacity(rows * cols);
    for (v, &inside) in img.iter().zip(m.iter()) {
        values.push(if inside { *v } else { 0.0 });
        flags.push(inside);
    }
    MaskedSlice {
        index,
        rows,
        cols,
        values,
        mask: flags,
    }
}

/// In-mask intensities of a stack in memory order.
pub(crate) fn in_mask_values(stack: &Stack, mask: &BrainMask) -> Vec<f64> {
    stack
        .voxels
        .iter()
        .zip(mask.voxels.iter())
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .collect()
}

/// Physical in-plane coordinates (mm) of voxel `(r, c)` in a slice.
pub(crate) fn in_plane_mm(
    spacing: [f64; 3],
    through_plane: usize,
    r: usize,
    c: usize,
) -> (f64, f64) {
    let [a, b] = in_plane_axes(through_plane);
    (r as f64 * spacing[a], c as f64 * spacing[b])
}
