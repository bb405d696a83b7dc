//! Mask-derived metrics: volume, slice-centroid dispersion, through-plane
//! closing, mask edge sharpness, and the SVD rank error of the slices.

use nalgebra::DMatrix;
use ndarray::{Array3, Axis};

use crate::error::{Error, Result};
use crate::iqm::{filters, in_plane_mm, masked_slice, region_slices, Filter, Region};
use crate::volume::{in_plane_axes, BrainMask, Stack};

/// Brain volume in mm³.
pub fn mask_volume(mask: &BrainMask) -> Result<f64> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(n as f64 * mask.spacing.iter().product::<f64>())
}

/// Mean and max in-plane distance (mm) between each slice's mask centroid
/// and the centroid of the whole mask.
pub fn centroid_features(mask: &BrainMask, region: Region) -> Result<(f64, f64)> {
    let slices = region_slices(mask, region);
    if slices.len() < 2 {
        return Err(Error::InsufficientSlices(slices.len()));
    }
    let tp = mask.through_plane_axis;
    let slice_centroid = |s: usize| -> (f64, f64, usize) {
        let (mut x, mut y, mut n) = (0.0, 0.0, 0usize);
        for ((r, c), &v) in mask.slice(s).indexed_iter() {
            if v {
                let (px, py) = in_plane_mm(mask.spacing, tp, r, c);
                x += px;
                y += py;
                n += 1;
            }
        }
        (x, y, n)
    };
    let (mut gx, mut gy, mut gn) = (0.0, 0.0, 0usize);
    for s in mask.occupied_slices() {
        let (x, y, n) = slice_centroid(s);
        gx += x;
        gy += y;
        gn += n;
    }
    let (gx, gy) = (gx / gn as f64, gy / gn as f64);
    let dists: Vec<f64> = slices
        .iter()
        .map(|&s| {
            let (x, y, n) = slice_centroid(s);
            let (cx, cy) = (x / n as f64, y / n as f64);
            ((cx - gx).powi(2) + (cy - gy).powi(2)).sqrt()
        })
        .collect();
    let mean = crate::stats::mean(&dists);
    let max = dists.iter().copied().fold(0.0, f64::max);
    Ok((mean, max))
}

/// Binary closing along the through-plane axis with a 1D element of
/// half-length `radius`. Outside the grid counts as background for the
/// dilation and foreground for the erosion, so the result contains the input.
pub fn close_through_plane(mask: &BrainMask, radius: usize) -> Array3<bool> {
    let axis = Axis(mask.through_plane_axis);
    let n = mask.voxels.len_of(axis);
    let r = radius as isize;
    let mut dilated = mask.voxels.clone();
    for (src, mut dst) in mask
        .voxels
        .lanes(axis)
        .into_iter()
        .zip(dilated.lanes_mut(axis))
    {
        for i in 0..n {
            dst[i] = (-r..=r).any(|t| {
                let p = i as isize + t;
                p >= 0 && (p as usize) < n && src[p as usize]
            });
        }
    }
    let mut closed = dilated.clone();
    for (src, mut dst) in dilated.lanes(axis).into_iter().zip(closed.lanes_mut(axis)) {
        for i in 0..n {
            dst[i] = (-r..=r).all(|t| {
                let p = i as isize + t;
                p < 0 || p as usize >= n || src[p as usize]
            });
        }
    }
    closed
}

/// Voxels added by a through-plane closing, relative to the original mask
/// size, counted over the slices of `region` (taken on the closed mask, so
/// slices that the closing fills in are included).
pub fn closing_mask(mask: &BrainMask, region: Region, radius: usize) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let closed = close_through_plane(mask, radius);
    let axis = Axis(mask.through_plane_axis);
    let closed_mask = BrainMask {
        voxels: closed,
        ..mask.clone()
    };
    let (mut added, mut original) = (0usize, 0usize);
    for s in region_slices(&closed_mask, region) {
        let orig = mask.voxels.index_axis(axis, s);
        let cl = closed_mask.voxels.index_axis(axis, s);
        for (&o, &c) in orig.iter().zip(cl.iter()) {
            original += o as usize;
            added += (c && !o) as usize;
        }
    }
    if original == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(added as f64 / original as f64)
}

/// Mean absolute Laplace or Sobel response (1/mm) of the binary mask over
/// its bounding box.
pub fn mask_sharpness(mask: &BrainMask, filter: Filter) -> Result<f64> {
    let bb = mask.bounding_box().ok_or(Error::EmptyRegion)?;
    let data = mask.voxels.mapv(|v| if v { 1.0 } else { 0.0 });
    let weight = [
        1.0 / mask.spacing[0],
        1.0 / mask.spacing[1],
        1.0 / mask.spacing[2],
    ];
    let response = match filter {
        Filter::Laplace => filters::laplace(&data, weight),
        Filter::Sobel => filters::sobel_magnitude(&data, weight),
    };
    let view = response.slice(ndarray::s![
        bb[0].0..=bb[0].1,
        bb[1].0..=bb[1].1,
        bb[2].0..=bb[2].1
    ]);
    Ok(view.iter().map(|v| v.abs()).sum::<f64>() / view.len() as f64)
}

/// Smallest rank whose cumulative energy reaches `threshold`, and the
/// relative Frobenius error of the rank-r truncation.
pub fn truncation(singular_values: &[f64], threshold: f64) -> (usize, f64) {
    let energy: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();
    if total <= 0.0 {
        return (0, 0.0);
    }
    let mut acc = 0.0;
    let mut rank = energy.len();
    for (i, e) in energy.iter().enumerate() {
        acc += e;
        if acc / total >= threshold - 1e-12 {
            rank = i + 1;
            break;
        }
    }
    let tail: f64 = energy[rank..].iter().sum();
    (rank, (tail / total).max(0.0).sqrt())
}

/// Compressibility of the stack: slices are flattened into the rows of a
/// matrix; with `r` the rank keeping `threshold` of the energy, returns
/// `r / n_slices` times the relative reconstruction error at rank `r`.
/// Higher values mean less consistent slices.
pub fn rank_error(stack: &Stack, mask: &BrainMask, region: Region, threshold: f64) -> Result<f64> {
    mask.check_pair(stack)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be in (0, 1), got {threshold}"
        )));
    }
    let slices = region_slices(mask, region);
    if slices.len() < 2 {
        return Err(Error::InsufficientSlices(slices.len()));
    }
    // crop columns to the in-plane bounding box of the mask
    let bb = mask.bounding_box().ok_or(Error::EmptyRegion)?;
    let [a, b] = in_plane_axes(mask.through_plane_axis);
    let (r0, r1) = bb[a];
    let (c0, c1) = bb[b];
    let width = c1 - c0 + 1;
    let ncols = (r1 - r0 + 1) * width;
    let mut m = DMatrix::<f64>::zeros(ncols, slices.len());
    for (col, &s) in slices.iter().enumerate() {
        let ms = masked_slice(stack, mask, s);
        for r in r0..=r1 {
            for c in c0..=c1 {
                m[((r - r0) * width + (c - c0), col)] = ms.values[r * ms.cols + c];
            }
        }
    }
    let sv = m.singular_values();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let (rank, err) = truncation(&sv, threshold);
    Ok(rank as f64 / slices.len() as f64 * err)
}
