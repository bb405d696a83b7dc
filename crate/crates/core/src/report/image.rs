//! Windowed 8-bit slice images and their lossless PNG encoding.

use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{in_plane_axes, BrainMask, Stack};

/// Display window: intensities at or below `lo` map to 0, at or above `hi`
/// to 255.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    /// The 1st to 99th percentile of the intensities inside the mask.
    pub fn from_mask(stack: &Stack, mask: &BrainMask) -> Result<Self> {
        mask.check_pair(stack)?;
        let inside: Vec<f64> = stack
            .voxels
            .iter()
            .zip(mask.voxels.iter())
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .collect();
        if inside.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let sorted = stats::sorted_copy(&inside);
        Ok(Window {
            lo: stats::percentile_sorted(&sorted, 1.0),
            hi: stats::percentile_sorted(&sorted, 99.0),
        })
    }

    pub fn apply(&self, v: f64) -> u8 {
        let width = self.hi - self.lo;
        if width <= 0.0 {
            return if v > self.lo { 255 } else { 0 };
        }
        ((v - self.lo) / width * 255.0).round().clamp(0.0, 255.0) as u8
    }
}

/// Row-major 8-bit grayscale image with the physical size of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// Millimetres per pixel along the columns and the rows.
    pub pixel_size: [f64; 2],
}

impl GrayImage {
    /// Rows run along the second axis of `plane`, columns along the first.
    fn from_plane(plane: ArrayView2<'_, f64>, window: Window, pixel_size: [f64; 2]) -> Self {
        let (width, height) = plane.dim();
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(window.apply(plane[[c, r]]));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
            pixel_size,
        }
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(&self.pixels)
            .expect("in-memory PNG data");
        w.finish().expect("in-memory PNG end");
        out
    }
}

/// One image per slice that holds at least one mask voxel.
pub fn mosaic(stack: &Stack, mask: &BrainMask, window: Window) -> Vec<(usize, GrayImage)> {
    let [a, b] = in_plane_axes(stack.through_plane_axis);
    mask.occupied_slices()
        .into_iter()
        .map(|s| {
            (
                s,
                GrayImage::from_plane(stack.slice(s), window, [stack.spacing[a], stack.spacing[b]]),
            )
        })
        .collect()
}

/// Sections through the middle of the mask bounding box along each in-plane
/// axis. Rows run across slices.
pub fn through_plane_views(
    stack: &Stack,
    mask: &BrainMask,
    window: Window,
) -> Result<[(usize, GrayImage); 2]> {
    let bb = mask.bounding_box().ok_or(Error::EmptyRegion)?;
    let t = stack.through_plane_axis;
    let view = |axis: usize| {
        let mid = (bb[axis].0 + bb[axis].1) / 2;
        let other = 3 - axis - t;
        // the remaining axes keep their order; put the slices on the rows
        let plane = stack.voxels.index_axis(Axis(axis), mid);
        let plane = if other < t {
            plane
        } else {
            plane.reversed_axes()
        };
        (
            mid,
            GrayImage::from_plane(plane, window, [stack.spacing[other], stack.spacing[t]]),
        )
    };
    let [a, b] = in_plane_axes(t);
    Ok([view(a), view(b)])
}
