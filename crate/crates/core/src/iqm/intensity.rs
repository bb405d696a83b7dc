//! Intensity-based metrics: inter-slice losses, summary statistics, entropy,
//! bias level and filter sharpness.

use std::collections::HashMap;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iqm::filters;
use crate::iqm::pair::{compare_slices, PairMetric, SlicePairMetricSet};
use crate::iqm::{
    in_mask_values, masked_slice, region_slices, Aggregate, Filter, MaskCombine, MaskedSlice,
    Region,
};
use crate::stats::{self, bin_index, entropy_bits, min_max};
use crate::volume::{BrainMask, Stack};

/// Voxels a whole-volume metric is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelRegion {
    Mask,
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceLossParams {
    pub metric: PairMetric,
    /// `None` compares every pair of slices, `Some(k)` only pairs at most `k` slices apart.
    pub window: Option<usize>,
    pub region: Region,
    pub aggregate: Aggregate,
    pub combine: MaskCombine,
}

impl SliceLossParams {
    pub fn new(metric: PairMetric) -> Self {
        SliceLossParams {
            metric,
            window: None,
            region: Region::Full,
            aggregate: Aggregate::Mean,
            combine: MaskCombine::Intersection,
        }
    }
}

/// Dynamic range used for PSNR and SSIM: 99th percentile of in-mask intensities.
pub(crate) fn dynamic_range(stack: &Stack, mask: &BrainMask) -> Result<f64> {
    let v = in_mask_values(stack, mask);
    if v.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(stats::percentile(&v, 99.0))
}

/// Slice-pair metrics of one stack, computed on demand and cached so that
/// many slice-loss variants can share them.
pub(crate) struct PairCache<'a> {
    stack: &'a Stack,
    mask: &'a BrainMask,
    dynamic_range: f64,
    slices: HashMap<usize, MaskedSlice>,
    pairs: HashMap<(usize, usize, MaskCombine), Option<SlicePairMetricSet>>,
    regions: HashMap<Region, Vec<usize>>,
}

impl<'a> PairCache<'a> {
    pub(crate) fn new(stack: &'a Stack, mask: &'a BrainMask) -> Result<Self> {
        mask.check_pair(stack)?;
        Ok(PairCache {
            stack,
            mask,
            dynamic_range: dynamic_range(stack, mask)?,
            slices: HashMap::new(),
            pairs: HashMap::new(),
            regions: HashMap::new(),
        })
    }

    fn pair(&mut self, i: usize, j: usize, combine: MaskCombine) -> Option<SlicePairMetricSet> {
        if let Some(hit) = self.pairs.get(&(i, j, combine)) {
            return *hit;
        }
        for s in [i, j] {
            if !self.slices.contains_key(&s) {
                self.slices
                    .insert(s, masked_slice(self.stack, self.mask, s));
            }
        }
        let m = compare_slices(
            &self.slices[&i],
            &self.slices[&j],
            combine,
            self.dynamic_range,
        );
        self.pairs.insert((i, j, combine), m);
        m
    }

    pub(crate) fn loss(&mut self, params: &SliceLossParams) -> Result<f64> {
        if params.window == Some(0) {
            return Err(Error::InvalidArgument("window must be >= 1".into()));
        }
        let slices = self
            .regions
            .entry(params.region)
            .or_insert_with(|| region_slices(self.mask, params.region))
            .clone();
        if slices.len() < 2 {
            return Err(Error::InsufficientSlices(slices.len()));
        }
        let mut values = Vec::new();
        for (a, &i) in slices.iter().enumerate() {
            for &j in &slices[a + 1..] {
                if params.window.is_some_and(|k| j - i > k) {
                    break;
                }
                if let Some(m) = self.pair(i, j, params.combine) {
                    values.push(m.get(params.metric));
                }
            }
        }
        if values.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(params.aggregate.apply(&values))
    }
}

/// Aggregated difference between slices of the stack along the through-plane axis.
pub fn slice_loss(stack: &Stack, mask: &BrainMask, params: &SliceLossParams) -> Result<f64> {
    PairCache::new(stack, mask)?.loss(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub p5: f64,
    pub p95: f64,
    pub cov: f64,
    /// Excess (Fisher) kurtosis; 0 for constant input.
    pub kurtosis: f64,
}

pub fn summary_stats(stack: &Stack, mask: &BrainMask) -> Result<SummaryStats> {
    mask.check_pair(stack)?;
    let v = in_mask_values(stack, mask);
    if v.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let sorted = stats::sorted_copy(&v);
    let mean = stats::mean(&v);
    let n = v.len() as f64;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let std = m2.sqrt();
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    Ok(SummaryStats {
        mean,
        median: stats::percentile_sorted(&sorted, 50.0),
        std,
        p5: stats::percentile_sorted(&sorted, 5.0),
        p95: stats::percentile_sorted(&sorted, 95.0),
        cov: if mean > 0.0 { std / mean } else { 0.0 },
        kurtosis,
    })
}

/// Shannon entropy (bits) of the equal-width intensity histogram.
pub fn image_entropy(
    stack: &Stack,
    mask: &BrainMask,
    region: VoxelRegion,
    bins: usize,
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "bins must be >= 2, got {bins}"
        )));
    }
    let values: Vec<f64> = match region {
        VoxelRegion::Mask => {
            mask.check_pair(stack)?;
            in_mask_values(stack, mask)
        }
        VoxelRegion::Whole => stack.voxels.iter().copied().collect(),
    };
    let (lo, hi) = min_max(values.iter().copied()).ok_or(Error::EmptyRegion)?;
    let mut hist = vec![0.0; bins];
    for v in values {
        hist[bin_index(v, lo, hi, bins)] += 1.0;
    }
    Ok(entropy_bits(&hist))
}

pub const BIAS_ITERATIONS: usize = 3;

/// Spatial variation of a smooth multiplicative field fitted to the in-mask
/// intensities, as a coefficient of variation (0 means no bias).
///
/// The field is estimated in the log domain by repeatedly smoothing the
/// residual between the image and the current field estimate with a wide
/// Gaussian (sigma = 1/8 of the mask bounding-box diagonal).
pub fn bias_level(stack: &Stack, mask: &BrainMask) -> Result<f64> {
    mask.check_pair(stack)?;
    let bb = mask.bounding_box().ok_or(Error::EmptyRegion)?;
    let weights: Array3<f64> = ndarray::Zip::from(&stack.voxels)
        .and(&mask.voxels)
        .map_collect(|&v, &m| if m && v > 0.0 { 1.0 } else { 0.0 });
    let n_fit: f64 = weights.sum();
    if n_fit == 0.0 {
        return Err(Error::EmptyRegion);
    }
    let log_img = ndarray::Zip::from(&stack.voxels)
        .and(&weights)
        .map_collect(|&v, &w| if w > 0.0 { v.ln() } else { 0.0 });

    let diag_mm = (0..3)
        .map(|ax| ((bb[ax].1 - bb[ax].0 + 1) as f64 * stack.spacing[ax]).powi(2))
        .sum::<f64>()
        .sqrt();
    let sigma_mm = diag_mm / 8.0;
    let sigma = [
        sigma_mm / stack.spacing[0],
        sigma_mm / stack.spacing[1],
        sigma_mm / stack.spacing[2],
    ];
    let norm = filters::gaussian(&weights, sigma);

    let weighted_mean = |a: &Array3<f64>| -> f64 {
        ndarray::Zip::from(a)
            .and(&weights)
            .fold(0.0, |acc, &x, &w| acc + x * w)
            / n_fit
    };

    let mut field = Array3::<f64>::zeros(stack.voxels.dim());
    for _ in 0..BIAS_ITERATIONS {
        let mut residual = &log_img - &field;
        let m = weighted_mean(&residual);
        ndarray::Zip::from(&mut residual)
            .and(&weights)
            .for_each(|r, &w| *r = (*r - m) * w);
        let smooth = filters::gaussian(&residual, sigma);
        ndarray::Zip::from(&mut field)
            .and(&smooth)
            .and(&norm)
            .for_each(|f, &s, &n| {
                if n > 1e-12 {
                    *f += s / n;
                }
            });
        let fm = weighted_mean(&field);
        field.mapv_inplace(|f| f - fm);
    }

    let values: Vec<f64> = field
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(f, _)| f.exp())
        .collect();
    let mean = stats::mean(&values);
    Ok(if mean > 0.0 {
        stats::std_dev(&values) / mean
    } else {
        0.0
    })
}

/// Mean absolute Laplace or Sobel response of the image, normalised by the
/// mean intensity of the region when it is positive.
pub fn sharpness_filters(
    stack: &Stack,
    mask: &BrainMask,
    filter: Filter,
    region: VoxelRegion,
) -> Result<f64> {
    mask.check_pair(stack)?;
    let shape = stack.shape();
    if shape.iter().any(|&d| d < 3) {
        return Err(Error::Dimension(format!(
            "filters need at least 3 voxels along every axis, got {shape:?}"
        )));
    }
    let response = match filter {
        Filter::Laplace => filters::laplace(&stack.voxels, [1.0; 3]),
        Filter::Sobel => filters::sobel_magnitude(&stack.voxels, [1.0; 3]),
    };
    let (mut resp_sum, mut int_sum, mut n) = (0.0, 0.0, 0usize);
    for ((r, v), &m) in response
        .iter()
        .zip(stack.voxels.iter())
        .zip(mask.voxels.iter())
    {
        if region == VoxelRegion::Whole || m {
            resp_sum += r.abs();
            int_sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let mean_resp = resp_sum / n as f64;
    let mean_int = int_sum / n as f64;
    Ok(if mean_int > 0.0 {
        mean_resp / mean_int
    } else {
        mean_resp
    })
}
