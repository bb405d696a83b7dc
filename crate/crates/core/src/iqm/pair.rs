//! Similarity and difference metrics between two slices of a stack.
//!
//! Every metric is evaluated on the comparison region (union or
//! intersection of the two slice masks) of background-zeroed slices, and is
//! symmetric in its two arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iqm::{MaskCombine, MaskedSlice, PAIR_HISTOGRAM_BINS};
use crate::stats::{bin_index, entropy_bits, min_max};

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMetric {
    Mae,
    Nmae,
    Rmse,
    Nrmse,
    Ncc,
    Mi,
    Nmi,
    Psnr,
    Ssim,
    JointEntropy,
}

impl PairMetric {
    pub const ALL: [PairMetric; 10] = [
        PairMetric::Mae,
        PairMetric::Nmae,
        PairMetric::Rmse,
        PairMetric::Nrmse,
        PairMetric::Ncc,
        PairMetric::Mi,
        PairMetric::Nmi,
        PairMetric::Psnr,
        PairMetric::Ssim,
        PairMetric::JointEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PairMetric::Mae => "mae",
            PairMetric::Nmae => "nmae",
            PairMetric::Rmse => "rmse",
            PairMetric::Nrmse => "nrmse",
            PairMetric::Ncc => "ncc",
            PairMetric::Mi => "mi",
            PairMetric::Nmi => "nmi",
            PairMetric::Psnr => "psnr",
            PairMetric::Ssim => "ssim",
            PairMetric::JointEntropy => "joint_entropy",
        }
    }

    pub fn is_information_theoretic(self) -> bool {
        matches!(
            self,
            PairMetric::Mi | PairMetric::Nmi | PairMetric::JointEntropy
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePairMetricSet {
    pub mae: f64,
    pub nmae: f64,
    pub rmse: f64,
    pub nrmse: f64,
    pub ncc: f64,
    pub mi: f64,
    pub nmi: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub joint_entropy: f64,
}

impl SlicePairMetricSet {
    pub fn get(&self, metric: PairMetric) -> f64 {
        match metric {
            PairMetric::Mae => self.mae,
            PairMetric::Nmae => self.nmae,
            PairMetric::Rmse => self.rmse,
            PairMetric::Nrmse => self.nrmse,
            PairMetric::Ncc => self.ncc,
            PairMetric::Mi => self.mi,
            PairMetric::Nmi => self.nmi,
            PairMetric::Psnr => self.psnr,
            PairMetric::Ssim => self.ssim,
            PairMetric::JointEntropy => self.joint_entropy,
        }
    }
}

fn combined_region(mask_a: &[bool], mask_b: &[bool], combine: MaskCombine) -> Vec<usize> {
    mask_a
        .iter()
        .zip(mask_b)
        .enumerate()
        .filter(|(_, (&a, &b))| match combine {
            MaskCombine::Union => a || b,
            MaskCombine::Intersection => a && b,
        })
        .map(|(i, _)| i)
        .collect()
}

struct Entropies {
    a: f64,
    b: f64,
    joint: f64,
}

fn histogram_entropies(a: &[f64], b: &[f64], region: &[usize], bins: usize) -> Entropies {
    let (alo, ahi) = min_max(region.iter().map(|&i| a[i])).unwrap_or((0.0, 0.0));
    let (blo, bhi) = min_max(region.iter().map(|&i| b[i])).unwrap_or((0.0, 0.0));
    let mut joint = vec![0.0; bins * bins];
    let mut ha = vec![0.0; bins];
    let mut hb = vec![0.0; bins];
    for &i in region {
        let x = bin_index(a[i], alo, ahi, bins);
        let y = bin_index(b[i], blo, bhi, bins);
        joint[x * bins + y] += 1.0;
        ha[x] += 1.0;
        hb[y] += 1.0;
    }
    Entropies {
        a: entropy_bits(&ha),
        b: entropy_bits(&hb),
        joint: entropy_bits(&joint),
    }
}

fn mi_from(e: &Entropies, normalized: bool) -> f64 {
    let mi = (e.a + e.b - e.joint).max(0.0);
    if !normalized {
        return mi;
    }
    let denom = e.a + e.b;
    if denom <= 0.0 {
        // two constant signals carry the same (null) information
        1.0
    } else {
        (2.0 * mi / denom).clamp(0.0, 1.0)
    }
}

/// Mutual information in bits between two equally sized slices over the
/// combination of their masks.
pub fn mutual_information(
    a: &[f64],
    b: &[f64],
    mask_a: &[bool],
    mask_b: &[bool],
    bins: usize,
    normalized: bool,
    combine: MaskCombine,
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "bins must be >= 2, got {bins}"
        )));
    }
    if a.len() != b.len() || mask_a.len() != a.len() || mask_b.len() != b.len() {
        return Err(Error::Dimension("slice sizes differ".into()));
    }
    let region = combined_region(mask_a, mask_b, combine);
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(mi_from(
        &histogram_entropies(a, b, &region, bins),
        normalized,
    ))
}

/// Summed-area table with one row/column of zero padding.
struct Integral {
    cols: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(rows: usize, cols: usize, f: impl Fn(usize) -> f64) -> Self {
        let w = cols + 1;
        let mut data = vec![0.0; (rows + 1) * w];
        for r in 0..rows {
            let mut row_sum = 0.0;
            for c in 0..cols {
                row_sum += f(r * cols + c);
                data[(r + 1) * w + c + 1] = data[r * w + c + 1] + row_sum;
            }
        }
        Integral { cols, data }
    }

    /// Sum over rows `r0..r1` and columns `c0..c1` (half-open).
    fn sum(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let w = self.cols + 1;
        self.data[r1 * w + c1] - self.data[r0 * w + c1] - self.data[r1 * w + c0]
            + self.data[r0 * w + c0]
    }
}

/// Mean SSIM over `region` using uniform windows clipped at the slice border.
fn ssim(a: &MaskedSlice, b: &MaskedSlice, region: &[usize], dynamic_range: f64) -> f64 {
    let (rows, cols) = (a.rows, a.cols);
    let l = if dynamic_range > 0.0 {
        dynamic_range
    } else {
        1.0
    };
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    let ia = Integral::new(rows, cols, |i| a.values[i]);
    let ib = Integral::new(rows, cols, |i| b.values[i]);
    let iaa = Integral::new(rows, cols, |i| a.values[i] * a.values[i]);
    let ibb = Integral::new(rows, cols, |i| b.values[i] * b.values[i]);
    let iab = Integral::new(rows, cols, |i| a.values[i] * b.values[i]);
    let half = SSIM_WINDOW / 2;
    let mut total = 0.0;
    for &p in region {
        let (r, c) = (p / cols, p % cols);
        let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(rows));
        let (c0, c1w) = (c.saturating_sub(half), (c + half + 1).min(cols));
        let n = ((r1 - r0) * (c1w - c0)) as f64;
        let ma = ia.sum(r0, r1, c0, c1w) / n;
        let mb = ib.sum(r0, r1, c0, c1w) / n;
        let va = (iaa.sum(r0, r1, c0, c1w) / n - ma * ma).max(0.0);
        let vb = (ibb.sum(r0, r1, c0, c1w) / n - mb * mb).max(0.0);
        let cov = iab.sum(r0, r1, c0, c1w) / n - ma * mb;
        let s =
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        total += s;
    }
    (total / region.len() as f64).clamp(-1.0, 1.0)
}

/// All pair metrics for two slices; `None` when the comparison region is empty.
///
/// `dynamic_range` is the intensity scale used by PSNR and the SSIM
/// stabilisation constants.
pub fn compare_slices(
    a: &MaskedSlice,
    b: &MaskedSlice,
    combine: MaskCombine,
    dynamic_range: f64,
) -> Option<SlicePairMetricSet> {
    debug_assert_eq!(a.values.len(), b.values.len());
    let region = combined_region(&a.mask, &b.mask, combine);
    if region.is_empty() {
        return None;
    }
    let n = region.len() as f64;
    let (mut abs_sum, mut sq_sum, mut sum_a, mut sum_b) = (0.0, 0.0, 0.0, 0.0);
    let mut identical = true;
    for &i in &region {
        let (x, y) = (a.values[i], b.values[i]);
        let d = x - y;
        identical &= d == 0.0;
        abs_sum += d.abs();
        sq_sum += d * d;
        sum_a += x;
        sum_b += y;
    }
    let mae = abs_sum / n;
    let mse = sq_sum / n;
    let rmse = mse.sqrt();
    let scale = 0.5 * (sum_a / n + sum_b / n);
    let (nmae, nrmse) = if scale > 0.0 {
        (mae / scale, rmse / scale)
    } else {
        (mae, rmse)
    };

    let xa: Vec<f64> = region.iter().map(|&i| a.values[i]).collect();
    let xb: Vec<f64> = region.iter().map(|&i| b.values[i]).collect();
    let ncc = match crate::stats::pearson(&xa, &xb) {
        Some(r) => r,
        None if identical => 1.0,
        None => 0.0,
    };

    let psnr = if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        let l = if dynamic_range > 0.0 {
            dynamic_range
        } else {
            1.0
        };
        (10.0 * (l * l / mse).log10()).min(PSNR_CAP_DB)
    };

    let ent = histogram_entropies(&a.values, &b.values, &region, PAIR_HISTOGRAM_BINS);
    Some(SlicePairMetricSet {
        mae,
        nmae,
        rmse,
        nrmse,
        ncc,
        mi: mi_from(&ent, false),
        nmi: mi_from(&ent, true),
        psnr,
        ssim: ssim(a, b, &region, dynamic_range),
        joint_entropy: ent.joint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice(values: Vec<f64>, rows: usize) -> MaskedSlice {
        let cols = values.len() / rows;
        MaskedSlice {
            index: 0,
            rows,
            cols,
            mask: vec![true; values.len()],
            values,
        }
    }

    #[test]
    fn identical_slices() {
        let a = slice((0..64).map(|v| (v % 7) as f64).collect(), 8);
        let m = compare_slices(&a, &a, MaskCombine::Union, 6.0).unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert!((m.ncc - 1.0).abs() < 1e-12);
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert_eq!(m.psnr, PSNR_CAP_DB);
        assert!((m.nmi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_slices_are_finite() {
        let a = slice(vec![0.0; 16], 4);
        let b = slice(vec![2.0; 16], 4);
        let m = compare_slices(&a, &b, MaskCombine::Union, 0.0).unwrap();
        assert_eq!(m.ncc, 0.0);
        assert_eq!(m.nmae, 2.0);
        for metric in PairMetric::ALL {
            assert!(m.get(metric).is_finite(), "{metric:?}");
        }
        let same = compare_slices(&a, &a, MaskCombine::Union, 0.0).unwrap();
        assert_eq!(same.ncc, 1.0);
    }

    #[test]
    fn mi_edge_cases() {
        let t = [true; 4];
        let a = [0.0, 0.0, 1.0, 1.0];
        let b = [0.0, 1.0, 0.0, 1.0];
        assert!(
            mutual_information(&a, &b, &t, &t, 2, false, MaskCombine::Union)
                .unwrap()
                .abs()
                < 1e-12
        );
        let c = [5.0; 4];
        assert_eq!(
            mutual_information(&c, &b, &t, &t, 8, false, MaskCombine::Union).unwrap(),
            0.0
        );
        let mi = mutual_information(&a, &a, &t, &t, 2, false, MaskCombine::Union).unwrap();
        assert!((mi - 1.0).abs() < 1e-12);
        let f = [false; 4];
        assert!(matches!(
            mutual_information(&a, &b, &t, &f, 2, false, MaskCombine::Intersection),
            Err(Error::EmptyRegion)
        ));
        assert!(mutual_information(&a, &b, &t, &t, 1, false, MaskCombine::Union).is_err());
    }
}
