use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_KEPT: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Retained components, one unit vector per entry.
    pub components: Vec<Vec<f64>>,
    /// Variance (n − 1 denominator) along every component, retained or not,
    /// in decreasing order.
    pub explained_variance: Vec<f64>,
}

impl PcaBasis {
    /// Keeps the fewest leading components whose variance reaches
    /// `variance_kept` of the total. Each component is signed so its
    /// largest-magnitude entry is positive.
    pub fn fit(x: ArrayView2<f64>, variance_kept: f64) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "PCA needs at least 2 rows, got {n}"
            )));
        }
        let mean: Vec<f64> = x
            .columns()
            .into_iter()
            .map(|c| crate::stats::mean(&c.to_vec()))
            .collect();
        let centered = DMatrix::from_fn(n, p, |i, j| x[[i, j]] - mean[j]);
        let cov = (centered.transpose() * &centered) / (n - 1) as f64;
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let explained_variance: Vec<f64> =
            order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let total: f64 = explained_variance.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::DegenerateFeatures(
                "PCA input has zero variance".into(),
            ));
        }
        let mut keep = 0;
        let mut acc = 0.0;
        for v in &explained_variance {
            acc += v;
            keep += 1;
            if acc / total >= variance_kept - 1e-12 {
                break;
            }
        }
        let components = order[..keep]
            .iter()
            .map(|&k| {
                let mut c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                let pivot = c
                    .iter()
                    .copied()
                    .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
                if pivot < 0.0 {
                    c.iter_mut().for_each(|v| *v = -*v);
                }
                c
            })
            .collect();
        Ok(PcaBasis {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.components.len()));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (k, c) in self.components.iter().enumerate() {
                out[[i, k]] = row
                    .iter()
                    .zip(&self.mean)
                    .zip(c)
                    .map(|((v, m), w)| (v - m) * w)
                    .sum();
            }
        }
        out
    }

    /// Maps projected rows back to feature space.
    pub fn reconstruct(&self, scores: ArrayView2<f64>) -> Array2<f64> {
        let p = self.mean.len();
        let mut out = Array2::zeros((scores.nrows(), p));
        for (i, s) in scores.rows().into_iter().enumerate() {
            for j in 0..p {
                out[[i, j]] = self.mean[j]
                    + self
                        .components
                        .iter()
                        .zip(s.iter())
                        .map(|(c, v)| c[j] * v)
                        .sum::<f64>();
            }
        }
        out
    }
}
