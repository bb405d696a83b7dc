use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    SubjectWise,
    Global,
}

/// Column means and standard deviations of the training rows. Subject-wise
/// scaling standardizes each subject's rows with that subject's own
/// statistics; subjects with a single row fall back to these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mode: Scaling,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mean and population standard deviation; a column whose values are all
/// equal gets std 0 exactly.
fn column_stats(values: &[f64]) -> (f64, f64) {
    let m = crate::stats::mean(values);
    let constant = values.windows(2).all(|w| w[0] == w[1]);
    (
        m,
        if constant {
            0.0
        } else {
            crate::stats::std_dev(values)
        },
    )
}

fn z(v: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (v - mean) / std
    } else {
        0.0
    }
}

impl Scaler {
    pub fn fit(x: ArrayView2<f64>, mode: Scaling) -> Self {
        let (mean, std) = x
            .columns()
            .into_iter()
            .map(|c| column_stats(&c.to_vec()))
            .unzip();
        Scaler { mode, mean, std }
    }

    /// `groups[i]` is the subject of row `i`.
    pub fn transform(&self, x: ArrayView2<f64>, groups: &[String]) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        match self.mode {
            Scaling::Global => {
                for ((i, j), v) in x.indexed_iter() {
                    out[[i, j]] = z(*v, self.mean[j], self.std[j]);
                }
            }
            Scaling::SubjectWise => {
                let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                for (i, g) in groups.iter().enumerate() {
                    by_subject.entry(g.as_str()).or_default().push(i);
                }
                for rows in by_subject.values() {
                    for j in 0..x.ncols() {
                        let values: Vec<f64> = rows.iter().map(|&i| x[[i, j]]).collect();
                        let (m, s) = if rows.len() > 1 {
                            column_stats(&values)
                        } else {
                            (self.mean[j], self.std[j])
                        };
                        for (&i, v) in rows.iter().zip(&values) {
                            out[[i, j]] = z(*v, m, s);
                        }
                    }
                }
            }
        }
        out
    }
}
