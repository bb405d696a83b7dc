//! Bagged tree ensembles: random forests and extremely randomized trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::tree::{normalize, Columns, Tree, TreeParams};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

/// Fit-time by-products that are not part of the model.
#[derive(Debug, Clone)]
pub struct ForestFit {
    pub forest: Forest,
    /// Mean prediction of the trees that did not see each row, if any.
    pub oob_prediction: Vec<Option<f64>>,
}

impl Forest {
    /// Tree `t` draws from stream `(seed, t)`, so the forest is the same
    /// whatever the number of worker threads.
    pub fn fit(x: &Columns, y: &[f64], params: ForestParams, seed: u64) -> ForestFit {
        let n = x.n_rows;
        let fitted: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, t as u64);
                let mut w = vec![0.0; n];
                if params.bootstrap {
                    for _ in 0..n {
                        w[rng.gen_range(0..n)] += 1.0;
                    }
                } else {
                    w.fill(1.0);
                }
                (Tree::fit(x, y, &w, params.tree, &mut rng), w)
            })
            .collect();

        let mut oob_sum = vec![0.0; n];
        let mut oob_count = vec![0usize; n];
        if params.bootstrap {
            let mut row = vec![0.0; x.n_features()];
            for (tree, w) in &fitted {
                for i in 0..n {
                    if w[i] == 0.0 {
                        for (f, c) in x.cols.iter().enumerate() {
                            row[f] = c[i];
                        }
                        oob_sum[i] += tree.predict_row(&row);
                        oob_count[i] += 1;
                    }
                }
            }
        }
        let oob_prediction = oob_sum
            .iter()
            .zip(&oob_count)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        ForestFit {
            forest: Forest {
                trees: fitted.into_iter().map(|(t, _)| t).collect(),
            },
            oob_prediction,
        }
    }

    /// Mean of the trees' leaf values.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean over trees of each tree's normalized impurity decrease.
    pub fn importance(&self) -> Vec<f64> {
        let p = self.trees.first().map_or(0, |t| t.n_features);
        let mut acc = vec![0.0; p];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.normalized_importance()) {
                *a += v;
            }
        }
        normalize(&acc)
    }
}
