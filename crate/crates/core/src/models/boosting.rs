//! Gradient boosting (squared or logistic loss) and binary SAMME AdaBoost.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::tree::{normalize, Columns, Criterion, Node, Tree, TreeParams};
use crate::models::Task;
use crate::rng::stream;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_loss(y: f64, f: f64) -> f64 {
    // log(1 + e^f) - y f, computed stably
    let softplus = if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    };
    softplus - y * f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub task: Task,
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GradientBoosting {
    /// Returns the model and the training loss after each round (index 0 is
    /// the loss of the initial constant).
    pub fn fit(
        x: &Columns,
        y: &[f64],
        task: Task,
        params: BoostingParams,
        seed: u64,
    ) -> (Self, Vec<f64>) {
        let n = x.n_rows;
        let mean = crate::stats::mean(y);
        let init = match task {
            Task::Regression => mean,
            Task::Classification => {
                let p = mean.clamp(1e-12, 1.0 - 1e-12);
                (p / (1.0 - p)).ln()
            }
        };
        let loss = |f: &[f64]| -> f64 {
            let total: f64 = match task {
                Task::Regression => y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum(),
                Task::Classification => y.iter().zip(f).map(|(a, b)| log_loss(*a, *b)).sum(),
            };
            total / n as f64
        };
        let mut f = vec![init; n];
        let mut losses = vec![loss(&f)];
        let mut tree_params = TreeParams::new(Criterion::Mse);
        tree_params.max_depth = Some(params.max_depth);
        let mut trees = Vec::with_capacity(params.n_rounds);
        let mut row = vec![0.0; x.n_features()];
        let mut rng = stream(seed, 0);

        for _ in 0..params.n_rounds {
            let residual: Vec<f64> = match task {
                Task::Regression => y.iter().zip(&f).map(|(a, b)| a - b).collect(),
                Task::Classification => y.iter().zip(&f).map(|(a, b)| a - sigmoid(*b)).collect(),
            };
            let mut w = vec![0.0; n];
            if params.subsample < 1.0 {
                let k = ((params.subsample * n as f64).round() as usize).clamp(1, n);
                for i in sample(&mut rng, n, k) {
                    w[i] = 1.0;
                }
            } else {
                w.fill(1.0);
            }
            let mut tree = Tree::fit(x, &residual, &w, tree_params, &mut rng);
            let leaves: Vec<usize> = (0..n)
                .map(|i| {
                    for (c, v) in x.cols.iter().zip(row.iter_mut()) {
                        *v = c[i];
                    }
                    tree.leaf_of(&row)
                })
                .collect();
            if task == Task::Classification {
                // one Newton step per leaf
                let mut num = vec![0.0; tree.nodes.len()];
                let mut den = vec![0.0; tree.nodes.len()];
                for i in (0..n).filter(|&i| w[i] > 0.0) {
                    let p = sigmoid(f[i]);
                    num[leaves[i]] += residual[i];
                    den[leaves[i]] += p * (1.0 - p);
                }
                for id in 0..tree.nodes.len() {
                    if matches!(tree.nodes[id], Node::Leaf { .. }) {
                        let v = if den[id] > 1e-150 {
                            num[id] / den[id]
                        } else {
                            0.0
                        };
                        tree.set_leaf_value(id, v);
                    }
                }
            }
            for i in 0..n {
                if let Node::Leaf { value } = tree.nodes[leaves[i]] {
                    f[i] += params.learning_rate * value;
                }
            }
            losses.push(loss(&f));
            trees.push(tree);
        }
        (
            GradientBoosting {
                task,
                init,
                learning_rate: params.learning_rate,
                trees,
            },
            losses,
        )
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    /// Regression value, or probability of class 1.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.task {
            Task::Regression => self.raw_score(row),
            Task::Classification => sigmoid(self.raw_score(row)),
        }
    }

    pub fn importance(&self, n_features: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_features];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.normalized_importance()) {
                *a += v;
            }
        }
        normalize(&acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub stumps: Vec<Tree>,
    pub alphas: Vec<f64>,
}

impl AdaBoost {
    /// Binary SAMME with depth-1 Gini stumps; `y` is 0/1.
    pub fn fit(x: &Columns, y: &[f64], params: AdaBoostParams, seed: u64) -> Result<Self> {
        let n = x.n_rows;
        let mut w = vec![1.0 / n as f64; n];
        let mut tp = TreeParams::new(Criterion::Gini);
        tp.max_depth = Some(1);
        let mut rng = stream(seed, 0);
        let (mut stumps, mut alphas) = (Vec::new(), Vec::new());
        let mut row = vec![0.0; x.n_features()];
        for round in 0..params.n_rounds {
            let stump = Tree::fit(x, y, &w, tp, &mut rng);
            let wrong: Vec<bool> = (0..n)
                .map(|i| {
                    for (c, v) in x.cols.iter().zip(row.iter_mut()) {
                        *v = c[i];
                    }
                    (stump.predict_row(&row) >= 0.5) != (y[i] >= 0.5)
                })
                .collect();
            let total: f64 = w.iter().sum();
            let err: f64 = w
                .iter()
                .zip(&wrong)
                .filter(|(_, &b)| b)
                .map(|(w, _)| w)
                .sum::<f64>()
                / total;
            if err <= 0.0 {
                stumps.push(stump);
                alphas.push(1.0);
                break;
            }
            if err >= 0.5 {
                if round == 0 {
                    return Err(Error::DegenerateLabels(
                        "the first boosting stump is no better than chance".into(),
                    ));
                }
                break;
            }
            let alpha = params.learning_rate * ((1.0 - err) / err).ln();
            for (wi, &bad) in w.iter_mut().zip(&wrong) {
                if bad {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            stumps.push(stump);
            alphas.push(alpha);
        }
        Ok(AdaBoost { stumps, alphas })
    }

    /// Weighted vote in [-1, 1].
    pub fn decision(&self, row: &[f64]) -> f64 {
        let total: f64 = self.alphas.iter().sum();
        let vote: f64 = self
            .stumps
            .iter()
            .zip(&self.alphas)
            .map(|(s, a)| if s.predict_row(row) >= 0.5 { *a } else { -*a })
            .sum();
        vote / total
    }

    /// Probability of class 1: the two-class softmax of the class vote shares.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn importance(&self, n_features: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_features];
        for (s, a) in self.stumps.iter().zip(&self.alphas) {
            for (acc, v) in acc.iter_mut().zip(s.normalized_importance()) {
                *acc += a * v;
            }
        }
        normalize(&acc)
    }
}
