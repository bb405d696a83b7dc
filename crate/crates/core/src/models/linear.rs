//! Least-squares linear regression and L2-penalized logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::models::boosting::sigmoid;
use crate::models::tree::Columns;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Training standard deviation of each feature, for importances.
    pub feature_std: Vec<f64>,
}

fn design(x: &Columns) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let (n, p) = (x.n_rows, x.n_features());
    let means: Vec<f64> = x.cols.iter().map(|c| crate::stats::mean(c)).collect();
    let stds: Vec<f64> = x.cols.iter().map(|c| crate::stats::std_dev(c)).collect();
    let m = DMatrix::from_fn(n, p, |i, j| x.cols[j][i]);
    (m, means, stds)
}

/// Pseudo-inverse solve; returns the solution and whether the system was
/// rank deficient.
fn solve_least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let (rows, cols) = a.shape();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * rows.max(cols) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let sol = svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(cols));
    (sol, rank < cols)
}

impl LinearModel {
    /// Ordinary least squares with an unpenalized intercept; `lambda > 0`
    /// adds a ridge penalty on the coefficients. Returns the model and
    /// whether the pseudo-inverse handled a rank-deficient system.
    pub fn fit(x: &Columns, y: &[f64], lambda: f64) -> (Self, bool) {
        let (n, p) = (x.n_rows, x.n_features());
        let (m, means, stds) = design(x);
        let ybar = crate::stats::mean(y);
        let extra = if lambda > 0.0 { p } else { 0 };
        let mut a = DMatrix::zeros(n + extra, p);
        let mut b = DVector::zeros(n + extra);
        for i in 0..n {
            for j in 0..p {
                a[(i, j)] = m[(i, j)] - means[j];
            }
            b[i] = y[i] - ybar;
        }
        for j in 0..extra {
            a[(n + j, j)] = lambda.sqrt();
        }
        let (coef, deficient) = if p == 0 {
            (DVector::zeros(0), false)
        } else {
            solve_least_squares(a, &b)
        };
        let coef: Vec<f64> = coef.iter().copied().collect();
        let intercept = ybar - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
        (
            LinearModel {
                coef,
                intercept,
                feature_std: stds,
            },
            deficient,
        )
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn importance(&self) -> Vec<f64> {
        let raw: Vec<f64> = self
            .coef
            .iter()
            .zip(&self.feature_std)
            .map(|(c, s)| (c * s).abs())
            .collect();
        crate::models::tree::normalize(&raw)
    }
}

pub const LOGISTIC_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub linear: LinearModel,
}

impl LogisticModel {
    /// Newton (iteratively reweighted least squares) on the penalized
    /// log-likelihood `sum log-loss + lambda/2 |coef|^2`, with step halving
    /// so the objective never increases. Returns the model and whether it
    /// converged.
    pub fn fit(x: &Columns, y: &[f64], lambda: f64) -> (Self, bool) {
        let (n, p) = (x.n_rows, x.n_features());
        let (m, _, stds) = design(x);
        // augmented design with a leading intercept column
        let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { m[(i, j - 1)] });
        let yv = DVector::from_column_slice(y);
        let objective = |beta: &DVector<f64>| -> f64 {
            let z = &a * beta;
            let mut total = 0.0;
            for i in 0..n {
                let f = z[i];
                let softplus = if f > 0.0 {
                    f + (-f).exp().ln_1p()
                } else {
                    f.exp().ln_1p()
                };
                total += softplus - yv[i] * f;
            }
            total + 0.5 * lambda * beta.rows(1, p).norm_squared()
        };
        let mut beta = DVector::zeros(p + 1);
        let mut current = objective(&beta);
        let mut converged = false;
        for _ in 0..LOGISTIC_MAX_ITER {
            let z = &a * &beta;
            let prob = z.map(sigmoid);
            let mut grad = a.transpose() * (&prob - &yv);
            let weights = prob.map(|q| (q * (1.0 - q)).max(1e-12));
            let mut scaled = a.clone();
            for (i, mut r) in scaled.row_iter_mut().enumerate() {
                r *= weights[i].sqrt();
            }
            let mut h = scaled.transpose() * &scaled;
            for j in 1..=p {
                grad[j] += lambda * beta[j];
                h[(j, j)] += lambda;
            }
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&grad),
                None => solve_least_squares(h, &grad).0,
            };
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let candidate = &beta - t * &step;
                let value = objective(&candidate);
                if value <= current {
                    beta = candidate;
                    current = value;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || (t * step.amax()) < 1e-10 {
                converged = true;
                break;
            }
        }
        let coef: Vec<f64> = beta.rows(1, p).iter().copied().collect();
        (
            LogisticModel {
                linear: LinearModel {
                    coef,
                    intercept: beta[0],
                    feature_std: stds,
                },
            },
            converged,
        )
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear.score(row))
    }
}
