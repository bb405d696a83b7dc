use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::models::forest::Forest;
use crate::models::tree::{to_columns, Columns, Splitter};
use crate::models::{forest_params, Hyperparameters, Task};
use crate::rng::{mix, stream};

/// Indices of the columns whose values are not all identical.
pub fn drop_zero_variance(x: ArrayView2<f64>) -> Vec<usize> {
    x.columns()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.iter().any(|v| *v != c[0]))
        .map(|(j, _)| j)
        .collect()
}

/// Greedy scan in column order: a column is kept unless its absolute
/// Pearson correlation with an already kept column exceeds `threshold`.
pub fn prune_correlated(x: ArrayView2<f64>, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "correlation threshold must be in (0, 1], got {threshold}"
        )));
    }
    let cols = to_columns(x);
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..cols.len() {
        let redundant = kept.iter().any(|&k| {
            crate::stats::pearson(&cols[j], &cols[k]).is_some_and(|r| r.abs() > threshold)
        });
        if !redundant {
            kept.push(j);
        }
    }
    Ok(kept)
}

pub const WINNOW_TREES: usize = 100;
pub const WINNOW_ROUNDS: usize = 5;
pub const WINNOW_FALLBACK: usize = 5;
pub const WINNOW_MIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct WinnowOutcome {
    /// Kept column indices in increasing order.
    pub kept: Vec<usize>,
    /// No column beat its shadows and the best few were kept instead.
    pub fallback: bool,
}

/// Shadow-feature selection. Each round appends a row-permuted copy of
/// every remaining column, fits extremely randomized trees, and keeps the
/// real columns whose importance exceeds the largest shadow importance.
pub fn winnow_select(
    x: ArrayView2<f64>,
    y: &[f64],
    task: Task,
    seed: u64,
) -> Result<WinnowOutcome> {
    let n = x.nrows();
    if n < WINNOW_MIN_ROWS {
        return Err(Error::InvalidArgument(format!(
            "feature selection needs at least {WINNOW_MIN_ROWS} rows, got {n}"
        )));
    }
    if y.len() != n {
        return Err(Error::Schema(format!("{n} rows but {} labels", y.len())));
    }
    match task {
        Task::Classification => crate::models::check_labels(task, y)?,
        Task::Regression => {
            if y.windows(2).all(|w| w[0] == w[1]) {
                return Err(Error::DegenerateLabels("targets have zero variance".into()));
            }
        }
    }
    let all = to_columns(x);
    let mut kept: Vec<usize> = (0..all.len()).collect();
    let hp = Hyperparameters {
        n_trees: Some(WINNOW_TREES),
        ..Hyperparameters::default()
    };
    for round in 0..WINNOW_ROUNDS {
        if kept.is_empty() {
            break;
        }
        let mut rng = stream(seed, 1_000_000 + round as u64);
        let mut cols: Vec<Vec<f64>> = kept.iter().map(|&j| all[j].clone()).collect();
        for &j in &kept {
            let mut shadow = all[j].clone();
            shadow.shuffle(&mut rng);
            cols.push(shadow);
        }
        let params = forest_params(task, &hp, cols.len(), Splitter::Random, false);
        let forest = Forest::fit(&Columns::new(&cols), y, params, mix(seed, round as u64)).forest;
        let importance = forest.importance();
        let (real, shadow) = importance.split_at(kept.len());
        let best_shadow = shadow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let survivors: Vec<usize> = kept
            .iter()
            .zip(real)
            .filter(|(_, &imp)| imp > best_shadow)
            .map(|(&j, _)| j)
            .collect();
        if survivors.is_empty() {
            let mut ranked: Vec<(usize, f64)> =
                kept.iter().copied().zip(real.iter().copied()).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut top: Vec<usize> = ranked
                .into_iter()
                .take(WINNOW_FALLBACK)
                .map(|(j, _)| j)
                .collect();
            top.sort_unstable();
            return Ok(WinnowOutcome {
                kept: top,
                fallback: true,
            });
        }
        kept = survivors;
    }
    Ok(WinnowOutcome {
        kept,
        fallback: false,
    })
}
