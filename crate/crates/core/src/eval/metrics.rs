use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::models::Task;
use crate::stats::{average_ranks, pearson};

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 values, got {}",
            a.len()
        )));
    }
    Ok(())
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> f64 {
    y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / y_true.len() as f64
}

/// Pearson correlation of average ranks; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b)).unwrap_or(0.0)
}

/// F1 of the positive class (1), predicting positive when `score >= 0.5`.
/// 0 when there are no true or predicted positives.
pub fn f1(y_true: &[f64], score: &[f64]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (t, s) in y_true.iter().zip(score) {
        match (*t >= 0.5, *s >= 0.5) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Area under the ROC curve from the Mann-Whitney rank sum; tied scores
/// count one half.
pub fn auc(y_true: &[f64], score: &[f64]) -> Result<f64> {
    let n_pos = y_true.iter().filter(|t| **t >= 0.5).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(score);
    let rank_sum: f64 = ranks
        .iter()
        .zip(y_true)
        .filter(|(_, t)| **t >= 0.5)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Metric names reported for each task; the first is used for model selection.
pub fn metric_names(task: Task) -> &'static [&'static str] {
    match task {
        Task::Regression => &["mae", "spearman"],
        Task::Classification => &["f1", "auc"],
    }
}

/// True when larger values of the selection metric are better.
pub fn higher_is_better(task: Task) -> bool {
    task == Task::Classification
}

pub fn score(task: Task, y_true: &[f64], y_pred: &[f64]) -> Result<BTreeMap<String, f64>> {
    check_lengths(y_true, y_pred)?;
    let mut out = BTreeMap::new();
    match task {
        Task::Regression => {
            out.insert("mae".to_owned(), mae(y_true, y_pred));
            out.insert("spearman".to_owned(), spearman(y_true, y_pred));
        }
        Task::Classification => {
            out.insert("f1".to_owned(), f1(y_true, y_pred));
            out.insert("auc".to_owned(), auc(y_true, y_pred)?);
        }
    }
    Ok(out)
}

/// Like [`score`] but leaves out metrics that are undefined on this split
/// (AUC with a single class present).
pub(crate) fn score_available(task: Task, y_true: &[f64], y_pred: &[f64]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    match task {
        Task::Regression => {
            out.insert("mae".to_owned(), mae(y_true, y_pred));
            if y_true.len() >= 2 {
                out.insert("spearman".to_owned(), spearman(y_true, y_pred));
            }
        }
        Task::Classification => {
            out.insert("f1".to_owned(), f1(y_true, y_pred));
            if let Ok(a) = auc(y_true, y_pred) {
                out.insert("auc".to_owned(), a);
            }
        }
    }
    out
}
