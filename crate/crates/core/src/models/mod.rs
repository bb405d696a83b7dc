//! Regression and classification models behind one fit/predict interface.
//!
//! Defaults follow the usual library defaults:
//!
//! | family             | defaults                                                        |
//! |--------------------|-----------------------------------------------------------------|
//! | random forest      | 100 trees, unlimited depth, bootstrap, √p features (classification) or all p (regression) per split |
//! | gradient boosting  | 100 rounds, depth 3, learning rate 0.1, subsample 1.0           |
//! | AdaBoost           | 50 stumps, learning rate 1.0                                    |
//! | linear regression  | no penalty                                                      |
//! | logistic regression| L2 penalty λ = 1 on the coefficients                            |
//!
//! A constant predictor is available as a baseline; it is not part of the
//! default model grid.

pub mod boosting;
pub mod bundle;
pub mod forest;
pub mod linear;
pub mod tree;

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use boosting::{AdaBoost, AdaBoostParams, BoostingParams, GradientBoosting};
use forest::{Forest, ForestParams};
use linear::{LinearModel, LogisticModel};
use tree::{to_columns, Columns, Criterion, Splitter, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            _ => Err(Error::InvalidArgument(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Logistic,
    RandomForest,
    GradientBoosting,
    AdaBoost,
    Constant,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
            Family::RandomForest => "random_forest",
            Family::GradientBoosting => "gradient_boosting",
            Family::AdaBoost => "ada_boost",
            Family::Constant => "constant",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            Family::Linear => task == Task::Regression,
            Family::Logistic | Family::AdaBoost => task == Task::Classification,
            Family::RandomForest | Family::GradientBoosting | Family::Constant => true,
        }
    }

    /// The families compared for each task.
    pub fn for_task(task: Task) -> Vec<Family> {
        match task {
            Task::Regression => vec![
                Family::Linear,
                Family::GradientBoosting,
                Family::RandomForest,
            ],
            Task::Classification => vec![
                Family::Logistic,
                Family::RandomForest,
                Family::GradientBoosting,
                Family::AdaBoost,
            ],
        }
    }
}

/// Optional overrides of the family defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub learning_rate: Option<f64>,
    pub subsample: Option<f64>,
    /// Fraction of the features examined per split.
    pub max_features: Option<f64>,
    /// L2 penalty strength for linear and logistic models.
    pub lambda: Option<f64>,
    /// Output of the constant predictor; defaults to the training mean.
    pub constant: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub task: Task,
    pub family: Family,
    #[serde(default)]
    pub params: Hyperparameters,
}

impl ModelSpec {
    pub fn new(task: Task, family: Family) -> Self {
        ModelSpec {
            task,
            family,
            params: Hyperparameters::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.params.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.family.supports(self.task) {
            return Err(Error::InvalidArgument(format!(
                "{} does not support {}",
                self.family.as_str(),
                self.task.as_str()
            )));
        }
        let p = &self.params;
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what} out of range")));
        if p.n_trees == Some(0) {
            return bad("n_trees");
        }
        if p.max_depth == Some(0) {
            return bad("max_depth");
        }
        if p.learning_rate.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
            return bad("learning_rate");
        }
        if p.subsample.is_some_and(|v| !(v > 0.0 && v <= 1.0)) {
            return bad("subsample");
        }
        if p.max_features.is_some_and(|v| !(v > 0.0 && v <= 1.0)) {
            return bad("max_features");
        }
        if p.lambda.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
            return bad("lambda");
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.family.as_str().to_owned()
    }
}

fn features_per_split(task: Task, fraction: Option<f64>, p: usize) -> usize {
    let k = match (fraction, task) {
        (Some(f), _) => (f * p as f64).ceil() as usize,
        (None, Task::Classification) => (p as f64).sqrt().floor() as usize,
        (None, Task::Regression) => p,
    };
    k.clamp(1, p.max(1))
}

/// Forest settings for the given task and overrides.
pub fn forest_params(
    task: Task,
    hp: &Hyperparameters,
    p: usize,
    splitter: Splitter,
    bootstrap: bool,
) -> ForestParams {
    let criterion = match task {
        Task::Regression => Criterion::Mse,
        Task::Classification => Criterion::Gini,
    };
    let mut tree = TreeParams::new(criterion);
    tree.splitter = splitter;
    tree.max_depth = hp.max_depth;
    tree.max_features = Some(features_per_split(task, hp.max_features, p));
    ForestParams {
        n_trees: hp.n_trees.unwrap_or(100),
        bootstrap,
        tree,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    Forest(Forest),
    Boosting(GradientBoosting),
    AdaBoost(AdaBoost),
    Linear(LinearModel),
    Logistic(LogisticModel),
    Constant(f64),
}

impl Predictor {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Predictor::Forest(m) => m.predict_row(row),
            Predictor::Boosting(m) => m.predict_row(row),
            Predictor::AdaBoost(m) => m.predict_row(row),
            Predictor::Linear(m) => m.score(row),
            Predictor::Logistic(m) => m.predict_row(row),
            Predictor::Constant(v) => *v,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// The least-squares system was rank deficient and solved by pseudo-inverse.
    pub rank_deficient: bool,
    /// Iterative solvers reached their tolerance.
    pub converged: bool,
    /// Training loss per boosting round, starting with the initial constant.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub predictor: Predictor,
    pub report: FitReport,
}

pub(crate) fn check_labels(task: Task, y: &[f64]) -> Result<()> {
    match task {
        Task::Classification => {
            if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
                return Err(Error::Value {
                    row: i,
                    column: "label".into(),
                    reason: format!("classification labels must be 0 or 1, got {v}"),
                });
            }
            let ones = y.iter().filter(|v| **v == 1.0).count();
            if ones == 0 || ones == y.len() {
                return Err(Error::DegenerateLabels("a single class is present".into()));
            }
        }
        Task::Regression => {
            if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::Value {
                    row: i,
                    column: "target".into(),
                    reason: "not a finite number".into(),
                });
            }
        }
    }
    Ok(())
}

/// Fits `spec` on the rows of `x` (no missing values) and targets `y`
/// (0/1 for classification).
pub fn fit(
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    feature_names: &[String],
    y: &[f64],
) -> Result<FittedModel> {
    spec.validate()?;
    let (n, p) = x.dim();
    if n != y.len() {
        return Err(Error::Schema(format!("{n} rows but {} targets", y.len())));
    }
    if feature_names.len() != p {
        return Err(Error::Schema(format!(
            "{p} columns but {} names",
            feature_names.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema(
            "feature matrix contains missing or non-finite values".into(),
        ));
    }
    check_labels(spec.task, y)?;
    let cols = to_columns(x);
    let columns = Columns::new(&cols);
    let hp = &spec.params;
    let mut report = FitReport {
        converged: true,
        ..FitReport::default()
    };
    let predictor = match spec.family {
        Family::RandomForest => {
            let params = forest_params(spec.task, hp, p, Splitter::Best, true);
            Predictor::Forest(Forest::fit(&columns, y, params, hp.seed).forest)
        }
        Family::GradientBoosting => {
            let params = BoostingParams {
                n_rounds: hp.n_trees.unwrap_or(100),
                max_depth: hp.max_depth.unwrap_or(3),
                learning_rate: hp.learning_rate.unwrap_or(0.1),
                subsample: hp.subsample.unwrap_or(1.0),
            };
            let (m, losses) = GradientBoosting::fit(&columns, y, spec.task, params, hp.seed);
            report.train_loss = losses;
            Predictor::Boosting(m)
        }
        Family::AdaBoost => {
            let params = AdaBoostParams {
                n_rounds: hp.n_trees.unwrap_or(50),
                learning_rate: hp.learning_rate.unwrap_or(1.0),
            };
            Predictor::AdaBoost(AdaBoost::fit(&columns, y, params, hp.seed)?)
        }
        Family::Linear => {
            let (m, deficient) = LinearModel::fit(&columns, y, hp.lambda.unwrap_or(0.0));
            report.rank_deficient = deficient;
            Predictor::Linear(m)
        }
        Family::Logistic => {
            let (m, converged) = LogisticModel::fit(&columns, y, hp.lambda.unwrap_or(1.0));
            report.converged = converged;
            Predictor::Logistic(m)
        }
        Family::Constant => {
            Predictor::Constant(hp.constant.unwrap_or_else(|| crate::stats::mean(y)))
        }
    };
    Ok(FittedModel {
        spec: *spec,
        feature_names: feature_names.to_vec(),
        predictor,
        report,
    })
}

impl FittedModel {
    /// Regression values, or probabilities of "include" for classification.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.feature_names.len() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.feature_names.len(),
                x.ncols()
            )));
        }
        let mut row = vec![0.0; x.ncols()];
        Ok(x.rows()
            .into_iter()
            .map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
                self.predictor.predict_row(&row)
            })
            .collect())
    }

    /// Hard labels (1 = include) at probability 0.5; classification only.
    pub fn predict_labels(&self, x: ArrayView2<f64>) -> Result<Vec<u8>> {
        if self.spec.task != Task::Classification {
            return Err(Error::Unsupported(
                "hard labels need a classification model".into(),
            ));
        }
        Ok(self
            .predict(x)?
            .into_iter()
            .map(|p| u8::from(p >= 0.5))
            .collect())
    }

    /// Normalized importances summing to 1 (all zero if the model uses no
    /// feature).
    pub fn feature_importance(&self) -> Result<BTreeMap<String, f64>> {
        let p = self.feature_names.len();
        let values = match &self.predictor {
            Predictor::Constant(_) => {
                return Err(Error::Unsupported(
                    "a constant predictor has no feature importances".into(),
                ))
            }
            Predictor::Forest(m) => m.importance(),
            Predictor::Boosting(m) => m.importance(p),
            Predictor::AdaBoost(m) => m.importance(p),
            Predictor::Linear(m) => m.importance(),
            Predictor::Logistic(m) => m.linear.importance(),
        };
        Ok(self.feature_names.iter().cloned().zip(values).collect())
    }
}
