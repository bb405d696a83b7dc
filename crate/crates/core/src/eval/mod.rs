//! Grouped (subject-wise) cross-validation, nested model selection,
//! cross-site evaluation and training-size sweeps.

pub mod metrics;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{fit, Family, FittedModel, ModelSpec, Task};
use crate::pipeline::{FeatureMatrix, FittedPipeline, PipelineConfig, Scaling};
use crate::rng::{mix, stream};
pub use metrics::{auc, f1, mae, metric_names, score, spearman};

/// One candidate of the model-selection grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub pipeline: PipelineConfig,
    pub model: ModelSpec,
}

impl GridPoint {
    pub fn label(&self) -> String {
        format!("{}/{}", self.pipeline.label(), self.model.label())
    }
}

/// Correlation threshold × winnow × PCA × the task's model families.
pub fn default_grid(task: Task, seed: u64) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for pipeline in PipelineConfig::grid(seed) {
        for family in Family::for_task(task) {
            out.push(GridPoint {
                pipeline,
                model: ModelSpec::new(task, family).with_seed(seed),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits rows into `k` folds so that all rows of a group share a fold.
/// Groups are shuffled with `seed` and dealt round-robin, so fold sizes in
/// groups differ by at most one.
pub fn grouped_kfold(groups: &[String], k: usize, seed: u64) -> Result<Vec<Split>> {
    let distinct: BTreeSet<&str> = groups.iter().map(String::as_str).collect();
    if k < 2 || distinct.len() < k {
        return Err(Error::InsufficientGroups {
            needed: k.max(2),
            found: distinct.len(),
        });
    }
    let mut order: Vec<&str> = distinct.into_iter().collect();
    order.shuffle(&mut stream(seed, 0));
    let fold_of: HashMap<&str, usize> =
        order.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..groups.len()).partition(|&i| fold_of[groups[i].as_str()] == f);
            Split { train, test }
        })
        .collect())
}

/// Counts of splits checked for shared subjects between train and test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub splits_checked: usize,
    pub violations: usize,
}

impl LeakageAudit {
    fn check(&mut self, groups: &[String], split: &Split) -> Result<()> {
        self.splits_checked += 1;
        let train: BTreeSet<&str> = split.train.iter().map(|&i| groups[i].as_str()).collect();
        let shared = split
            .test
            .iter()
            .filter(|&&i| train.contains(groups[i].as_str()))
            .count();
        if shared > 0 {
            self.violations += 1;
            return Err(Error::Evaluation(format!(
                "{shared} test rows share a subject with the training rows"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
}

fn summarize(per_fold: &[BTreeMap<String, f64>]) -> BTreeMap<String, MeanStd> {
    let mut names: BTreeSet<&String> = BTreeSet::new();
    per_fold.iter().for_each(|m| names.extend(m.keys()));
    names
        .into_iter()
        .map(|n| {
            let v: Vec<f64> = per_fold.iter().filter_map(|m| m.get(n).copied()).collect();
            (
                n.clone(),
                MeanStd {
                    mean: crate::stats::mean(&v),
                    std: crate::stats::std_dev(&v),
                },
            )
        })
        .collect()
}

/// Preprocessed train/test matrices of one split, shared by every model
/// that uses the same pipeline configuration.
struct Prepared {
    pipeline: FittedPipeline,
    train: FeatureMatrix,
    test: FeatureMatrix,
}

type PrepKey = (Option<u64>, bool, bool, Scaling, u64);

fn prep_key(c: &PipelineConfig, pca: bool) -> PrepKey {
    (
        c.corr_threshold.map(f64::to_bits),
        c.winnow,
        pca,
        c.scaling,
        c.seed,
    )
}

struct SplitCache<'a> {
    x_train: FeatureMatrix,
    y_train: Vec<f64>,
    x_test: &'a FeatureMatrix,
    task: Task,
    entries: HashMap<PrepKey, std::result::Result<std::rc::Rc<Prepared>, String>>,
}

impl<'a> SplitCache<'a> {
    fn new(
        x_train: FeatureMatrix,
        y_train: Vec<f64>,
        x_test: &'a FeatureMatrix,
        task: Task,
    ) -> Self {
        SplitCache {
            x_train,
            y_train,
            x_test,
            task,
            entries: HashMap::new(),
        }
    }

    fn get(
        &mut self,
        config: &PipelineConfig,
    ) -> std::result::Result<std::rc::Rc<Prepared>, String> {
        let key = prep_key(config, config.pca);
        if let Some(hit) = self.entries.get(&key) {
            return hit.clone();
        }
        let made = if config.pca {
            self.get(&PipelineConfig {
                pca: false,
                ..*config
            })
            .and_then(|base| {
                let pipeline = base
                    .pipeline
                    .clone()
                    .with_pca(base.train.data.view())
                    .map_err(|e| e.to_string())?;
                let project = |m: &FeatureMatrix| {
                    let basis = pipeline.pca.as_ref().expect("PCA stage just fitted");
                    FeatureMatrix::new(
                        pipeline.output_columns.clone(),
                        m.row_keys.clone(),
                        basis.project(m.data.view()),
                    )
                    .map_err(|e| e.to_string())
                };
                let (train, test) = (project(&base.train)?, project(&base.test)?);
                Ok(std::rc::Rc::new(Prepared {
                    pipeline,
                    train,
                    test,
                }))
            })
        } else {
            FittedPipeline::fit_selection(config, &self.x_train, &self.y_train, self.task)
                .and_then(|pipeline| {
                    let train = pipeline.transform(&self.x_train)?;
                    let test = pipeline.transform(self.x_test)?;
                    Ok(std::rc::Rc::new(Prepared {
                        pipeline,
                        train,
                        test,
                    }))
                })
                .map_err(|e| e.to_string())
        };
        self.entries.insert(key, made.clone());
        made
    }
}

/// Fits `point` on the cached split and predicts its test rows.
fn fit_predict(
    cache: &mut SplitCache,
    point: &GridPoint,
) -> std::result::Result<(FittedPipeline, FittedModel, Vec<f64>), String> {
    let prepared = cache.get(&point.pipeline)?;
    let model = fit(
        &point.model,
        prepared.train.data.view(),
        &prepared.train.columns,
        &cache.y_train,
    )
    .map_err(|e| e.to_string())?;
    let pred = model
        .predict(prepared.test.data.view())
        .map_err(|e| e.to_string())?;
    Ok((prepared.pipeline.clone(), model, pred))
}

fn select_rows(y: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| y[i]).collect()
}

/// Outcome of choosing a grid point by inner cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: usize,
    /// Mean inner-fold selection metric per grid point; `None` if it failed.
    pub inner_scores: Vec<Option<f64>>,
    pub failures: BTreeMap<usize, String>,
}

/// Grouped `k`-fold selection among `grid` on the given rows. A one-point
/// grid is selected without any fitting.
pub fn select_grid_point(
    grid: &[GridPoint],
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    k: usize,
    seed: u64,
    audit: &mut LeakageAudit,
) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::Evaluation("the model grid is empty".into()));
    }
    if grid.len() == 1 {
        return Ok(Selection {
            selected: 0,
            inner_scores: vec![None],
            failures: BTreeMap::new(),
        });
    }
    let groups = x.groups();
    let splits = grouped_kfold(&groups, k, seed)?;
    let mut sums = vec![0.0; grid.len()];
    let mut failures: BTreeMap<usize, String> = BTreeMap::new();
    let primary = metric_names(task)[0];
    for split in &splits {
        audit.check(&groups, split)?;
        let x_test = x.select_rows(&split.test);
        let y_test = select_rows(y, &split.test);
        let mut cache = SplitCache::new(
            x.select_rows(&split.train),
            select_rows(y, &split.train),
            &x_test,
            task,
        );
        for (g, point) in grid.iter().enumerate() {
            if failures.contains_key(&g) {
                continue;
            }
            match fit_predict(&mut cache, point) {
                Ok((_, _, pred)) => {
                    sums[g] += metrics::score_available(task, &y_test, &pred)[primary]
                }
                Err(e) => {
                    failures.insert(g, e);
                }
            }
        }
    }
    let inner_scores: Vec<Option<f64>> = (0..grid.len())
        .map(|g| (!failures.contains_key(&g)).then(|| sums[g] / splits.len() as f64))
        .collect();
    let better = |a: f64, b: f64| {
        if metrics::higher_is_better(task) {
            a > b
        } else {
            a < b
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for (g, s) in inner_scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| better(s, b)) {
                best = Some((g, s));
            }
        }
    }
    let Some((selected, _)) = best else {
        return Err(Error::Evaluation(format!(
            "every grid point failed; first error: {}",
            failures.values().next().cloned().unwrap_or_default()
        )));
    };
    Ok(Selection {
        selected,
        inner_scores,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub subject_id: String,
    pub run_id: String,
    pub fold: usize,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub selected: usize,
    pub selected_label: String,
    pub inner_scores: Vec<Option<f64>>,
    pub failures: BTreeMap<usize, String>,
    pub metrics: BTreeMap<String, f64>,
    pub importance: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub task: Task,
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub grid: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub summary: BTreeMap<String, MeanStd>,
    /// Mean over folds of the selected models' feature importances.
    pub importance: BTreeMap<String, f64>,
    pub predictions: Vec<PredictionRow>,
    pub leakage: LeakageAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k_outer: 5,
            k_inner: 5,
            seed: 0,
        }
    }
}

fn check_inputs(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.len() != x.n_rows() {
        return Err(Error::Schema(format!(
            "{} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    Ok(())
}

/// Selects on `train` rows, refits there and predicts `test` rows.
#[allow(clippy::too_many_arguments)]
fn select_refit_predict(
    grid: &[GridPoint],
    x: &FeatureMatrix,
    y: &[f64],
    split: &Split,
    task: Task,
    k_inner: usize,
    seed: u64,
    audit: &mut LeakageAudit,
) -> Result<(Selection, FittedModel, Vec<f64>)> {
    let groups = x.groups();
    audit.check(&groups, split)?;
    let x_train = x.select_rows(&split.train);
    let y_train = select_rows(y, &split.train);
    let selection = select_grid_point(grid, &x_train, &y_train, task, k_inner, seed, audit)?;
    let x_test = x.select_rows(&split.test);
    let mut cache = SplitCache::new(x_train, y_train, &x_test, task);
    let (_, model, pred) = fit_predict(&mut cache, &grid[selection.selected])
        .map_err(|e| Error::Evaluation(format!("refit of the selected model failed: {e}")))?;
    Ok((selection, model, pred))
}

/// Nested grouped cross-validation: the outer folds estimate performance,
/// the inner folds of each outer-train set pick the grid point.
pub fn nested_cv(
    grid: &[GridPoint],
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    opts: CvOptions,
) -> Result<CvReport> {
    check_inputs(x, y)?;
    let groups = x.groups();
    let outer = grouped_kfold(&groups, opts.k_outer, opts.seed)?;
    let mut audit = LeakageAudit::default();
    let mut folds = Vec::with_capacity(outer.len());
    let mut predictions = Vec::with_capacity(x.n_rows());
    for (f, split) in outer.iter().enumerate() {
        let (selection, model, pred) = select_refit_predict(
            grid,
            x,
            y,
            split,
            task,
            opts.k_inner,
            mix(opts.seed, f as u64 + 1),
            &mut audit,
        )?;
        let y_test = select_rows(y, &split.test);
        for (&i, p) in split.test.iter().zip(&pred) {
            predictions.push(PredictionRow {
                subject_id: x.row_keys[i].0.clone(),
                run_id: x.row_keys[i].1.clone(),
                fold: f,
                y_true: y[i],
                y_pred: *p,
            });
        }
        folds.push(FoldResult {
            fold: f,
            n_train: split.train.len(),
            n_test: split.test.len(),
            selected: selection.selected,
            selected_label: grid[selection.selected].label(),
            inner_scores: selection.inner_scores,
            failures: selection.failures,
            metrics: metrics::score_available(task, &y_test, &pred),
            importance: model.feature_importance().unwrap_or_default(),
        });
    }
    predictions.sort_by(|a, b| (&a.subject_id, &a.run_id).cmp(&(&b.subject_id, &b.run_id)));
    let per_fold: Vec<BTreeMap<String, f64>> = folds.iter().map(|f| f.metrics.clone()).collect();
    let mut importance: BTreeMap<String, f64> = BTreeMap::new();
    for fold in &folds {
        for (k, v) in &fold.importance {
            *importance.entry(k.clone()).or_default() += v / folds.len() as f64;
        }
    }
    Ok(CvReport {
        task,
        k_outer: opts.k_outer,
        k_inner: opts.k_inner,
        seed: opts.seed,
        grid: grid.iter().map(GridPoint::label).collect(),
        summary: summarize(&per_fold),
        folds,
        importance,
        predictions,
        leakage: audit,
    })
}

/// A final model: grid point chosen by grouped CV on all rows, then refit
/// on all rows.
pub struct FinalFit {
    pub selection: Selection,
    pub pipeline: FittedPipeline,
    pub model: FittedModel,
}

pub fn select_and_fit(
    grid: &[GridPoint],
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    opts: CvOptions,
) -> Result<FinalFit> {
    check_inputs(x, y)?;
    let mut audit = LeakageAudit::default();
    let selection = select_grid_point(
        grid,
        x,
        y,
        task,
        opts.k_inner,
        mix(opts.seed, 0),
        &mut audit,
    )?;
    let point = &grid[selection.selected];
    let pipeline = FittedPipeline::fit(&point.pipeline, x, y, task)?;
    let transformed = pipeline.transform(x)?;
    let model = fit(
        &point.model,
        transformed.data.view(),
        &transformed.columns,
        y,
    )?;
    Ok(FinalFit {
        selection,
        pipeline,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub train_site: String,
    pub test_site: String,
    pub n_train: usize,
    pub n_test: usize,
    pub selected: usize,
    pub selected_label: String,
    pub inner_scores: Vec<Option<f64>>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSiteReport {
    pub task: Task,
    pub grid: Vec<String>,
    pub directions: Vec<DirectionResult>,
    pub leakage: LeakageAudit,
}

/// Train on one site (selecting by inner grouped CV there), test on the
/// other, in both directions.
pub fn cross_site_eval(
    grid: &[GridPoint],
    sites: [(&str, &FeatureMatrix, &[f64]); 2],
    task: Task,
    opts: CvOptions,
) -> Result<CrossSiteReport> {
    let mut audit = LeakageAudit::default();
    let mut directions = Vec::new();
    for (d, (a, b)) in [(0, 1), (1, 0)].into_iter().enumerate() {
        let (name_a, x_a, y_a) = sites[a];
        let (name_b, x_b, y_b) = sites[b];
        check_inputs(x_a, y_a)?;
        check_inputs(x_b, y_b)?;
        let selection = select_grid_point(
            grid,
            x_a,
            y_a,
            task,
            opts.k_inner,
            mix(opts.seed, d as u64),
            &mut audit,
        )?;
        let mut cache = SplitCache::new(x_a.clone(), y_a.to_vec(), x_b, task);
        let (_, _, pred) = fit_predict(&mut cache, &grid[selection.selected])
            .map_err(|e| Error::Evaluation(format!("refit on site {name_a} failed: {e}")))?;
        directions.push(DirectionResult {
            train_site: name_a.to_owned(),
            test_site: name_b.to_owned(),
            n_train: x_a.n_rows(),
            n_test: x_b.n_rows(),
            selected: selection.selected,
            selected_label: grid[selection.selected].label(),
            inner_scores: selection.inner_scores,
            metrics: metrics::score_available(task, y_b, &pred),
        });
    }
    Ok(CrossSiteReport {
        task,
        grid: grid.iter().map(GridPoint::label).collect(),
        directions,
        leakage: audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub mean_train_subjects: f64,
    pub summary: BTreeMap<String, MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: Task,
    pub points: Vec<SweepPoint>,
    pub leakage: LeakageAudit,
}

/// Outer grouped CV where each outer-train set is cut down to a fraction of
/// its subjects before selection and fitting. Subsets are nested: the
/// subjects used at a smaller fraction are a prefix of a fixed shuffled
/// order, and the outer-test rows are the same for every fraction.
pub fn training_size_sweep(
    grid: &[GridPoint],
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    fractions: &[f64],
    opts: CvOptions,
) -> Result<SweepReport> {
    check_inputs(x, y)?;
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "training fraction must be in (0, 1], got {f}"
        )));
    }
    let groups = x.groups();
    let outer = grouped_kfold(&groups, opts.k_outer, opts.seed)?;
    let mut audit = LeakageAudit::default();
    let mut per_fraction: Vec<(Vec<BTreeMap<String, f64>>, f64)> =
        vec![(Vec::new(), 0.0); fractions.len()];
    for (f, split) in outer.iter().enumerate() {
        let mut subjects: Vec<&str> = split
            .train
            .iter()
            .map(|&i| groups[i].as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        subjects.shuffle(&mut stream(mix(opts.seed, 7), f as u64));
        for (p, &fraction) in fractions.iter().enumerate() {
            let n = ((fraction * subjects.len() as f64).ceil() as usize)
                .clamp(opts.k_inner.max(2), subjects.len());
            let chosen: BTreeSet<&str> = subjects[..n].iter().copied().collect();
            let sub = Split {
                train: split
                    .train
                    .iter()
                    .copied()
                    .filter(|&i| chosen.contains(groups[i].as_str()))
                    .collect(),
                test: split.test.clone(),
            };
            let (_, _, pred) = select_refit_predict(
                grid,
                x,
                y,
                &sub,
                task,
                opts.k_inner,
                mix(opts.seed, f as u64 + 1),
                &mut audit,
            )?;
            per_fraction[p].0.push(metrics::score_available(
                task,
                &select_rows(y, &split.test),
                &pred,
            ));
            per_fraction[p].1 += n as f64 / outer.len() as f64;
        }
    }
    Ok(SweepReport {
        task,
        points: fractions
            .iter()
            .zip(per_fraction)
            .map(|(&fraction, (m, subjects))| SweepPoint {
                fraction,
                mean_train_subjects: subjects,
                summary: summarize(&m),
            })
            .collect(),
        leakage: audit,
    })
}
