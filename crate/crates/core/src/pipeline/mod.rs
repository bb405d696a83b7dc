//! Turns raw IQM tables into model inputs: median imputation, scaling,
//! removal of constant and redundant columns, shadow-feature selection and
//! an optional PCA rotation. Every parameter is learned on training rows
//! and frozen for later transforms.

pub mod matrix;
pub mod pca;
pub mod scale;
pub mod select;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Task;
pub use matrix::FeatureMatrix;
pub use pca::{PcaBasis, DEFAULT_VARIANCE_KEPT};
pub use scale::{Scaler, Scaling};
pub use select::{drop_zero_variance, prune_correlated, winnow_select, WinnowOutcome};

pub const CORRELATION_THRESHOLDS: [f64; 2] = [0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// `None` disables correlation pruning.
    pub corr_threshold: Option<f64>,
    pub winnow: bool,
    pub pca: bool,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corr_threshold: None,
            winnow: false,
            pca: false,
            scaling: Scaling::SubjectWise,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        match self.corr_threshold {
            Some(t) if !CORRELATION_THRESHOLDS.contains(&t) => Err(Error::InvalidArgument(format!(
                "correlation threshold must be one of {CORRELATION_THRESHOLDS:?} or disabled, got {t}"
            ))),
            _ => Ok(()),
        }
    }

    /// Short human-readable description, e.g. `corr0.9+winnow`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.corr_threshold {
            parts.push(format!("corr{t}"));
        }
        if self.winnow {
            parts.push("winnow".into());
        }
        if self.pca {
            parts.push("pca".into());
        }
        if self.scaling == Scaling::Global {
            parts.push("global".into());
        }
        if parts.is_empty() {
            "plain".into()
        } else {
            parts.join("+")
        }
    }

    /// Every combination of correlation threshold, winnow and PCA.
    pub fn grid(seed: u64) -> Vec<PipelineConfig> {
        let mut out = Vec::new();
        for corr_threshold in [Some(0.8), Some(0.9), None] {
            for winnow in [true, false] {
                for pca in [true, false] {
                    out.push(PipelineConfig {
                        corr_threshold,
                        winnow,
                        pca,
                        scaling: Scaling::SubjectWise,
                        seed,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub input_columns: Vec<String>,
    /// Training median of each input column, used to fill missing values.
    pub medians: Vec<f64>,
    pub scaler: Scaler,
    /// Input columns surviving all selection stages, in input order.
    pub selected: Vec<usize>,
    pub removed_zero_variance: Vec<String>,
    pub removed_correlated: Vec<String>,
    pub removed_winnow: Vec<String>,
    pub winnow_fallback: bool,
    pub pca: Option<PcaBasis>,
    pub output_columns: Vec<String>,
}

fn names(all: &[String], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| all[j].clone()).collect()
}

fn without(from: &[usize], kept: &[usize]) -> Vec<usize> {
    from.iter().copied().filter(|j| !kept.contains(j)).collect()
}

impl FittedPipeline {
    /// Fits every stage on `m` (the training rows) with targets `y`.
    pub fn fit(config: &PipelineConfig, m: &FeatureMatrix, y: &[f64], task: Task) -> Result<Self> {
        let base = FittedPipeline::fit_selection(config, m, y, task)?;
        if !config.pca {
            return Ok(base);
        }
        let selected = base.transform(m)?;
        base.with_pca(selected.data.view())
    }

    /// Fits all stages except PCA, whatever `config.pca` says.
    pub fn fit_selection(
        config: &PipelineConfig,
        m: &FeatureMatrix,
        y: &[f64],
        task: Task,
    ) -> Result<Self> {
        config.validate()?;
        if m.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if y.len() != m.n_rows() {
            return Err(Error::Schema(format!(
                "{} rows but {} targets",
                m.n_rows(),
                y.len()
            )));
        }
        let medians: Vec<f64> = m
            .data
            .columns()
            .into_iter()
            .map(|c| {
                let present: Vec<f64> = c.iter().copied().filter(|v| !v.is_nan()).collect();
                if present.is_empty() {
                    0.0
                } else {
                    crate::stats::median(&present)
                }
            })
            .collect();
        let imputed = impute(m.data.view(), &medians);
        let scaler = Scaler::fit(imputed.view(), config.scaling);
        let scaled = scaler.transform(imputed.view(), &m.groups());

        let all: Vec<usize> = (0..m.n_cols()).collect();
        let varying = drop_zero_variance(scaled.view());
        if varying.is_empty() {
            return Err(Error::DegenerateFeatures(
                "every column is constant on the training rows".into(),
            ));
        }
        let removed_zero_variance = names(&m.columns, &without(&all, &varying));

        let view = scaled.select(ndarray::Axis(1), &varying);
        let after_corr: Vec<usize> = match config.corr_threshold {
            Some(t) => prune_correlated(view.view(), t)?
                .into_iter()
                .map(|k| varying[k])
                .collect(),
            None => varying.clone(),
        };
        let removed_correlated = names(&m.columns, &without(&varying, &after_corr));

        let (selected, winnow_fallback) = if config.winnow {
            let view = scaled.select(ndarray::Axis(1), &after_corr);
            let outcome = winnow_select(view.view(), y, task, config.seed)?;
            (
                outcome.kept.iter().map(|&k| after_corr[k]).collect(),
                outcome.fallback,
            )
        } else {
            (after_corr.clone(), false)
        };
        let removed_winnow = names(&m.columns, &without(&after_corr, &selected));

        Ok(FittedPipeline {
            config: PipelineConfig {
                pca: false,
                ..*config
            },
            input_columns: m.columns.clone(),
            medians,
            scaler,
            output_columns: names(&m.columns, &selected),
            selected,
            removed_zero_variance,
            removed_correlated,
            removed_winnow,
            winnow_fallback,
            pca: None,
        })
    }

    /// Adds a PCA stage fitted on `selected_train`, the output of this
    /// (PCA-free) pipeline on its training rows.
    pub fn with_pca(mut self, selected_train: ArrayView2<f64>) -> Result<Self> {
        let basis = PcaBasis::fit(selected_train, DEFAULT_VARIANCE_KEPT)?;
        self.output_columns = (1..=basis.n_components())
            .map(|k| format!("pc{k}"))
            .collect();
        self.pca = Some(basis);
        self.config.pca = true;
        Ok(self)
    }

    /// Applies the frozen stages. `m` must contain every input column
    /// (extra columns are ignored); rows may come from any subjects.
    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let aligned = if m.columns == self.input_columns {
            m.data.view().to_owned()
        } else {
            m.select_named(&self.input_columns)?.data
        };
        let imputed = impute(aligned.view(), &self.medians);
        let scaled = self.scaler.transform(imputed.view(), &m.groups());
        let selected = scaled.select(ndarray::Axis(1), &self.selected);
        let data = match &self.pca {
            Some(basis) => basis.project(selected.view()),
            None => selected,
        };
        FeatureMatrix::new(self.output_columns.clone(), m.row_keys.clone(), data)
    }
}

fn impute(x: ArrayView2<f64>, medians: &[f64]) -> Array2<f64> {
    let mut out = x.to_owned();
    for ((_, j), v) in out.indexed_iter_mut() {
        if v.is_nan() {
            *v = medians[j];
        }
    }
    out
}
