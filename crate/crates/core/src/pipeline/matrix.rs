use std::collections::HashSet;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::io::tables::IqmTable;

/// Per-stack feature rows with their identities. Before imputation a
/// missing value is stored as NaN; every later stage works on complete
/// matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    /// `(subject_id, run_id)` per row.
    pub row_keys: Vec<(String, String)>,
    pub data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(
        columns: Vec<String>,
        row_keys: Vec<(String, String)>,
        data: Array2<f64>,
    ) -> Result<Self> {
        if data.nrows() != row_keys.len() || data.ncols() != columns.len() {
            return Err(Error::Schema(format!(
                "matrix is {}x{} but has {} row keys and {} column names",
                data.nrows(),
                data.ncols(),
                row_keys.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Schema(format!("duplicate column {dup:?}")));
        }
        Ok(FeatureMatrix {
            columns,
            row_keys,
            data,
        })
    }

    pub fn from_table(table: &IqmTable) -> Result<Self> {
        let p = table.feature_names.len();
        let mut data = Array2::zeros((table.rows.len(), p));
        for (i, row) in table.rows.iter().enumerate() {
            for (j, v) in row.values.iter().enumerate() {
                data[[i, j]] = v.unwrap_or(f64::NAN);
            }
        }
        let keys = table
            .rows
            .iter()
            .map(|r| (r.subject_id.clone(), r.run_id.clone()))
            .collect();
        FeatureMatrix::new(table.feature_names.clone(), keys, data)
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    /// Subject id of each row; rows of one subject form a group.
    pub fn groups(&self) -> Vec<String> {
        self.row_keys.iter().map(|k| k.0.clone()).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            row_keys: rows.iter().map(|&i| self.row_keys[i].clone()).collect(),
            data: self.data.select(Axis(0), rows),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            row_keys: self.row_keys.clone(),
            data: self.data.select(Axis(1), cols),
        }
    }

    /// Columns reordered to `names`; fails if one is absent.
    pub fn select_named(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Schema(format!("missing feature column {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&idx))
    }
}
