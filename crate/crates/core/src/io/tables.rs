//! IQM tables (TSV), rating documents (JSON) and ratings tables (TSV).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Ratings at or below this quality are excluded.
pub const EXCLUDE_THRESHOLD: f64 = 1.0;

pub const MISSING: &str = "NA";

/// Artifact flags offered by the rating widget.
pub const ARTIFACTS: [&str; 6] = [
    "inter_slice_motion",
    "signal_drop",
    "bias_field",
    "incomplete_fov",
    "noise",
    "other",
];

#[derive(Debug, Clone, PartialEq)]
pub struct IqmRow {
    pub subject_id: String,
    pub run_id: String,
    pub values: Vec<Option<f64>>,
    /// Extra non-feature columns, e.g. an acquisition site.
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IqmTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<IqmRow>,
}

fn format_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => MISSING.to_owned(),
    }
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let c = cell.trim();
    if c.is_empty() || c == MISSING {
        return Ok(None);
    }
    match c.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Value {
            row,
            column: column.to_owned(),
            reason: format!("{c:?} is not a finite number"),
        }),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl IqmTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn meta_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.meta.keys().cloned())
            .collect();
        cols.sort();
        cols.dedup();
        cols
    }

    pub fn to_tsv(&self) -> String {
        let meta = self.meta_columns();
        let mut out = String::from("subject_id\trun_id");
        for m in &meta {
            let _ = write!(out, "\t{m}");
        }
        for n in &self.feature_names {
            let _ = write!(out, "\t{n}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}\t{}", r.subject_id, r.run_id);
            for m in &meta {
                let _ = write!(out, "\t{}", r.meta.get(m).map(String::as_str).unwrap_or(""));
            }
            for v in &r.values {
                let _ = write!(out, "\t{}", format_cell(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Parses a TSV table. Columns listed in `meta_columns` are kept as
    /// strings; every other column must be numeric (or `NA`).
    pub fn from_tsv(text: &str, meta_columns: &[&str]) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Schema("missing header row".into()))?
            .split('\t')
            .collect();
        let find = |name: &str| header.iter().position(|h| *h == name);
        let sub_col =
            find("subject_id").ok_or_else(|| Error::Schema("missing column subject_id".into()))?;
        let run_col =
            find("run_id").ok_or_else(|| Error::Schema("missing column run_id".into()))?;
        let mut feature_cols = Vec::new();
        let mut meta_cols = Vec::new();
        for (i, h) in header.iter().enumerate() {
            if i == sub_col || i == run_col {
                continue;
            }
            if meta_columns.contains(h) {
                meta_cols.push(i);
            } else {
                feature_cols.push(i);
            }
        }
        let mut table = IqmTable {
            feature_names: feature_cols.iter().map(|&i| header[i].to_owned()).collect(),
            rows: Vec::new(),
        };
        for (row_idx, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != header.len() {
                return Err(Error::Schema(format!(
                    "row {} has {} cells, header has {}",
                    row_idx + 1,
                    cells.len(),
                    header.len()
                )));
            }
            let values = feature_cols
                .iter()
                .map(|&i| parse_cell(cells[i], row_idx + 1, header[i]))
                .collect::<Result<Vec<_>>>()?;
            let meta = meta_cols
                .iter()
                .map(|&i| (header[i].to_owned(), cells[i].to_owned()))
                .collect();
            table.rows.push(IqmRow {
                subject_id: cells[sub_col].to_owned(),
                run_id: cells[run_col].to_owned(),
                values,
                meta,
            });
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_tsv())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tsv(&read_text(path)?, &[])
    }

    pub fn read_with_meta(path: &Path, meta_columns: &[&str]) -> Result<Self> {
        Self::from_tsv(&read_text(path)?, meta_columns)
    }

    /// Reorders (and subsets) feature columns to `names`; a column absent
    /// from the table is a schema error.
    pub fn select_columns(&self, names: &[String]) -> Result<IqmTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| Error::Schema(format!("missing feature column {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IqmTable {
            feature_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| IqmRow {
                    subject_id: r.subject_id.clone(),
                    run_id: r.run_id.clone(),
                    values: idx.iter().map(|&i| r.values[i]).collect(),
                    meta: r.meta.clone(),
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Axial,
    Coronal,
    Sagittal,
    #[default]
    Unknown,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Axial => "axial",
            Orientation::Coronal => "coronal",
            Orientation::Sagittal => "sagittal",
            Orientation::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "axial" => Orientation::Axial,
            "coronal" => Orientation::Coronal,
            "sagittal" => Orientation::Sagittal,
            "unknown" | "" => Orientation::Unknown,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcLabel {
    Include,
    Exclude,
}

impl QcLabel {
    pub fn from_quality(q: f64) -> Self {
        if q <= EXCLUDE_THRESHOLD {
            QcLabel::Exclude
        } else {
            QcLabel::Include
        }
    }

    /// 1 for include, 0 for exclude.
    pub fn as_target(self) -> f64 {
        match self {
            QcLabel::Include => 1.0,
            QcLabel::Exclude => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QcLabel::Include => "include",
            QcLabel::Exclude => "exclude",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rating {
    pub subject_id: String,
    pub run_id: String,
    pub quality: f64,
    pub orientation: Orientation,
    pub artifacts: BTreeMap<String, u8>,
    pub rater_id: String,
    pub seconds_spent: f64,
    pub timestamp: String,
}

impl Rating {
    pub fn label(&self) -> QcLabel {
        QcLabel::from_quality(self.quality)
    }

    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("rating serializes");
        v["label"] = Value::String(self.label().as_str().to_owned());
        v
    }

    /// Validates and converts one rating document.
    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Schema("rating must be a JSON object".into()))?;
        let bad = |column: &str, reason: String| Error::Value {
            row: 0,
            column: column.to_owned(),
            reason,
        };
        let quality = obj
            .get("quality")
            .ok_or_else(|| Error::Schema("missing field quality".into()))?
            .as_f64()
            .ok_or_else(|| bad("quality", "not a number".into()))?;
        if !(0.0..=4.0).contains(&quality) {
            return Err(bad("quality", format!("{quality} is outside [0, 4]")));
        }
        let string = |key: &str, required: bool| -> Result<String> {
            match obj.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(other) => Err(bad(key, format!("expected a string, got {other}"))),
                None if required => Err(Error::Schema(format!("missing field {key}"))),
                None => Ok(String::new()),
            }
        };
        let orientation = match obj.get("orientation") {
            None | Some(Value::Null) => Orientation::Unknown,
            Some(Value::String(s)) => Orientation::parse(s)
                .ok_or_else(|| bad("orientation", format!("unknown orientation {s:?}")))?,
            Some(other) => return Err(bad("orientation", format!("{other}"))),
        };
        let mut artifacts = BTreeMap::new();
        match obj.get("artifacts") {
            None | Some(Value::Null) => {}
            Some(Value::Object(map)) => {
                for (name, grade) in map {
                    let g = grade
                        .as_u64()
                        .filter(|g| *g <= 3)
                        .ok_or_else(|| bad("artifacts", format!("grade of {name} must be 0..3")))?;
                    artifacts.insert(name.clone(), g as u8);
                }
            }
            Some(other) => {
                return Err(bad("artifacts", format!("expected an object, got {other}")))
            }
        }
        let seconds_spent = match obj.get("seconds_spent") {
            None | Some(Value::Null) => 0.0,
            Some(v) => v
                .as_f64()
                .filter(|s| *s >= 0.0)
                .ok_or_else(|| bad("seconds_spent", "must be a non-negative number".into()))?,
        };
        let rating = Rating {
            subject_id: string("subject_id", true)?,
            run_id: string("run_id", true)?,
            quality,
            orientation,
            artifacts,
            rater_id: string("rater_id", false)?,
            seconds_spent,
            timestamp: string("timestamp", false)?,
        };
        if let Some(label) = obj.get("label").and_then(Value::as_str) {
            if label != rating.label().as_str() {
                return Err(bad(
                    "label",
                    format!("{label:?} contradicts quality {quality}"),
                ));
            }
        }
        Ok(rating)
    }
}

/// Reads a rating file holding one document or an array of documents.
pub fn read_rating_file(path: &Path) -> Result<Vec<Rating>> {
    let text = read_text(path)?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| Error::parse(e.column(), e.to_string()))?;
    match &v {
        Value::Array(items) => items.iter().map(Rating::from_json).collect(),
        _ => Ok(vec![Rating::from_json(&v)?]),
    }
}

pub fn write_rating_file(path: &Path, rating: &Rating) -> Result<()> {
    let text = serde_json::to_string_pretty(&rating.to_json()).expect("json");
    write_text(path, &text)
}

const RATING_COLUMNS: [&str; 8] = [
    "subject_id",
    "run_id",
    "rater_id",
    "quality",
    "label",
    "orientation",
    "seconds_spent",
    "timestamp",
];

pub fn ratings_to_tsv(ratings: &[Rating]) -> String {
    let mut out = RATING_COLUMNS.join("\t");
    for a in ARTIFACTS {
        let _ = write!(out, "\tartifact_{a}");
    }
    out.push('\n');
    for r in ratings {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.subject_id,
            r.run_id,
            r.rater_id,
            r.quality,
            r.label().as_str(),
            r.orientation.as_str(),
            r.seconds_spent,
            r.timestamp
        );
        for a in ARTIFACTS {
            let _ = write!(out, "\t{}", r.artifacts.get(a).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    out
}

/// Ratings table row with any extra (e.g. site) columns kept aside.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRow {
    pub rating: Rating,
    pub meta: BTreeMap<String, String>,
}

pub fn ratings_from_tsv(text: &str) -> Result<Vec<RatingRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Schema("missing header row".into()))?
        .split('\t')
        .collect();
    for required in ["subject_id", "run_id", "quality"] {
        if !header.contains(&required) {
            return Err(Error::Schema(format!("missing column {required}")));
        }
    }
    let mut out = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {} has {} cells",
                row_idx + 1,
                cells.len()
            )));
        }
        let mut obj = serde_json::Map::new();
        let mut artifacts = serde_json::Map::new();
        let mut meta = BTreeMap::new();
        for (h, c) in header.iter().zip(&cells) {
            match *h {
                "quality" | "seconds_spent" => {
                    let v = parse_cell(c, row_idx + 1, h)?.ok_or_else(|| Error::Value {
                        row: row_idx + 1,
                        column: h.to_string(),
                        reason: "missing value".into(),
                    })?;
                    obj.insert(h.to_string(), serde_json::json!(v));
                }
                "label" => {
                    obj.insert("label".into(), Value::String(c.to_string()));
                }
                "subject_id" | "run_id" | "rater_id" | "orientation" | "timestamp" => {
                    obj.insert(h.to_string(), Value::String(c.to_string()));
                }
                other => {
                    if let Some(a) = other.strip_prefix("artifact_") {
                        let g: u64 = c.trim().parse().map_err(|_| Error::Value {
                            row: row_idx + 1,
                            column: other.to_owned(),
                            reason: format!("{c:?} is not a grade"),
                        })?;
                        if g > 0 {
                            artifacts.insert(a.to_owned(), serde_json::json!(g));
                        }
                    } else {
                        meta.insert(other.to_owned(), c.to_string());
                    }
                }
            }
        }
        obj.insert("artifacts".into(), Value::Object(artifacts));
        let rating = Rating::from_json(&Value::Object(obj)).map_err(|e| match e {
            Error::Value { column, reason, .. } => Error::Value {
                row: row_idx + 1,
                column,
                reason,
            },
            other => other,
        })?;
        out.push(RatingRow { rating, meta });
    }
    Ok(out)
}

pub fn read_ratings_table(path: &Path) -> Result<Vec<RatingRow>> {
    ratings_from_tsv(&read_text(path)?)
}

pub fn write_ratings_table(path: &Path, ratings: &[Rating]) -> Result<()> {
    write_text(path, &ratings_to_tsv(ratings))
}

/// Outcome of merging a folder of rating documents.
#[derive(Debug, Clone, Default)]
pub struct MergeOutcome {
    pub ratings: Vec<Rating>,
    pub errors: Vec<(PathBuf, String)>,
}

/// Collects every `*.json` rating in `dir`. One row is kept per
/// (subject, run, rater): the one with the latest timestamp. Unreadable
/// files are reported rather than aborting the merge.
pub fn merge_ratings(dir: &Path) -> Result<MergeOutcome> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let mut outcome = MergeOutcome::default();
    let mut latest: BTreeMap<(String, String, String), Rating> = BTreeMap::new();
    for f in files {
        match read_rating_file(&f) {
            Ok(ratings) => {
                for r in ratings {
                    let key = (r.subject_id.clone(), r.run_id.clone(), r.rater_id.clone());
                    match latest.get(&key) {
                        Some(prev) if prev.timestamp > r.timestamp => {}
                        _ => {
                            latest.insert(key, r);
                        }
                    }
                }
            }
            Err(e) => outcome.errors.push((f, e.to_string())),
        }
    }
    outcome.ratings = latest.into_values().collect();
    Ok(outcome)
}

/// Mean quality per (subject, run) over all raters.
pub fn mean_quality(ratings: &[Rating]) -> BTreeMap<(String, String), f64> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in ratings {
        let e = acc
            .entry((r.subject_id.clone(), r.run_id.clone()))
            .or_default();
        e.0 += r.quality;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}
