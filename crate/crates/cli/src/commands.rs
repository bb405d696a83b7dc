use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::args::{
    Command, DatasetArgs, EvaluateArgs, ExtractArgs, FeatureSet, LearnArgs, MergeArgs, PredictArgs,
    RateCommand, ReportArgs, SynthArgs, TrainArgs,
};
use fetqc::eval::{self, CvOptions, GridPoint};
use fetqc::io::tables::{merge_ratings, read_ratings_table, write_ratings_table, RatingRow};
use fetqc::io::{index_bids, DatasetEntry, IqmRow, IqmTable, QcLabel};
use fetqc::iqm::catalog::{BASE_FEATURES, CATALOG_ID, CATALOG_VERSION};
use fetqc::iqm::{extract_all_iqms, FeatureCatalog};
use fetqc::models::bundle::ModelBundle;
use fetqc::models::Task;
use fetqc::pipeline::FeatureMatrix;
use fetqc::report::{self, GroupRow, GroupSort, ReportOptions};

/// IQMs shown in the group report when present.
const KEY_IQMS: [&str; 5] = [
    "rank_error",
    "mask_volume",
    "centroid",
    "closing_mask",
    "bias",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] fetqc::Error),
    #[error("{failed} of {total} stacks failed; see {manifest}")]
    Partial {
        failed: usize,
        total: usize,
        manifest: PathBuf,
    },
}

type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Report(a) => report(a),
        Command::Extract(a) => extract(a),
        Command::Rate(RateCommand::Merge(a)) => merge(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| fetqc::Error::Io {
            path: parent.to_owned(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        fetqc::Error::Io {
            path: path.to_owned(),
            source: e,
        }
        .into()
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn index(d: &DatasetArgs) -> Result<Vec<DatasetEntry>> {
    require(&d.bids, "BIDS root")?;
    require(&d.masks, "mask root")?;
    let idx = index_bids(&d.bids, &d.masks, &d.mask_pattern)?;
    for p in &idx.unmatched {
        eprintln!("warning: no mask for {}", p.display());
    }
    if idx.entries.is_empty() {
        return Err(fetqc::Error::EmptyDataset.into());
    }
    Ok(idx.entries)
}

fn write_manifest(path: &Path, failures: &[(String, String, String)]) -> Result<()> {
    let mut text = String::from("subject_id\trun_id\terror\n");
    for (s, r, e) in failures {
        let _ = writeln!(text, "{s}\t{r}\t{}", e.replace(['\t', '\n'], " "));
    }
    write_file(path, &text)
}

fn extract_one(entry: &DatasetEntry, catalog: &FeatureCatalog) -> Result<IqmRow, String> {
    let (stack, mask) = entry.load().map_err(|e| e.to_string())?;
    let v = extract_all_iqms(&stack, &mask, catalog);
    Ok(IqmRow {
        subject_id: entry.subject_id.clone(),
        run_id: entry.run_id.clone(),
        values: v.values,
        meta: BTreeMap::new(),
    })
}

fn extract(a: ExtractArgs) -> Result<()> {
    let catalog = match &a.catalog {
        Some(p) => {
            require(p, "catalog")?;
            FeatureCatalog::load(p)?
        }
        None => FeatureCatalog::canonical(),
    };
    let entries = index(&a.dataset)?;
    let results: Vec<Result<IqmRow, String>> = pool(a.dataset.jobs)?.install(|| {
        entries
            .par_iter()
            .map(|e| extract_one(e, &catalog))
            .collect()
    });
    let mut table = IqmTable {
        feature_names: catalog.names(),
        rows: Vec::new(),
    };
    let mut failures = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok(row) => table.rows.push(row),
            Err(msg) => failures.push((e.subject_id.clone(), e.run_id.clone(), msg)),
        }
    }
    table.write(&a.out)?;
    eprintln!(
        "wrote {} rows x {} features to {}",
        table.rows.len(),
        table.feature_names.len(),
        a.out.display()
    );
    if failures.is_empty() {
        return Ok(());
    }
    let manifest = a.out.with_extension("failures.tsv");
    write_manifest(&manifest, &failures)?;
    Err(CliError::Partial {
        failed: failures.len(),
        total: entries.len(),
        manifest,
    })
}

/// Predictions TSV as written by `predict`.
fn read_predictions(path: &Path) -> Result<BTreeMap<(String, String), (f64, String)>> {
    require(path, "predictions file")?;
    let text = fs::read_to_string(path).map_err(|e| fetqc::Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| {
            fetqc::Error::Schema(format!("{}: missing column {name}", path.display()))
        })
    };
    let (s, r, sc, l) = (
        col("subject_id")?,
        col("run_id")?,
        col("score")?,
        col("label")?,
    );
    let mut out = BTreeMap::new();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        let get = |c: usize| cells.get(c).copied().unwrap_or_default();
        let score = get(sc).parse::<f64>().map_err(|_| fetqc::Error::Value {
            row: i + 1,
            column: "score".into(),
            reason: format!("{:?} is not a number", get(sc)),
        })?;
        out.insert(
            (get(s).to_owned(), get(r).to_owned()),
            (score, get(l).to_owned()),
        );
    }
    Ok(out)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn report(a: ReportArgs) -> Result<()> {
    let entries = index(&a.dataset)?;
    let predictions = a
        .predictions
        .as_deref()
        .map(read_predictions)
        .transpose()?
        .unwrap_or_default();
    let ratings = match &a.ratings {
        Some(p) => {
            require(p, "ratings table")?;
            let rows: Vec<_> = read_ratings_table(p)?
                .into_iter()
                .map(|r| r.rating)
                .collect();
            fetqc::io::tables::mean_quality(&rows)
        }
        None => BTreeMap::new(),
    };
    let opts = ReportOptions {
        timestamp: a.timestamp.clone().unwrap_or_else(now),
        toolkit_version: fetqc::VERSION.to_owned(),
    };
    let catalog = FeatureCatalog::canonical();
    let key_iqms: Vec<String> = KEY_IQMS
        .iter()
        .filter(|n| catalog.names().iter().any(|c| c == *n))
        .map(|n| n.to_string())
        .collect();
    let render = |e: &DatasetEntry| -> Result<Vec<Option<f64>>, String> {
        let (stack, mask) = e.load().map_err(|e| e.to_string())?;
        let iqms = extract_all_iqms(&stack, &mask, &catalog);
        let out = a
            .out
            .join(report::report_file_name(&e.subject_id, &e.run_id));
        report::write_report(&stack, &mask, &iqms, &out, &opts).map_err(|e| e.to_string())?;
        Ok(key_iqms.iter().map(|n| iqms.get(n)).collect())
    };
    let results: Vec<_> =
        pool(a.dataset.jobs)?.install(|| entries.par_iter().map(render).collect());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        let key = (e.subject_id.clone(), e.run_id.clone());
        let pred = predictions.get(&key);
        let mut row = GroupRow {
            subject_id: e.subject_id.clone(),
            run_id: e.run_id.clone(),
            predicted: pred.map(|p| p.0),
            predicted_label: pred.map(|p| p.1.clone()),
            rating: ratings.get(&key).copied(),
            ..Default::default()
        };
        match r {
            Ok(values) => {
                row.report_href = Some(report::report_file_name(&e.subject_id, &e.run_id));
                row.iqms = values;
            }
            Err(msg) => {
                row.iqms = vec![None; key_iqms.len()];
                failures.push((e.subject_id.clone(), e.run_id.clone(), msg));
            }
        }
        rows.push(row);
    }
    let sort = if predictions.is_empty() {
        GroupSort::Id
    } else {
        GroupSort::Predicted
    };
    write_file(
        &a.out.join("index.html"),
        &report::render_group_report(&rows, &key_iqms, sort, &opts),
    )?;
    eprintln!(
        "wrote {} reports to {}",
        entries.len() - failures.len(),
        a.out.display()
    );
    if failures.is_empty() {
        return Ok(());
    }
    let manifest = a.out.join("failures.tsv");
    write_manifest(&manifest, &failures)?;
    Err(CliError::Partial {
        failed: failures.len(),
        total: entries.len(),
        manifest,
    })
}

fn merge(a: MergeArgs) -> Result<()> {
    require(&a.input, "rating folder")?;
    let outcome = merge_ratings(&a.input)?;
    for (path, err) in &outcome.errors {
        eprintln!("skipped {}: {err}", path.display());
    }
    if outcome.ratings.is_empty() {
        return Err(fetqc::Error::EmptyDataset.into());
    }
    write_ratings_table(&a.out, &outcome.ratings)?;
    eprintln!(
        "merged {} ratings ({} files skipped)",
        outcome.ratings.len(),
        outcome.errors.len()
    );
    Ok(())
}

/// IQM rows joined with their mean rating.
struct Labeled {
    matrix: FeatureMatrix,
    y: Vec<f64>,
    meta: Vec<BTreeMap<String, String>>,
}

fn load_labeled(l: &LearnArgs, meta_column: Option<&str>) -> Result<Labeled> {
    require(&l.iqms, "IQM table")?;
    require(&l.ratings, "ratings table")?;
    let meta_cols: Vec<&str> = meta_column.into_iter().collect();
    let mut table = IqmTable::read_with_meta(&l.iqms, &meta_cols)?;
    if l.features == FeatureSet::Base {
        let names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        let meta: Vec<_> = table.rows.iter().map(|r| r.meta.clone()).collect();
        table = table.select_columns(&names)?;
        for (r, m) in table.rows.iter_mut().zip(meta) {
            r.meta = m;
        }
    }
    let rating_rows: Vec<RatingRow> = read_ratings_table(&l.ratings)?;
    let mut rating_meta: BTreeMap<(String, String), BTreeMap<String, String>> = BTreeMap::new();
    for r in &rating_rows {
        rating_meta
            .entry((r.rating.subject_id.clone(), r.rating.run_id.clone()))
            .or_insert_with(|| r.meta.clone());
    }
    let ratings: Vec<_> = rating_rows.into_iter().map(|r| r.rating).collect();
    let quality = fetqc::io::tables::mean_quality(&ratings);
    let task: Task = l.task.into();
    let mut keep = Vec::new();
    let mut y = Vec::new();
    let mut meta = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let key = (row.subject_id.clone(), row.run_id.clone());
        let Some(&q) = quality.get(&key) else {
            continue;
        };
        keep.push(i);
        y.push(match task {
            Task::Regression => q,
            Task::Classification => QcLabel::from_quality(q).as_target(),
        });
        let mut m = rating_meta.get(&key).cloned().unwrap_or_default();
        m.extend(row.meta.clone());
        meta.push(m);
    }
    if keep.len() < table.rows.len() {
        eprintln!(
            "warning: {} of {} stacks have no rating and are skipped",
            table.rows.len() - keep.len(),
            table.rows.len()
        );
    }
    if keep.is_empty() {
        return Err(fetqc::Error::EmptyDataset.into());
    }
    let matrix = FeatureMatrix::from_table(&table)?.select_rows(&keep);
    Ok(Labeled { matrix, y, meta })
}

fn grid(l: &LearnArgs) -> Result<Vec<GridPoint>> {
    let task: Task = l.task.into();
    let Some(path) = &l.grid else {
        return Ok(eval::default_grid(task, l.seed));
    };
    require(path, "grid file")?;
    let text = fs::read_to_string(path).map_err(|e| fetqc::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let points: Vec<GridPoint> = serde_json::from_str(&text)
        .map_err(|e| fetqc::Error::Schema(format!("{}: {e}", path.display())))?;
    if let Some(p) = points.iter().find(|p| p.model.task != task) {
        return Err(fetqc::Error::InvalidArgument(format!(
            "grid point {} is not a {task:?} model",
            p.label()
        ))
        .into());
    }
    Ok(points)
}

fn cv_options(l: &LearnArgs) -> CvOptions {
    CvOptions {
        k_outer: l.k_outer,
        k_inner: l.k_inner,
        seed: l.seed,
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let l = &a.learn;
    let data = load_labeled(l, None)?;
    let grid = grid(l)?;
    let task: Task = l.task.into();
    pool(l.jobs)?.install(|| -> Result<()> {
        if !a.no_cv {
            let cv = eval::nested_cv(&grid, &data.matrix, &data.y, task, cv_options(l))?;
            let text = to_json(&cv);
            print!("{text}");
            if let Some(p) = &a.report {
                write_file(p, &text)?;
            }
        }
        let fit = eval::select_and_fit(&grid, &data.matrix, &data.y, task, cv_options(l))?;
        eprintln!("selected {}", grid[fit.selection.selected].label());
        ModelBundle::new(fit.pipeline, fit.model, CATALOG_ID, CATALOG_VERSION)?.save(&a.out)?;
        Ok(())
    })
}

fn predict(a: PredictArgs) -> Result<()> {
    require(&a.iqms, "IQM table")?;
    require(&a.model, "model bundle")?;
    let bundle = ModelBundle::load(&a.model)?;
    let table = IqmTable::read(&a.iqms)?;
    let m = FeatureMatrix::from_table(&table)?;
    let x = bundle.pipeline.transform(&m)?;
    let scores = bundle.model.predict(x.data.view())?;
    let task = bundle.model.spec.task;
    let mut text = String::from("subject_id\trun_id\tscore\tlabel\n");
    for ((s, r), p) in m.row_keys.iter().zip(scores) {
        let (score, label) = match task {
            Task::Regression => {
                let q = p.clamp(0.0, 4.0);
                (q, QcLabel::from_quality(q))
            }
            Task::Classification => (
                p,
                if p >= 0.5 {
                    QcLabel::Include
                } else {
                    QcLabel::Exclude
                },
            ),
        };
        let _ = writeln!(text, "{s}\t{r}\t{score}\t{}", label.as_str());
    }
    write_file(&a.out, &text)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let l = &a.learn;
    let data = load_labeled(l, a.cross_site.as_deref())?;
    let grid = grid(l)?;
    let task: Task = l.task.into();
    let text = pool(l.jobs)?.install(|| -> Result<String> {
        if let Some(col) = &a.cross_site {
            let mut sites: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, m) in data.meta.iter().enumerate() {
                let site = m.get(col).filter(|s| !s.is_empty()).ok_or_else(|| {
                    fetqc::Error::Schema(format!("row {} has no value in column {col}", i + 1))
                })?;
                sites.entry(site.clone()).or_default().push(i);
            }
            if sites.len() != 2 {
                return Err(fetqc::Error::InvalidArgument(format!(
                    "cross-site evaluation needs exactly 2 sites in {col}, found {}",
                    sites.len()
                ))
                .into());
            }
            let parts: Vec<(String, FeatureMatrix, Vec<f64>)> = sites
                .into_iter()
                .map(|(name, rows)| {
                    let y = rows.iter().map(|&i| data.y[i]).collect();
                    (name, data.matrix.select_rows(&rows), y)
                })
                .collect();
            let report = eval::cross_site_eval(
                &grid,
                [
                    (parts[0].0.as_str(), &parts[0].1, parts[0].2.as_slice()),
                    (parts[1].0.as_str(), &parts[1].1, parts[1].2.as_slice()),
                ],
                task,
                cv_options(l),
            )?;
            Ok(to_json(&report))
        } else if let Some(fractions) = &a.train_fractions {
            let report = eval::training_size_sweep(
                &grid,
                &data.matrix,
                &data.y,
                task,
                fractions,
                cv_options(l),
            )?;
            Ok(to_json(&report))
        } else {
            Ok(to_json(&eval::nested_cv(
                &grid,
                &data.matrix,
                &data.y,
                task,
                cv_options(l),
            )?))
        }
    })?;
    match &a.out {
        Some(p) => write_file(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.subjects == 0 || a.stacks == 0 {
        return Err(CliError::Usage(
            "--subjects and --stacks must be positive".into(),
        ));
    }
    let stacks = fetqc::synth::synthetic_dataset(a.subjects, a.stacks, a.seed);
    let written = fetqc::synth::write_dataset(&a.out, &stacks)?;
    write_file(&a.out.join("truth.json"), &to_json(&stacks))?;
    eprintln!(
        "wrote {} stacks to {}, masks to {}, ratings to {}",
        stacks.len(),
        written.bids_root.display(),
        written.mask_root.display(),
        written.ratings.display()
    );
    Ok(())
}
