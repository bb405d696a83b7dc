use fetqc::models::boosting::{BoostingParams, GradientBoosting};
use fetqc::models::bundle::{ModelBundle, FORMAT_VERSION};
use fetqc::models::forest::Forest;
use fetqc::models::tree::Splitter;
use fetqc::models::tree::{Columns, Criterion, Tree, TreeParams};
use fetqc::models::{
    fit, forest_params, Family, FittedModel, Hyperparameters, ModelSpec, Predictor, Task,
};
use fetqc::pipeline::{FeatureMatrix, FittedPipeline, PipelineConfig};
use fetqc::Error;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("f{j}")).collect()
}

fn uniform(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, p), || rng.gen_range(-1.0..1.0))
}

fn spec(task: Task, family: Family, params: Hyperparameters) -> ModelSpec {
    ModelSpec {
        task,
        family,
        params,
    }
}

/// Labels from a noisy linear rule on the first two features.
fn classification_data(n: usize, p: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let x = uniform(n, p, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let y = x
        .rows()
        .into_iter()
        .map(|r| f64::from(u8::from(r[0] - 0.5 * r[1] + rng.gen_range(-0.3..0.3) > 0.0)))
        .collect();
    (x, y)
}

fn regression_data(n: usize, p: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let x = uniform(n, p, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let y = x
        .rows()
        .into_iter()
        .map(|r| (3.0 * r[0]).sin() + r[1] * r[1] + rng.gen_range(-0.1..0.1))
        .collect();
    (x, y)
}

#[test]
fn linear_regression_recovers_exact_plane() {
    let x = uniform(40, 2, 1);
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| 2.0 * r[0] - 3.0 * r[1] + 1.0)
        .collect();
    let m = fit(
        &ModelSpec::new(Task::Regression, Family::Linear),
        x.view(),
        &names(2),
        &y,
    )
    .unwrap();
    let Predictor::Linear(lm) = &m.predictor else {
        panic!("not linear")
    };
    assert!(
        (lm.coef[0] - 2.0).abs() < 1e-8 && (lm.coef[1] + 3.0).abs() < 1e-8,
        "{:?}",
        lm.coef
    );
    assert!((lm.intercept - 1.0).abs() < 1e-8);
    assert!(!m.report.rank_deficient);
}

#[test]
fn linear_regression_flags_rank_deficiency() {
    let mut x = uniform(30, 3, 2);
    for i in 0..30 {
        x[[i, 2]] = 2.0 * x[[i, 0]];
    }
    let y: Vec<f64> = x.rows().into_iter().map(|r| r[0] + r[1]).collect();
    let m = fit(
        &ModelSpec::new(Task::Regression, Family::Linear),
        x.view(),
        &names(3),
        &y,
    )
    .unwrap();
    assert!(m.report.rank_deficient);
    let pred = m.predict(x.view()).unwrap();
    assert!(pred.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-8));
}

#[test]
fn forest_separates_xor() {
    let x = uniform(400, 2, 3);
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| f64::from(u8::from((r[0] > 0.0) != (r[1] > 0.0))))
        .collect();
    let hp = Hyperparameters {
        n_trees: Some(50),
        max_depth: Some(5),
        ..Default::default()
    };
    let m = fit(
        &spec(Task::Classification, Family::RandomForest, hp),
        x.view(),
        &names(2),
        &y,
    )
    .unwrap();
    let Predictor::Forest(f) = &m.predictor else {
        panic!("not a forest")
    };
    assert!(f.trees.iter().all(|t| t.depth() <= 5));
    let labels = m.predict_labels(x.view()).unwrap();
    let correct = labels
        .iter()
        .zip(&y)
        .filter(|(l, t)| f64::from(**l) == **t)
        .count();
    assert!(
        correct as f64 / 400.0 >= 0.95,
        "accuracy {}",
        correct as f64 / 400.0
    );
}

#[test]
fn logistic_classifies_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..60 {
        let label = i % 2;
        let centre = if label == 1 { 2.0 } else { -2.0 };
        rows.push(centre + rng.gen_range(-1.0..1.0));
        rows.push(rng.gen_range(-1.0..1.0));
        y.push(f64::from(label));
    }
    let x = Array2::from_shape_vec((60, 2), rows).unwrap();
    let hp = Hyperparameters {
        lambda: Some(1.0),
        ..Default::default()
    };
    let m = fit(
        &spec(Task::Classification, Family::Logistic, hp),
        x.view(),
        &names(2),
        &y,
    )
    .unwrap();
    assert!(m.report.converged);
    // decision side from the raw linear score, independent of the link
    let Predictor::Logistic(lm) = &m.predictor else {
        panic!("not logistic")
    };
    for (r, t) in x.rows().into_iter().zip(&y) {
        let score = lm.linear.score(r.as_slice().unwrap());
        assert_eq!(score > 0.0, *t == 1.0);
    }
    assert_eq!(
        m.predict_labels(x.view())
            .unwrap()
            .iter()
            .map(|l| f64::from(*l))
            .collect::<Vec<_>>(),
        y
    );
}

#[test]
fn logistic_probability_is_monotone_in_score() {
    let (x, y) = classification_data(80, 3, 5);
    let m = fit(
        &ModelSpec::new(Task::Classification, Family::Logistic),
        x.view(),
        &names(3),
        &y,
    )
    .unwrap();
    let Predictor::Logistic(lm) = &m.predictor else {
        panic!("not logistic")
    };
    let probe = uniform(300, 3, 6);
    let mut pairs: Vec<(f64, f64)> = probe
        .rows()
        .into_iter()
        .map(|r| {
            let r = r.as_slice().unwrap();
            (lm.linear.score(r), lm.predict_row(r))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(pairs.windows(2).all(|w| w[1].1 >= w[0].1));
}

#[test]
fn forest_prediction_is_mean_of_trees() {
    let (x, y) = regression_data(120, 4, 7);
    let hp = Hyperparameters {
        n_trees: Some(25),
        ..Default::default()
    };
    let m = fit(
        &spec(Task::Regression, Family::RandomForest, hp),
        x.view(),
        &names(4),
        &y,
    )
    .unwrap();
    let Predictor::Forest(f) = &m.predictor else {
        panic!("not a forest")
    };
    let probe = uniform(30, 4, 8);
    let pred = m.predict(probe.view()).unwrap();
    for (r, p) in probe.rows().into_iter().zip(pred) {
        let r = r.as_slice().unwrap();
        let mean = f.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / f.trees.len() as f64;
        assert!((mean - p).abs() < 1e-12);
    }
}

#[test]
fn boosting_without_rounds_predicts_base_score() {
    for (task, (x, y)) in [
        (Task::Regression, regression_data(50, 3, 9)),
        (Task::Classification, classification_data(50, 3, 9)),
    ] {
        let cols = fetqc::models::tree::to_columns(x.view());
        let params = BoostingParams {
            n_rounds: 0,
            max_depth: 3,
            learning_rate: 0.1,
            subsample: 1.0,
        };
        let (gb, losses) = GradientBoosting::fit(&Columns::new(&cols), &y, task, params, 0);
        assert_eq!(losses.len(), 1);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for r in x.rows() {
            let p = gb.predict_row(r.as_slice().unwrap());
            // mean of y, or the prior probability behind the log-odds start
            assert!((p - mean).abs() < 1e-12, "{task:?}: {p} vs {mean}");
        }
        if task == Task::Classification {
            assert!((gb.init - (mean / (1.0 - mean)).ln()).abs() < 1e-12);
        }
    }
}

#[test]
fn boosting_training_loss_never_increases() {
    for (task, (x, y)) in [
        (Task::Regression, regression_data(150, 4, 10)),
        (Task::Classification, classification_data(150, 4, 10)),
    ] {
        let m = fit(
            &ModelSpec::new(task, Family::GradientBoosting),
            x.view(),
            &names(4),
            &y,
        )
        .unwrap();
        let l = &m.report.train_loss;
        assert_eq!(l.len(), 101);
        assert!(l.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{task:?}");
        assert!(l[100] < l[0]);
    }
}

#[test]
fn stump_importance_is_one() {
    let x = uniform(100, 3, 11);
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| f64::from(u8::from(r[2] > 0.1)))
        .collect();
    let cols = fetqc::models::tree::to_columns(x.view());
    let mut params = TreeParams::new(Criterion::Gini);
    params.max_depth = Some(1);
    let t = Tree::fit(
        &Columns::new(&cols),
        &y,
        &vec![1.0; 100],
        params,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    assert_eq!(t.normalized_importance(), vec![0.0, 0.0, 1.0]);
}

#[test]
fn noise_forest_importances_stay_near_uniform() {
    let p = 5;
    let mut total = vec![0.0; p];
    for seed in 0..200u64 {
        let x = uniform(60, p, 1000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let y: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
        let cols = fetqc::models::tree::to_columns(x.view());
        let hp = Hyperparameters {
            n_trees: Some(10),
            ..Default::default()
        };
        let params = forest_params(Task::Regression, &hp, p, Splitter::Best, true);
        let f = Forest::fit(&Columns::new(&cols), &y, params, seed).forest;
        for (t, v) in total.iter_mut().zip(f.importance()) {
            *t += v / 200.0;
        }
    }
    let uniform_share = 1.0 / p as f64;
    assert!(total.iter().all(|v| *v <= 3.0 * uniform_share), "{total:?}");
}

fn all_families() -> Vec<(Task, Family)> {
    let mut out = Vec::new();
    for task in [Task::Regression, Task::Classification] {
        for f in Family::for_task(task) {
            out.push((task, f));
        }
    }
    out
}

fn fit_small(task: Task, family: Family, seed: u64) -> (FittedModel, Array2<f64>) {
    let (x, y) = match task {
        Task::Regression => regression_data(80, 4, seed),
        Task::Classification => classification_data(80, 4, seed),
    };
    let hp = Hyperparameters {
        n_trees: Some(20),
        seed,
        ..Default::default()
    };
    (
        fit(&spec(task, family, hp), x.view(), &names(4), &y).unwrap(),
        x,
    )
}

#[test]
fn importances_are_normalised() {
    for (task, family) in all_families() {
        let (m, _) = fit_small(task, family, 12);
        let imp = m.feature_importance().unwrap();
        let s: f64 = imp.values().sum();
        assert!((s - 1.0).abs() < 1e-9, "{task:?} {family:?}: {s}");
        assert!(imp.values().all(|v| *v >= 0.0));
    }
    let m = fit(
        &ModelSpec::new(Task::Regression, Family::Constant),
        uniform(5, 2, 0).view(),
        &names(2),
        &[1.0; 5],
    )
    .unwrap();
    assert!(matches!(m.feature_importance(), Err(Error::Unsupported(_))));
}

#[test]
fn classification_rejects_single_class_and_adaboost_regression() {
    let x = uniform(10, 2, 0);
    for family in [
        Family::Logistic,
        Family::RandomForest,
        Family::GradientBoosting,
        Family::AdaBoost,
    ] {
        let r = fit(
            &ModelSpec::new(Task::Classification, family),
            x.view(),
            &names(2),
            &[1.0; 10],
        );
        assert!(matches!(r, Err(Error::DegenerateLabels(_))), "{family:?}");
    }
    let r = fit(
        &ModelSpec::new(Task::Regression, Family::AdaBoost),
        x.view(),
        &names(2),
        &[1.0; 10],
    );
    assert!(r.is_err());
}

#[test]
fn width_mismatch_is_schema_error() {
    let (m, _) = fit_small(Task::Regression, Family::Linear, 0);
    assert!(matches!(
        m.predict(uniform(3, 5, 0).view()),
        Err(Error::Schema(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_outputs_are_probabilities(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..20)) {
        thread_local! {
            static MODELS: Vec<FittedModel> = Family::for_task(Task::Classification)
                .into_iter()
                .map(|f| fit_small(Task::Classification, f, 13).0)
                .collect();
        }
        let x = Array2::from_shape_vec((rows.len(), 4), rows.concat()).unwrap();
        MODELS.with(|models| {
            for m in models {
                for p in m.predict(x.view()).unwrap() {
                    assert!((0.0..=1.0).contains(&p), "{:?}: {}", m.spec.family, p);
                }
            }
        });
    }
}

#[test]
fn forest_oob_error_does_not_grow_with_trees() {
    let (x, y) = regression_data(200, 5, 14);
    let cols = fetqc::models::tree::to_columns(x.view());
    let errors: Vec<f64> = [10usize, 50, 200]
        .iter()
        .map(|&n| {
            let hp = Hyperparameters {
                n_trees: Some(n),
                ..Default::default()
            };
            let params = forest_params(Task::Regression, &hp, 5, Splitter::Best, true);
            let fitted = Forest::fit(&Columns::new(&cols), &y, params, 3);
            let pairs: Vec<(f64, f64)> = fitted
                .oob_prediction
                .iter()
                .zip(&y)
                .filter_map(|(p, t)| p.map(|p| (p, *t)))
                .collect();
            pairs.iter().map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pairs.len() as f64
        })
        .collect();
    assert!(
        errors[1] <= errors[0] * 1.01 && errors[2] <= errors[1] * 1.01,
        "{errors:?}"
    );
}

#[test]
fn fits_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            all_families()
                .into_iter()
                .map(|(task, family)| {
                    let (m, x) = fit_small(task, family, 15);
                    m.predict(x.view())
                        .unwrap()
                        .iter()
                        .map(|v| v.to_bits())
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn bundle_roundtrip_and_corruption() {
    let (x, y) = regression_data(60, 4, 16);
    let keys: Vec<(String, String)> = (0..60)
        .map(|i| (format!("sub-{:02}", i / 3), format!("run-{}", i % 3)))
        .collect();
    let m = FeatureMatrix::new(names(4), keys, x.clone()).unwrap();
    let pipeline =
        FittedPipeline::fit(&PipelineConfig::default(), &m, &y, Task::Regression).unwrap();
    let z = pipeline.transform(&m).unwrap();
    let hp = Hyperparameters {
        n_trees: Some(15),
        ..Default::default()
    };
    let model = fit(
        &spec(Task::Regression, Family::RandomForest, hp),
        z.data.view(),
        &z.columns,
        &y,
    )
    .unwrap();
    let bundle = ModelBundle::new(pipeline, model, "catalog", 1).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bundle");
    bundle.save(&path).unwrap();
    let back = ModelBundle::load(&path).unwrap();
    assert_eq!(back, bundle);
    let probe = FeatureMatrix::new(names(4), m.row_keys.clone(), uniform(60, 4, 17)).unwrap();
    let predict = |b: &ModelBundle| {
        b.model
            .predict(b.pipeline.transform(&probe).unwrap().data.view())
            .unwrap()
    };
    assert_eq!(predict(&back), predict(&bundle));

    let bytes = bundle.to_bytes().unwrap();
    for cut in [4, 16, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(
                ModelBundle::from_bytes(&bytes[..cut]),
                Err(Error::Parse { .. })
            ),
            "cut at {cut}"
        );
    }
    let mut bumped = bytes.clone();
    bumped[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        ModelBundle::from_bytes(&bumped),
        Err(Error::Version { .. })
    ));
}
