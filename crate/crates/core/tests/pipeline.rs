use nalgebra::DMatrix;
use spreadcast::eval::PredictionSeries;
use spreadcast::learners::{Hyperparams, LearnerKind, MlpParams};
use spreadcast::preprocess::SPREAD_AVERAGE_FEATURE;
use spreadcast::*;

fn synthetic(seed: u64, n: usize, d: usize) -> Dataset {
    generate_synthetic(&SyntheticConfig { seed, n, d, ..Default::default() }).unwrap()
}

fn config(seed: u64) -> PipelineConfig {
    PipelineConfig { seed, ..Default::default() }
}

#[test]
fn paper_scale_grid_has_ten_rows_and_36_test_months() {
    let ds = synthetic(1, 120, 30);
    let report = run_backtest(&ds, &config(1)).unwrap();
    assert_eq!(report.rows.len(), 10);
    assert_eq!((report.meta.train_rows, report.meta.test_rows), (84, 36));
    let expected = ["ols", "knn", "kernel_ridge", "random_forest", "stacking"];
    for (i, row) in report.rows.iter().enumerate() {
        assert_eq!(row.learner, expected[i / 2]);
        assert_eq!(row.selection, i % 2 == 1);
        assert!(row.error.is_none(), "{:?}", row.error);
    }
    let (_, series) = run_backtest_with_series(&ds, &config(1)).unwrap();
    assert_eq!(series.len(), 10);
    for s in &series {
        assert_eq!(s.points.iter().filter(|p| p.split == "test").count(), 36);
        assert_eq!(s.points.last().unwrap().date, *ds.dates().last().unwrap());
    }
}

#[test]
fn top_k_is_clamped_to_feature_count() {
    let ds = synthetic(2, 120, 8);
    let report = run_backtest(&ds, &config(2)).unwrap();
    assert_eq!(report.meta.effective_k, 8);
    assert!(report.rows.iter().all(|r| r.error.is_none()));
}

#[test]
fn same_seed_gives_identical_reports() {
    let ds = synthetic(3, 120, 20);
    let a = run_backtest(&ds, &config(9)).unwrap();
    let b = run_backtest(&ds, &config(9)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn report_round_trips_through_json() {
    let ds = synthetic(4, 120, 12);
    let report = run_backtest(&ds, &config(4)).unwrap();
    assert_eq!(EvalReport::from_json(&report.to_json().unwrap()).unwrap(), report);
}

#[test]
fn corrupting_test_rows_leaves_training_untouched() {
    let ds = synthetic(5, 120, 15);
    let boundary = SplitSpec::default().boundary(ds.n()).unwrap();
    let mut x = ds.features();
    let mut y = ds.target().to_vec();
    for i in boundary..ds.n() {
        for j in 0..ds.d() {
            x[(i, j)] = 1e6 * (i + j) as f64;
        }
        y[i] = -5e3 - i as f64;
    }
    let corrupted =
        Dataset::new(ds.dates().to_vec(), ds.feature_names().to_vec(), x, y, ds.target_name()).unwrap();
    let cfg = PipelineConfig { stacking: StackingConfig { mode: StackingMode::KFold, ..Default::default() }, ..config(5) };
    let (clean, clean_series) = run_backtest_with_series(&ds, &cfg).unwrap();
    let (dirty, dirty_series) = run_backtest_with_series(&corrupted, &cfg).unwrap();
    assert_eq!(clean.meta.window_all_features, dirty.meta.window_all_features);
    assert_eq!(clean.meta.window_selected, dirty.meta.window_selected);
    for (c, d) in clean.rows.iter().zip(&dirty.rows) {
        assert_eq!(c.train, d.train, "{} selection {} {:?}", c.learner, c.selection, d.error);
        assert_ne!(c.test, d.test);
    }
    for (c, d) in clean_series.iter().zip(&dirty_series) {
        let train = |s: &PredictionSeries| {
            s.points.iter().filter(|p| p.split == "train").map(|p| p.predicted).collect::<Vec<_>>()
        };
        assert_eq!(train(c), train(d));
    }

    let train = ds.slice_rows(0..boundary).unwrap();
    let dirty_train = corrupted.slice_rows(0..boundary).unwrap();
    let a = TrainedPipeline::fit(&train, &cfg, GridLearner::Stacking, true).unwrap();
    let b = TrainedPipeline::fit(&dirty_train, &cfg, GridLearner::Stacking, true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn failing_learner_is_recorded_and_grid_continues() {
    let ds = synthetic(6, 120, 10);
    let mut cfg = config(6);
    cfg.learners.mlp = MlpParams { learning_rate: 1e6, ..Default::default() };
    let report = run_backtest(&ds, &cfg).unwrap();
    for row in &report.rows {
        if row.learner == "stacking" {
            let msg = row.error.as_deref().expect("stack with a divergent mlp must fail");
            assert!(msg.contains("mlp"), "{msg}");
            assert!(row.test.is_none());
        } else {
            assert!(row.test.is_some(), "{}", row.learner);
        }
    }
    assert!(report.to_text().contains("failed"));
}

#[test]
fn pure_noise_target_has_no_test_skill() {
    let ds = generate_synthetic(&SyntheticConfig { seed: 7, n: 500, d: 20, noise: 1.0, recipe: Recipe::NoiseOnly })
        .unwrap();
    let report = run_backtest(&ds, &config(7)).unwrap();
    for row in &report.rows {
        let r2 = row.test.unwrap().r2;
        assert!(r2 <= 0.1, "{} selection {}: r2 {r2}", row.learner, row.selection);
    }
}

#[test]
fn noiseless_linear_recipe_is_recovered_by_ols() {
    let ds = generate_synthetic(&SyntheticConfig { seed: 8, n: 200, d: 12, noise: 0.0, recipe: Recipe::Linear })
        .unwrap();
    let cfg = PipelineConfig { grid: vec![GridLearner::Single(LearnerKind::Ols)], ..config(8) };
    let report = run_backtest(&ds, &cfg).unwrap();
    for row in &report.rows {
        assert!(row.test.unwrap().r2 >= 0.999, "{:?}", row.test);
    }
}

#[test]
fn forecast_dates_follow_the_data() {
    let ds = synthetic(9, 120, 10);
    let p = TrainedPipeline::fit(&ds, &config(9), GridLearner::Stacking, true).unwrap();
    let f = forecast_next(&ds, &p, 3).unwrap();
    let last = *ds.dates().last().unwrap();
    let months: Vec<Month> = f.iter().map(|(m, _)| *m).collect();
    assert_eq!(months, vec![last.plus(1), last.plus(2), last.plus(3)]);
    assert!(f.iter().all(|(_, v)| v.is_finite()));
    assert!(forecast_next(&ds, &p, 0).is_err());
}

#[test]
fn one_step_forecast_equals_prediction_on_assembled_row() {
    let ds = synthetic(10, 120, 10);
    let p = TrainedPipeline::fit(&ds, &config(10), GridLearner::Stacking, true).unwrap();
    let mut row: Vec<f64> = p
        .features
        .iter()
        .map(|name| {
            let j = ds.feature_names().iter().position(|n| n == name).unwrap();
            ds.row(ds.n() - 1)[j]
        })
        .collect();
    let tail = &ds.target()[ds.n() - p.window..];
    row.push(tail.iter().sum::<f64>() / p.window as f64);
    let x = p.transform.apply(&DMatrix::from_row_slice(1, row.len(), &row)).unwrap();
    let expected = p.model.predict(&x).unwrap()[0];
    assert_eq!(forecast_next(&ds, &p, 1).unwrap()[0].1, expected);
}

#[test]
fn multi_step_forecast_feeds_back_its_own_predictions() {
    let ds = synthetic(11, 120, 10);
    let cfg = PipelineConfig { window: Some(2), ..config(11) };
    let p = TrainedPipeline::fit(&ds, &cfg, GridLearner::Single(LearnerKind::Ols), false).unwrap();
    let f = forecast_next(&ds, &p, 2).unwrap();
    let mut history = ds.target().to_vec();
    history.push(f[0].1);
    let row = p.next_row(&ds, &history).unwrap();
    assert_eq!(row[(0, row.ncols() - 1)], (history[history.len() - 2] + history[history.len() - 1]) / 2.0);
    assert_eq!(p.predict_raw(&row).unwrap()[0], f[1].1);
}

#[test]
fn persistence_process_forecasts_last_spread() {
    let n = 120;
    let mut rng = spreadcast::seed::rng(12);
    let mut level = 150.0;
    let mut spread = Vec::with_capacity(n);
    let x = DMatrix::from_fn(n, 4, |i, j| ((i * 7 + j * 13) as f64 * 0.37).sin());
    for _ in 0..n {
        spread.push(level);
        level += rand::Rng::random_range(&mut rng, -3.0..3.0);
    }
    let start: Month = "2005-01".parse().unwrap();
    let ds = Dataset::new(
        (0..n as i64).map(|k| start.plus(k)).collect(),
        (0..4).map(|j| format!("f{j}")).collect(),
        x,
        spread,
        "spread",
    )
    .unwrap();
    let cfg = PipelineConfig { window: Some(1), grid: vec![GridLearner::Stacking], ..config(12) };
    let p = TrainedPipeline::fit(&ds, &cfg, GridLearner::Stacking, true).unwrap();
    let (_, fitted) = p.predict_dataset(&ds).unwrap();
    let tolerance = fitted.iter().zip(&ds.target()[1..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let last = *ds.target().last().unwrap();
    let forecast = forecast_next(&ds, &p, 1).unwrap()[0].1;
    assert!((forecast - last).abs() <= tolerance, "forecast {forecast}, last {last}, tolerance {tolerance}");
}

#[test]
fn artifact_round_trip_preserves_predictions() {
    let ds = synthetic(13, 120, 10);
    for kind in LearnerKind::ALL {
        let learner = GridLearner::Single(kind);
        let p = TrainedPipeline::fit(&ds, &config(13), learner, false).unwrap();
        let back = TrainedPipeline::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p, "{kind}");
    }
    let p = TrainedPipeline::fit(&ds, &config(13), GridLearner::Stacking, true).unwrap();
    assert!(p.features.len() <= 10);
    let back = TrainedPipeline::from_json(&p.to_json().unwrap()).unwrap();
    assert_eq!(back, p);
    assert_eq!(forecast_next(&ds, &back, 2).unwrap(), forecast_next(&ds, &p, 2).unwrap());

    let mut value: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
    value["format_version"] = 99.into();
    assert!(TrainedPipeline::from_json(&value.to_string()).is_err());
}

#[test]
fn spread_average_is_always_a_model_input() {
    let ds = synthetic(14, 120, 10);
    let p = TrainedPipeline::fit(&ds, &config(14), GridLearner::Single(LearnerKind::Knn), true).unwrap();
    let (x, aug) = p.design(&ds).unwrap();
    assert_eq!(aug.feature_names().last().unwrap(), SPREAD_AVERAGE_FEATURE);
    assert_eq!(x.nrows(), ds.n() - p.window);
}

#[test]
fn config_rejects_bad_values() {
    let ds = synthetic(15, 120, 10);
    let bad = [
        PipelineConfig { train_fraction: 1.0, ..Default::default() },
        PipelineConfig { top_k: 0, ..Default::default() },
        PipelineConfig { window: Some(0), ..Default::default() },
        PipelineConfig { grid: vec![], ..Default::default() },
    ];
    for cfg in bad {
        assert!(run_backtest(&ds, &cfg).is_err());
    }
    let mut cfg = PipelineConfig::default();
    cfg.stacking.meta_params = Some(Hyperparams::Mlp(MlpParams::default()));
    assert!(cfg.validate().is_err());
}
