//! End-to-end pipeline: feature selection, spread average, input transform
//! and model, fitted on a training span only.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::compute_metrics;
use super::report::{EvalReport, PredictionPoint, PredictionSeries, ReportMeta, ReportRow};
use crate::data::{split_labels, Dataset, Month, SplitSpec};
use crate::error::{Error, Result};
use crate::info::{rank_features, select_top_k, DEFAULT_TOP_K};
use crate::learners::{
    self, FittedRegressor, ForestParams, Hyperparams, Kernel, KernelRidgeParams, KnnParams, LearnerKind, MlpParams, OlsParams,
    RegressorSpec,
};
use crate::preprocess::{
    choose_window, trailing_mean, with_spread_average, InputConfig, InputTransform, TargetScaling, WINDOW_RANGE,
};
use crate::seed;
use crate::stacking::{fit_stacked, StackedModel, StackingMode, DEFAULT_BASE, DEFAULT_FOLDS, DEFAULT_META};

/// Version tag written into serialized pipelines.
pub const ARTIFACT_VERSION: u32 = 1;

/// A row of the evaluation grid: a single learner or the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GridLearner {
    Single(LearnerKind),
    Stacking,
}

impl GridLearner {
    pub fn id(self) -> &'static str {
        match self {
            GridLearner::Single(k) => k.id(),
            GridLearner::Stacking => "stacking",
        }
    }

    /// Default grid: the four single learners and the stack.
    pub fn default_grid() -> Vec<GridLearner> {
        vec![
            GridLearner::Single(LearnerKind::Ols),
            GridLearner::Single(LearnerKind::Knn),
            GridLearner::Single(LearnerKind::KernelRidge),
            GridLearner::Single(LearnerKind::RandomForest),
            GridLearner::Stacking,
        ]
    }
}

impl fmt::Display for GridLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for GridLearner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "stacking" {
            Ok(GridLearner::Stacking)
        } else {
            s.parse().map(GridLearner::Single)
        }
    }
}

impl TryFrom<String> for GridLearner {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GridLearner> for String {
    fn from(g: GridLearner) -> String {
        g.id().to_string()
    }
}

/// Hyperparameters for every learner kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    pub ols: OlsParams,
    pub knn: KnnParams,
    pub kernel_ridge: KernelRidgeParams,
    pub random_forest: ForestParams,
    pub mlp: MlpParams,
}

impl LearnerParams {
    pub fn get(&self, kind: LearnerKind) -> Hyperparams {
        match kind {
            LearnerKind::Ols => Hyperparams::Ols(self.ols.clone()),
            LearnerKind::Knn => Hyperparams::Knn(self.knn.clone()),
            LearnerKind::KernelRidge => Hyperparams::KernelRidge(self.kernel_ridge.clone()),
            LearnerKind::RandomForest => Hyperparams::RandomForest(self.random_forest.clone()),
            LearnerKind::Mlp => Hyperparams::Mlp(self.mlp.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackingConfig {
    pub mode: StackingMode,
    pub folds: usize,
    pub base: Vec<LearnerKind>,
    pub meta: LearnerKind,
    /// Meta-learner hyperparameters; when absent the meta uses
    /// [`StackingConfig::default_meta_params`] for kernel ridge and the
    /// per-learner settings otherwise.
    pub meta_params: Option<Hyperparams>,
}

impl Default for StackingConfig {
    fn default() -> Self {
        StackingConfig {
            mode: StackingMode::InSample,
            folds: DEFAULT_FOLDS,
            base: DEFAULT_BASE.to_vec(),
            meta: DEFAULT_META,
            meta_params: None,
        }
    }
}

impl StackingConfig {
    /// Linear-kernel ridge with unit penalty on z-scored base predictions.
    pub fn default_meta_params() -> KernelRidgeParams {
        KernelRidgeParams { kernel: Kernel::Linear, lambda: 1.0, gamma: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Number of features kept when selection is on.
    pub top_k: usize,
    pub train_fraction: f64,
    /// Fixed spread-average window; `None` searches 1..=12 months.
    pub window: Option<usize>,
    /// Learner used to score candidate windows.
    pub window_learner: LearnerKind,
    pub inputs: InputConfig,
    pub learners: LearnerParams,
    pub stacking: StackingConfig,
    /// Rows of the evaluation grid.
    pub grid: Vec<GridLearner>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            top_k: DEFAULT_TOP_K,
            train_fraction: SplitSpec::default().train_fraction,
            window: None,
            window_learner: LearnerKind::KernelRidge,
            inputs: InputConfig::default(),
            learners: LearnerParams::default(),
            stacking: StackingConfig::default(),
            grid: GridLearner::default_grid(),
        }
    }
}

impl PipelineConfig {
    pub fn split(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.train_fraction)
    }

    pub fn spec_for(&self, kind: LearnerKind) -> RegressorSpec {
        RegressorSpec::new(self.learners.get(kind), seed::derive(self.seed, kind.id()))
    }

    pub fn meta_spec(&self) -> RegressorSpec {
        let params = match (&self.stacking.meta_params, self.stacking.meta) {
            (Some(p), _) => p.clone(),
            (None, LearnerKind::KernelRidge) => Hyperparams::KernelRidge(StackingConfig::default_meta_params()),
            (None, kind) => self.learners.get(kind),
        };
        RegressorSpec::new(params, seed::derive(self.seed, "meta"))
    }

    pub fn validate(&self) -> Result<()> {
        self.split()?;
        if self.top_k == 0 {
            return Err(Error::invalid("top_k must be at least 1"));
        }
        if self.window == Some(0) {
            return Err(Error::invalid("window must be at least 1"));
        }
        if self.stacking.base.is_empty() {
            return Err(Error::invalid("stacking.base must list at least one learner"));
        }
        if self.stacking.mode == StackingMode::KFold && self.stacking.folds < 2 {
            return Err(Error::invalid("stacking.folds must be at least 2"));
        }
        if let Some(p) = &self.stacking.meta_params {
            if p.kind() != self.stacking.meta {
                return Err(Error::invalid("stacking.meta_params kind differs from stacking.meta"));
            }
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("the evaluation grid is empty"));
        }
        for kind in LearnerKind::ALL {
            self.learners.get(kind).validate()?;
        }
        self.meta_spec().params.validate()
    }
}

/// Feature choice, window and fitted input transform for one training span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Prepared {
    features: Vec<String>,
    window: usize,
    transform: InputTransform,
}

impl Prepared {
    fn fit(train: &Dataset, config: &PipelineConfig, selection: bool) -> Result<(Prepared, DMatrix<f64>, Dataset)> {
        let features = if selection {
            let ranking = rank_features(train)?;
            select_top_k(&ranking, config.top_k.min(ranking.len()))?
        } else {
            train.feature_names().to_vec()
        };
        let sub = train.select_features(&features)?;
        let window = match config.window {
            Some(w) => w,
            None => {
                let spec = RegressorSpec::new(config.learners.get(config.window_learner), seed::derive(config.seed, "window"));
                let candidates: Vec<usize> = WINDOW_RANGE.collect();
                choose_window(&sub, &candidates, &spec, &config.inputs)?.window_months
            }
        };
        let aug = with_spread_average(&sub, window)?;
        let transform = InputTransform::fit(&config.inputs, &aug.features())?;
        let x = transform.apply(&aug.features())?;
        Ok((Prepared { features, window, transform }, x, aug))
    }

    /// Transformed design rows for every month of `ds` that has a full
    /// spread history, with those months' dataset rows.
    fn design(&self, ds: &Dataset) -> Result<(DMatrix<f64>, Dataset)> {
        let aug = with_spread_average(&ds.select_features(&self.features)?, self.window)?;
        Ok((self.transform.apply(&aug.features())?, aug))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", content = "model", rename_all = "snake_case")]
pub enum Estimator {
    Single(FittedRegressor),
    Stacked(StackedModel),
}

/// An estimator fitted on the z-scored training target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub target: TargetScaling,
    pub estimator: Estimator,
}

impl TrainedModel {
    fn fit(learner: GridLearner, config: &PipelineConfig, x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let target = TargetScaling::fit(y);
        let z = target.scale(y);
        let estimator = match learner {
            GridLearner::Single(kind) => Estimator::Single(learners::fit(&config.spec_for(kind), x, &z)?),
            GridLearner::Stacking => {
                let specs: Vec<RegressorSpec> = config.stacking.base.iter().map(|&k| config.spec_for(k)).collect();
                Estimator::Stacked(fit_stacked(
                    &specs,
                    &config.meta_spec(),
                    x,
                    &z,
                    config.stacking.mode,
                    config.stacking.folds,
                )?)
            }
        };
        Ok(TrainedModel { target, estimator })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let z = match &self.estimator {
            Estimator::Single(m) => m.predict(x)?,
            Estimator::Stacked(m) => m.predict(x)?,
        };
        Ok(self.target.unscale(z))
    }

    /// Predictions of each stacked base learner (one vector per base) on the
    /// target scale; a single learner yields one vector.
    pub fn component_predictions(&self, x: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
        match &self.estimator {
            Estimator::Single(m) => Ok(vec![self.target.unscale(m.predict(x)?)]),
            Estimator::Stacked(m) => m.base_models.iter().map(|b| Ok(self.target.unscale(b.predict(x)?))).collect(),
        }
    }
}

/// A fitted pipeline, serializable as the forecast artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub learner: GridLearner,
    pub selection: bool,
    pub target_name: String,
    /// Raw features used, in model order (the spread average comes last).
    pub features: Vec<String>,
    pub window: usize,
    pub transform: InputTransform,
    pub model: TrainedModel,
    /// Last month of the training data.
    pub trained_through: Month,
}

impl TrainedPipeline {
    pub fn fit(train: &Dataset, config: &PipelineConfig, learner: GridLearner, selection: bool) -> Result<Self> {
        config.validate()?;
        let (prep, x, aug) = Prepared::fit(train, config, selection)?;
        let model = TrainedModel::fit(learner, config, &x, aug.target())?;
        Ok(Self::assemble(prep, model, config, learner, selection, train))
    }

    fn assemble(
        prep: Prepared,
        model: TrainedModel,
        config: &PipelineConfig,
        learner: GridLearner,
        selection: bool,
        train: &Dataset,
    ) -> Self {
        TrainedPipeline {
            format_version: ARTIFACT_VERSION,
            config: config.clone(),
            learner,
            selection,
            target_name: train.target_name().to_string(),
            features: prep.features,
            window: prep.window,
            transform: prep.transform,
            model,
            trained_through: *train.dates().last().expect("dataset has rows"),
        }
    }

    fn prepared(&self) -> Prepared {
        Prepared { features: self.features.clone(), window: self.window, transform: self.transform.clone() }
    }

    /// Transformed model inputs for every month of `ds` after the first
    /// `window`, with those months' dataset rows (spread average included).
    pub fn design(&self, ds: &Dataset) -> Result<(DMatrix<f64>, Dataset)> {
        self.prepared().design(ds)
    }

    /// Predictions for every month of `ds` after the first `window`, with
    /// those months.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<(Vec<Month>, Vec<f64>)> {
        let (x, aug) = self.prepared().design(ds)?;
        Ok((aug.dates().to_vec(), self.model.predict(&x)?))
    }

    /// Prediction for raw feature rows given in `self.features` order with
    /// the spread average appended.
    pub fn predict_raw(&self, rows: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.model.predict(&self.transform.apply(rows)?)
    }

    /// Model inputs for the month after `ds` ends: its last feature row and
    /// the trailing average of its last `window` spreads.
    pub fn next_row(&self, ds: &Dataset, history: &[f64]) -> Result<DMatrix<f64>> {
        let sub = ds.select_features(&self.features)?;
        let last = sub.row(sub.n() - 1);
        let avg = trailing_mean(history, self.window)?;
        let mut row = last.to_vec();
        row.push(avg);
        Ok(DMatrix::from_row_slice(1, row.len(), &row))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: TrainedPipeline = serde_json::from_str(s)?;
        if p.format_version != ARTIFACT_VERSION {
            return Err(Error::invalid(format!(
                "model artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                p.format_version
            )));
        }
        Ok(p)
    }
}

/// Recursive forecast of the next `horizon` months after `ds` ends.
///
/// Non-spread features stay at their last observed values; each step's
/// prediction is appended to the spread history that feeds the trailing
/// average of the next step.
pub fn forecast_next(ds: &Dataset, model: &TrainedPipeline, horizon: usize) -> Result<Vec<(Month, f64)>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut history = ds.target().to_vec();
    let mut month = *ds.dates().last().expect("dataset has rows");
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let row = model.next_row(ds, &history)?;
        let pred = model.predict_raw(&row)?[0];
        month = month.succ();
        out.push((month, pred));
        history.push(pred);
    }
    Ok(out)
}

/// Backtest over `config.grid` x {all features, top-k selected}.
pub fn run_backtest(ds: &Dataset, config: &PipelineConfig) -> Result<EvalReport> {
    Ok(run_backtest_with_series(ds, config)?.0)
}

/// [`run_backtest`] plus the per-month prediction series of every grid row
/// that fitted.
pub fn run_backtest_with_series(ds: &Dataset, config: &PipelineConfig) -> Result<(EvalReport, Vec<PredictionSeries>)> {
    config.validate()?;
    let split = config.split()?;
    let boundary = split.boundary(ds.n())?;
    let train = ds.slice_rows(0..boundary)?;
    let n_test = ds.n() - boundary;

    let mut rows = Vec::new();
    let mut series = Vec::new();
    let mut windows = [None, None];
    let settings = [false, true];

    let prepared: Vec<Result<(Prepared, DMatrix<f64>, Dataset)>> =
        settings.iter().map(|&sel| Prepared::fit(&train, config, sel)).collect();
    for (slot, p) in prepared.iter().enumerate() {
        if let Ok((prep, _, _)) = p {
            windows[slot] = Some(prep.window);
        }
    }

    for &learner in &config.grid {
        let cells: Vec<(ReportRow, Option<PredictionSeries>)> = settings
            .par_iter()
            .zip(prepared.par_iter())
            .map(|(&selection, prep)| {
                let outcome = prep.as_ref().map_err(|e| e.to_string()).and_then(|(prep, x_train, aug_train)| {
                    evaluate_cell(ds, boundary, prep, x_train, aug_train, learner, config).map_err(|e| e.to_string())
                });
                match outcome {
                    Ok((train_m, test_m, s)) => (
                        ReportRow { learner: learner.id().into(), selection, train: Some(train_m), test: Some(test_m), error: None },
                        Some(PredictionSeries { learner: learner.id().into(), selection, points: s }),
                    ),
                    Err(e) => {
                        log::warn!("{learner} (selection {selection}) failed: {e}");
                        (ReportRow { learner: learner.id().into(), selection, train: None, test: None, error: Some(e) }, None)
                    }
                }
            })
            .collect();
        for (row, s) in cells {
            rows.push(row);
            series.extend(s);
        }
    }

    let effective_k = config.top_k.min(ds.d());
    let meta = ReportMeta {
        n_rows: ds.n(),
        train_rows: boundary,
        test_rows: n_test,
        train_fraction: config.train_fraction,
        top_k: config.top_k,
        effective_k,
        seed: config.seed,
        stacking_mode: config.stacking.mode.to_string(),
        folds: config.stacking.folds,
        whiten: config.inputs.whiten,
        window_all_features: windows[0],
        window_selected: windows[1],
    };
    Ok((EvalReport { meta, rows }, series))
}

type CellResult = (super::Metrics, super::Metrics, Vec<PredictionPoint>);

fn evaluate_cell(
    ds: &Dataset,
    boundary: usize,
    prep: &Prepared,
    x_train: &DMatrix<f64>,
    aug_train: &Dataset,
    learner: GridLearner,
    config: &PipelineConfig,
) -> Result<CellResult> {
    let model = TrainedModel::fit(learner, config, x_train, aug_train.target())?;
    let train_pred = model.predict(x_train)?;
    let train_m = compute_metrics(aug_train.target(), &train_pred)?;

    // Test rows get their spread average from the full history, which only
    // reaches back into realised spreads.
    let (x_all, aug_all) = prep.design(ds)?;
    let first_test = boundary - prep.window;
    let x_test = x_all.rows(first_test, x_all.nrows() - first_test).into_owned();
    let y_test = &aug_all.target()[first_test..];
    let test_pred = model.predict(&x_test)?;
    let test_m = compute_metrics(y_test, &test_pred)?;

    let labels = split_labels(aug_all.n(), first_test);
    let preds = train_pred.iter().chain(&test_pred);
    let points = aug_all
        .dates()
        .iter()
        .zip(aug_all.target())
        .zip(preds)
        .zip(labels)
        .map(|(((d, a), p), l)| PredictionPoint { date: *d, actual: *a, predicted: *p, split: l.to_string() })
        .collect();
    Ok((train_m, test_m, points))
}
