//! Two-layer stacking: base regressors whose predictions form the inputs of
//! a meta regressor.
//!
//! In [`StackingMode::InSample`] every base learner is fitted on all rows and
//! the meta learner is trained on their predictions for those same rows.
//! [`StackingMode::KFold`] instead builds the meta inputs from out-of-fold
//! predictions over contiguous chronological folds, then refits the base
//! learners on all rows for use at prediction time.
//!
//! Meta inputs are z-scored per column and the meta target is z-scored too,
//! with statistics from the meta training set; predictions are mapped back to
//! target units.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{self, FittedRegressor, LearnerKind, RegressorSpec};

pub const DEFAULT_FOLDS: usize = 5;

/// Default first layer.
pub const DEFAULT_BASE: [LearnerKind; 3] = [LearnerKind::Mlp, LearnerKind::RandomForest, LearnerKind::Knn];

pub const DEFAULT_META: LearnerKind = LearnerKind::KernelRidge;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackingMode {
    #[serde(rename = "insample")]
    InSample,
    #[serde(rename = "kfold")]
    KFold,
}

impl fmt::Display for StackingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StackingMode::InSample => "insample",
            StackingMode::KFold => "kfold",
        })
    }
}

impl FromStr for StackingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "insample" => Ok(StackingMode::InSample),
            "kfold" => Ok(StackingMode::KFold),
            _ => Err(Error::invalid(format!("unknown stacking mode `{s}` (expected insample or kfold)"))),
        }
    }
}

/// Per-column and target scaling of the meta layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaScaling {
    pub input_means: Vec<f64>,
    pub input_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
}

impl MetaScaling {
    fn fit(meta_x: &DMatrix<f64>, y: &[f64]) -> Self {
        let (input_means, input_stds) = meta_x.column_iter().map(|c| mean_std(c.iter().copied())).unzip();
        let (target_mean, target_std) = mean_std(y.iter().copied());
        MetaScaling { input_means, input_stds, target_mean, target_std }
    }

    fn scale_inputs(&self, meta_x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(meta_x.nrows(), meta_x.ncols(), |i, j| {
            (meta_x[(i, j)] - self.input_means[j]) / self.input_stds[j]
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub base_models: Vec<FittedRegressor>,
    pub meta_model: FittedRegressor,
    pub scaling: MetaScaling,
    pub mode: StackingMode,
    pub folds: usize,
}

fn with_identity(index: usize, kind: LearnerKind, e: Error) -> Error {
    Error::Learner { learner: format!("base[{index}]:{kind}"), source: Box::new(e) }
}

fn fit_all(specs: &[RegressorSpec], x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<FittedRegressor>> {
    specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| learners::fit(s, x, y).map_err(|e| with_identity(i, s.kind(), e)))
        .collect()
}

fn rows_of(x: &DMatrix<f64>, rows: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let rows: Vec<usize> = rows.collect();
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Row ranges of `folds` contiguous blocks covering `0..n`.
pub fn fold_bounds(n: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    (0..folds).map(|f| f * n / folds..(f + 1) * n / folds).collect()
}

fn base_predictions(models: &[FittedRegressor], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let preds = models.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(x.nrows(), models.len(), |i, t| preds[t][i]))
}

/// The meta training inputs `D_h` (n x T): column `t` holds base learner
/// `t`'s predictions. In k-fold mode row `i` comes from a model that never
/// saw row `i`.
///
/// Also returns the base models fitted on all rows.
pub fn meta_features(
    specs: &[RegressorSpec],
    x: &DMatrix<f64>,
    y: &[f64],
    mode: StackingMode,
    folds: usize,
) -> Result<(DMatrix<f64>, Vec<FittedRegressor>)> {
    if specs.is_empty() {
        return Err(Error::invalid("stacking needs at least one base learner"));
    }
    let n = x.nrows();
    let full = fit_all(specs, x, y)?;
    match mode {
        StackingMode::InSample => Ok((base_predictions(&full, x)?, full)),
        StackingMode::KFold => {
            if folds < 2 || n < folds {
                return Err(Error::invalid(format!("k-fold stacking needs 2 <= folds <= n, got {folds} folds for {n} rows")));
            }
            let mut dh = DMatrix::zeros(n, specs.len());
            for hold in fold_bounds(n, folds) {
                let train_rows = (0..hold.start).chain(hold.end..n);
                let xt = rows_of(x, train_rows.clone());
                let yt: Vec<f64> = train_rows.map(|i| y[i]).collect();
                let models = fit_all(specs, &xt, &yt)?;
                let held = base_predictions(&models, &rows_of(x, hold.clone()))?;
                for (k, i) in hold.enumerate() {
                    for t in 0..specs.len() {
                        dh[(i, t)] = held[(k, t)];
                    }
                }
            }
            Ok((dh, full))
        }
    }
}

pub fn fit_stacked(
    specs: &[RegressorSpec],
    meta_spec: &RegressorSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    mode: StackingMode,
    folds: usize,
) -> Result<StackedModel> {
    let (dh, base_models) = meta_features(specs, x, y, mode, folds)?;
    let scaling = MetaScaling::fit(&dh, y);
    let ys: Vec<f64> = y.iter().map(|v| (v - scaling.target_mean) / scaling.target_std).collect();
    let meta_model = learners::fit(meta_spec, &scaling.scale_inputs(&dh), &ys)
        .map_err(|e| Error::Learner { learner: format!("meta:{}", meta_spec.kind()), source: Box::new(e) })?;
    Ok(StackedModel { base_models, meta_model, scaling, mode, folds })
}

impl StackedModel {
    pub fn input_dim(&self) -> usize {
        self.base_models[0].input_dim()
    }

    /// Base-learner predictions, one column per base model.
    pub fn base_predictions(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        base_predictions(&self.base_models, x)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let dh = self.base_predictions(x)?;
        let z = self.meta_model.predict(&self.scaling.scale_inputs(&dh))?;
        Ok(z.into_iter().map(|v| self.scaling.target_mean + self.scaling.target_std * v).collect())
    }
}

pub fn predict_stacked(m: &StackedModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    m.predict(x)
}
