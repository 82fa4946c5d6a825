//! Regressors behind one fit/predict contract.
//!
//! Every learner is deterministic given its [`RegressorSpec`] (including the
//! seed) and the training data, and a [`FittedRegressor`] is immutable.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod forest;
pub mod kernel_ridge;
pub mod knn;
pub mod mlp;
pub mod ols;

pub use forest::{ForestModel, ForestParams};
pub use kernel_ridge::{Kernel, KernelRidgeModel, KernelRidgeParams};
pub use knn::{KnnModel, KnnParams};
pub use mlp::{MlpModel, MlpParams};
pub use ols::{OlsModel, OlsParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Ols,
    Knn,
    KernelRidge,
    RandomForest,
    Mlp,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] =
        [LearnerKind::Ols, LearnerKind::Knn, LearnerKind::KernelRidge, LearnerKind::RandomForest, LearnerKind::Mlp];

    pub fn id(self) -> &'static str {
        match self {
            LearnerKind::Ols => "ols",
            LearnerKind::Knn => "knn",
            LearnerKind::KernelRidge => "kernel_ridge",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::invalid(format!("unknown learner `{s}`")))
    }
}

/// Kind-specific hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    Ols(OlsParams),
    Knn(KnnParams),
    KernelRidge(KernelRidgeParams),
    RandomForest(ForestParams),
    Mlp(MlpParams),
}

impl Hyperparams {
    pub fn default_for(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::Ols => Hyperparams::Ols(OlsParams::default()),
            LearnerKind::Knn => Hyperparams::Knn(KnnParams::default()),
            LearnerKind::KernelRidge => Hyperparams::KernelRidge(KernelRidgeParams::default()),
            LearnerKind::RandomForest => Hyperparams::RandomForest(ForestParams::default()),
            LearnerKind::Mlp => Hyperparams::Mlp(MlpParams::default()),
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparams::Ols(_) => LearnerKind::Ols,
            Hyperparams::Knn(_) => LearnerKind::Knn,
            Hyperparams::KernelRidge(_) => LearnerKind::KernelRidge,
            Hyperparams::RandomForest(_) => LearnerKind::RandomForest,
            Hyperparams::Mlp(_) => LearnerKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyperparams::Ols(p) => p.validate(),
            Hyperparams::Knn(p) => p.validate(),
            Hyperparams::KernelRidge(p) => p.validate(),
            Hyperparams::RandomForest(p) => p.validate(),
            Hyperparams::Mlp(p) => p.validate(),
        }
    }
}

/// What to fit: a learner kind with its hyperparameters and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub params: Hyperparams,
    pub seed: u64,
}

impl RegressorSpec {
    pub fn new(params: Hyperparams, seed: u64) -> Self {
        RegressorSpec { params, seed }
    }

    pub fn default_for(kind: LearnerKind, seed: u64) -> Self {
        RegressorSpec { params: Hyperparams::default_for(kind), seed }
    }

    pub fn kind(&self) -> LearnerKind {
        self.params.kind()
    }
}

/// A trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedRegressor {
    Ols(OlsModel),
    Knn(KnnModel),
    KernelRidge(KernelRidgeModel),
    RandomForest(ForestModel),
    Mlp(MlpModel),
}

impl FittedRegressor {
    pub fn kind(&self) -> LearnerKind {
        match self {
            FittedRegressor::Ols(_) => LearnerKind::Ols,
            FittedRegressor::Knn(_) => LearnerKind::Knn,
            FittedRegressor::KernelRidge(_) => LearnerKind::KernelRidge,
            FittedRegressor::RandomForest(_) => LearnerKind::RandomForest,
            FittedRegressor::Mlp(_) => LearnerKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FittedRegressor::Ols(m) => m.input_dim(),
            FittedRegressor::Knn(m) => m.input_dim(),
            FittedRegressor::KernelRidge(m) => m.input_dim(),
            FittedRegressor::RandomForest(m) => m.input_dim(),
            FittedRegressor::Mlp(m) => m.input_dim(),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        let rows = RowMatrix::from(x);
        let out = match self {
            FittedRegressor::Ols(m) => m.predict(&rows),
            FittedRegressor::Knn(m) => m.predict(&rows),
            FittedRegressor::KernelRidge(m) => m.predict(&rows),
            FittedRegressor::RandomForest(m) => m.predict(&rows),
            FittedRegressor::Mlp(m) => m.predict(&rows),
        };
        Ok(out)
    }
}

/// Fits `spec` on `x` (n x d) and `y`.
pub fn fit(spec: &RegressorSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<FittedRegressor> {
    spec.params.validate()?;
    let (n, d) = x.shape();
    if n < 2 || d < 1 {
        return Err(Error::invalid(format!("training data must be at least 2x1, got {n}x{d}")));
    }
    if y.len() != n {
        return Err(Error::invalid(format!("{n} rows but {} targets", y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    let rows = RowMatrix::from(x);
    Ok(match &spec.params {
        Hyperparams::Ols(p) => FittedRegressor::Ols(OlsModel::fit(p, &rows, y)?),
        Hyperparams::Knn(p) => FittedRegressor::Knn(KnnModel::fit(p, &rows, y)?),
        Hyperparams::KernelRidge(p) => FittedRegressor::KernelRidge(KernelRidgeModel::fit(p, &rows, y)?),
        Hyperparams::RandomForest(p) => FittedRegressor::RandomForest(ForestModel::fit(p, &rows, y, spec.seed)?),
        Hyperparams::Mlp(p) => FittedRegressor::Mlp(MlpModel::fit(p, &rows, y, spec.seed)?),
    })
}

/// Dense row-major matrix; the learners walk rows far more than columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        RowMatrix { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

impl From<&DMatrix<f64>> for RowMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(m.row(i).iter());
        }
        RowMatrix { rows, cols, data }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}
