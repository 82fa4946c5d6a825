//! Trailing spread average, standardisation and PCA whitening.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{self, RegressorSpec};

/// Candidate windows for the spread average, in months.
pub const WINDOW_RANGE: RangeInclusive<usize> = 1..=12;

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Components with a smaller eigenvalue are dropped.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// Name of the appended spread-average feature.
pub const SPREAD_AVERAGE_FEATURE: &str = "spread_avg";

/// Fraction of the window-search span used for fitting; the rest validates.
const WINDOW_FIT_FRACTION: f64 = 0.8;

/// Minimum rows left after dropping the largest window's warm-up.
const MIN_WINDOW_ROWS: usize = 10;

/// Mean of the `window` values strictly before each position. The first
/// `window` entries have no full history and are `None`.
pub fn rolling_average_feature(target: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    if window >= target.len() {
        return Err(Error::invalid(format!("window {window} needs more than {} values", target.len())));
    }
    Ok((0..target.len())
        .map(|t| (t >= window).then(|| target[t - window..t].iter().sum::<f64>() / window as f64))
        .collect())
}

/// Mean of the last `window` values of `history` (the average available for
/// the month after it ends).
pub fn trailing_mean(history: &[f64], window: usize) -> Result<f64> {
    if window == 0 || window > history.len() {
        return Err(Error::invalid(format!("cannot average {window} of {} values", history.len())));
    }
    Ok(history[history.len() - window..].iter().sum::<f64>() / window as f64)
}

/// Appends the spread average as a feature and drops the first `window`
/// rows, which lack a full history.
pub fn with_spread_average(ds: &Dataset, window: usize) -> Result<Dataset> {
    let avg = rolling_average_feature(ds.target(), window)?;
    let filled: Vec<f64> = avg.iter().map(|v| v.unwrap_or(0.0)).collect();
    ds.with_feature(SPREAD_AVERAGE_FEATURE, &filled)?.slice_rows(window..ds.n())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowChoice {
    pub window_months: usize,
    pub validation_mse: f64,
}

/// Validation MSE of `learner` for every candidate window, in candidate
/// order.
///
/// All windows are scored on the same rows: the warm-up of the largest
/// window is dropped for every candidate. The first 80% of the remaining rows
/// fit the input transform, the target scaling and the learner; the last 20%
/// validate.
pub fn window_sweep(
    ds: &Dataset,
    candidates: &[usize],
    learner: &RegressorSpec,
    inputs: &InputConfig,
) -> Result<Vec<WindowChoice>> {
    let max_w = *candidates.iter().max().ok_or_else(|| Error::invalid("no candidate windows"))?;
    if candidates.contains(&0) {
        return Err(Error::invalid("window must be at least 1"));
    }
    if ds.n() < max_w + MIN_WINDOW_ROWS {
        return Err(Error::invalid(format!(
            "window search up to {max_w} months needs at least {} rows, got {}",
            max_w + MIN_WINDOW_ROWS,
            ds.n()
        )));
    }
    let usable = ds.n() - max_w;
    let fit_rows = ((usable as f64 * WINDOW_FIT_FRACTION) as usize).clamp(2, usable - 2);

    candidates
        .par_iter()
        .map(|&w| {
            let aug = with_spread_average(ds, w)?.slice_rows(max_w - w..ds.n() - w)?;
            let fit_part = aug.slice_rows(0..fit_rows)?;
            let val_part = aug.slice_rows(fit_rows..usable)?;
            let transform = InputTransform::fit(inputs, &fit_part.features())?;
            let target = TargetScaling::fit(fit_part.target());
            let model = learners::fit(learner, &transform.apply(&fit_part.features())?, &target.scale(fit_part.target()))?;
            let pred = target.unscale(model.predict(&transform.apply(&val_part.features())?)?);
            let mse = pred.iter().zip(val_part.target()).map(|(p, y)| (p - y).powi(2)).sum::<f64>()
                / pred.len() as f64;
            if !mse.is_finite() {
                return Err(Error::invalid(format!("window {w} produced a non-finite validation error")));
            }
            Ok(WindowChoice { window_months: w, validation_mse: mse })
        })
        .collect()
}

/// The candidate window with the lowest validation MSE; ties go to the
/// smaller window.
pub fn choose_window(
    ds: &Dataset,
    candidates: &[usize],
    learner: &RegressorSpec,
    inputs: &InputConfig,
) -> Result<WindowChoice> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let sweep = window_sweep(ds, &sorted, learner, inputs)?;
    let mut best = sweep[0];
    for c in &sweep[1..] {
        if c.validation_mse < best.validation_mse {
            best = *c;
        }
    }
    Ok(best)
}

/// Column means and sample standard deviations. Constant columns keep a
/// scale of 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::invalid("standardising needs at least 2 rows"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input"));
        }
        let mut means = Vec::with_capacity(d);
        let mut stds = Vec::with_capacity(d);
        for col in x.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            means.push(mean);
            stds.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Standardizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.ncols() });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.stds[j]))
    }
}

/// Z-scoring of the regression target. Learners see the scaled target and
/// their predictions are mapped back, which centres kernel ridge and leaves
/// the other learners unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaling {
    pub fn fit(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        TargetScaling { mean, std: if var > 0.0 { var.sqrt() } else { 1.0 } }
    }

    pub fn scale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn unscale(&self, z: Vec<f64>) -> Vec<f64> {
        z.into_iter().map(|v| self.mean + self.std * v).collect()
    }
}

/// PCA whitening fitted on z-scored columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteningTransform {
    pub standardizer: Standardizer,
    /// `d x r`, orthonormal columns, row-major.
    pub basis: Vec<f64>,
    pub retained: usize,
    /// `1 / sqrt(eigenvalue + epsilon)` per retained component.
    pub scales: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub epsilon: f64,
}

impl WhiteningTransform {
    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.input_dim(), self.retained, &self.basis)
    }
}

/// Fits a whitening transform: z-score, eigendecompose the sample
/// covariance, keep components above [`EIGENVALUE_FLOOR`] in descending
/// eigenvalue order.
pub fn fit_whitening(x: &DMatrix<f64>, epsilon: f64) -> Result<WhiteningTransform> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("whitening epsilon must be finite and nonnegative"));
    }
    let standardizer = Standardizer::fit(x)?;
    let z = standardizer.apply(x)?;
    let n = z.nrows();
    let cov = (z.transpose() * &z) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let keep: Vec<usize> = order.into_iter().filter(|&k| eig.eigenvalues[k] >= EIGENVALUE_FLOOR).collect();
    if keep.is_empty() {
        return Err(Error::invalid("all columns are constant; nothing to whiten"));
    }
    let d = x.ncols();
    let r = keep.len();
    let mut basis = Vec::with_capacity(d * r);
    for i in 0..d {
        for &k in &keep {
            basis.push(eig.eigenvectors[(i, k)]);
        }
    }
    // Fix the sign of each component so the largest-magnitude loading is
    // positive; eigenvector signs are otherwise arbitrary.
    for (c, &k) in keep.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let pivot = (0..d).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a))).unwrap();
        if col[pivot] < 0.0 {
            for i in 0..d {
                basis[i * r + c] = -basis[i * r + c];
            }
        }
    }
    let eigenvalues: Vec<f64> = keep.iter().map(|&k| eig.eigenvalues[k]).collect();
    let scales = eigenvalues.iter().map(|l| 1.0 / (l + epsilon).sqrt()).collect();
    Ok(WhiteningTransform { standardizer, basis, retained: r, scales, eigenvalues, epsilon })
}

/// `z-score(x) * basis * diag(scales)`, with the fit-time statistics.
pub fn apply_whitening(t: &WhiteningTransform, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let z = t.standardizer.apply(x)?;
    let mut out = z * t.basis_matrix();
    for (mut col, s) in out.column_iter_mut().zip(&t.scales) {
        col *= *s;
    }
    Ok(out)
}

/// How features are prepared before the learners see them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub whiten: bool,
    pub epsilon: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig { whiten: true, epsilon: DEFAULT_EPSILON }
    }
}

/// A fitted input transform: whitening, or plain z-scoring when whitening
/// is switched off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputTransform {
    Whiten(WhiteningTransform),
    Standardize(Standardizer),
}

impl InputTransform {
    pub fn fit(config: &InputConfig, x: &DMatrix<f64>) -> Result<Self> {
        if config.whiten {
            Ok(InputTransform::Whiten(fit_whitening(x, config.epsilon)?))
        } else {
            Ok(InputTransform::Standardize(Standardizer::fit(x)?))
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            InputTransform::Whiten(t) => apply_whitening(t, x),
            InputTransform::Standardize(s) => s.apply(x),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            InputTransform::Whiten(t) => t.retained,
            InputTransform::Standardize(s) => s.dim(),
        }
    }
}
