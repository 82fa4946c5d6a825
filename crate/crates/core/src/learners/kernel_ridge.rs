//! Kernel ridge regression.
//!
//! The RBF kernel is solved in the dual, `(K + lambda I) alpha = y`. The
//! linear kernel is solved in the primal, `(X'X + lambda I) w = X'y`, which is
//! the same estimator (push-through identity) but stays accurate when
//! `lambda` is tiny and `K` is rank deficient.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{squared_distance, RowMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-gamma * |a - b|^2)`
    Rbf,
    /// `a . b`
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelRidgeParams {
    pub kernel: Kernel,
    pub lambda: f64,
    /// RBF width; `None` means `1 / d`.
    pub gamma: Option<f64>,
}

impl Default for KernelRidgeParams {
    fn default() -> Self {
        KernelRidgeParams { kernel: Kernel::Rbf, lambda: 0.1, gamma: None }
    }
}

impl KernelRidgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("kernel ridge lambda must be positive"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid("kernel ridge gamma must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solution", rename_all = "snake_case")]
pub enum KernelRidgeModel {
    Dual { gamma: f64, support: RowMatrix, alpha: Vec<f64> },
    Primal { weights: Vec<f64> },
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * squared_distance(a, b)).exp()
}

impl KernelRidgeModel {
    pub fn fit(params: &KernelRidgeParams, x: &RowMatrix, y: &[f64]) -> Result<Self> {
        let (n, d) = (x.rows, x.cols);
        match params.kernel {
            Kernel::Rbf => {
                let gamma = params.gamma.unwrap_or(1.0 / d as f64);
                let mut k = DMatrix::<f64>::zeros(n, n);
                for i in 0..n {
                    for j in 0..=i {
                        let v = rbf(x.row(i), x.row(j), gamma);
                        k[(i, j)] = v;
                        k[(j, i)] = v;
                    }
                    k[(i, i)] += params.lambda;
                }
                let chol = Cholesky::new(k).ok_or_else(|| Error::Singular("K + lambda I is not positive definite".into()))?;
                let alpha = chol.solve(&DVector::from_column_slice(y));
                Ok(KernelRidgeModel::Dual { gamma, support: x.clone(), alpha: alpha.iter().copied().collect() })
            }
            Kernel::Linear => {
                let mut gram = DMatrix::<f64>::zeros(d, d);
                let mut rhs = DVector::<f64>::zeros(d);
                for i in 0..n {
                    let r = x.row(i);
                    for a in 0..d {
                        rhs[a] += r[a] * y[i];
                        for b in 0..=a {
                            gram[(a, b)] += r[a] * r[b];
                        }
                    }
                }
                for a in 0..d {
                    for b in 0..a {
                        gram[(b, a)] = gram[(a, b)];
                    }
                    gram[(a, a)] += params.lambda;
                }
                let chol = Cholesky::new(gram).ok_or_else(|| Error::Singular("X'X + lambda I is not positive definite".into()))?;
                let w = chol.solve(&rhs);
                Ok(KernelRidgeModel::Primal { weights: w.iter().copied().collect() })
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            KernelRidgeModel::Dual { support, .. } => support.cols,
            KernelRidgeModel::Primal { weights } => weights.len(),
        }
    }

    pub fn predict(&self, x: &RowMatrix) -> Vec<f64> {
        match self {
            KernelRidgeModel::Dual { gamma, support, alpha } => (0..x.rows)
                .map(|i| {
                    let q = x.row(i);
                    (0..support.rows).map(|j| alpha[j] * rbf(support.row(j), q, *gamma)).sum()
                })
                .collect(),
            KernelRidgeModel::Primal { weights } => {
                (0..x.rows).map(|i| x.row(i).iter().zip(weights).map(|(a, b)| a * b).sum()).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit, Hyperparams, RegressorSpec};

    fn spec(kernel: Kernel, lambda: f64) -> RegressorSpec {
        RegressorSpec::new(Hyperparams::KernelRidge(KernelRidgeParams { kernel, lambda, gamma: None }), 0)
    }

    #[test]
    fn single_point_shrinks_by_one_plus_lambda() {
        let x = RowMatrix::new(1, 3, vec![0.3, -1.2, 2.0]);
        let (y0, lambda) = (4.0, 0.1);
        let params = KernelRidgeParams { kernel: Kernel::Rbf, lambda, gamma: None };
        let m = KernelRidgeModel::fit(&params, &x, &[y0]).unwrap();
        let p = m.predict(&x)[0];
        assert!((p - y0 / (1.0 + lambda)).abs() < 1e-12, "{p}");
    }

    #[test]
    fn linear_primal_matches_dual_oracle() {
        // Dual oracle: alpha = (XX' + lambda I)^-1 y, prediction X* X' alpha.
        let n = 12;
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let y: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let lambda = 0.5;
        let k = &x * x.transpose() + DMatrix::identity(n, n) * lambda;
        let alpha = k.lu().solve(&DVector::from_column_slice(&y)).unwrap();
        let q = DMatrix::from_fn(4, 3, |i, j| (i as f64) - (j as f64) * 0.5);
        let expected = &q * x.transpose() * alpha;
        let got = fit(&spec(Kernel::Linear, lambda), &x, &y).unwrap().predict(&q).unwrap();
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_params() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(fit(&spec(Kernel::Rbf, 0.0), &x, &[1.0, 2.0]).is_err());
        let bad = RegressorSpec::new(
            Hyperparams::KernelRidge(KernelRidgeParams { kernel: Kernel::Rbf, lambda: 1.0, gamma: Some(-1.0) }),
            0,
        );
        assert!(fit(&bad, &x, &[1.0, 2.0]).is_err());
    }
}
