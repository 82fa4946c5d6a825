//! Ordinary least squares with an intercept, solved through the normal
//! equations.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RowMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlsParams {
    /// Added to every diagonal entry of the Gram matrix.
    pub jitter: f64,
}

impl Default for OlsParams {
    fn default() -> Self {
        OlsParams { jitter: 1e-10 }
    }
}

impl OlsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::invalid("ols jitter must be a finite nonnegative number"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Pivots of the Cholesky factor smaller than this fraction of the largest
/// Gram diagonal mean the design is rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

const REFINEMENT_STEPS: usize = 2;

impl OlsModel {
    pub fn fit(params: &OlsParams, x: &RowMatrix, y: &[f64]) -> Result<Self> {
        let (n, d) = (x.rows, x.cols);
        let p = d + 1;
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        let mut design = vec![1.0; p];
        for i in 0..n {
            design[1..].copy_from_slice(x.row(i));
            for a in 0..p {
                rhs[a] += design[a] * y[i];
                for b in a..p {
                    gram[(a, b)] += design[a] * design[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let mut jittered = gram.clone();
        for a in 0..p {
            jittered[(a, a)] += params.jitter;
        }
        let max_diag = (0..p).map(|a| jittered[(a, a)]).fold(0.0, f64::max);
        let chol = Cholesky::new(jittered).ok_or_else(|| Error::Singular("normal equations are not positive definite".into()))?;
        let l = chol.l_dirty();
        if (0..p).any(|a| l[(a, a)] * l[(a, a)] < RANK_TOLERANCE * max_diag) {
            return Err(Error::Singular("design matrix is rank deficient".into()));
        }
        // The jitter steadies the factorization; refining against the exact
        // Gram matrix removes the bias it adds on near-square designs.
        let mut beta = chol.solve(&rhs);
        for _ in 0..REFINEMENT_STEPS {
            beta += chol.solve(&(&rhs - &gram * &beta));
        }
        Ok(OlsModel { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect() })
    }

    pub fn input_dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict(&self, x: &RowMatrix) -> Vec<f64> {
        (0..x.rows)
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}
