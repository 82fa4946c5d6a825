use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean absolute error, mean squared error and coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    pub r2: f64,
}

pub fn compute_metrics(y: &[f64], yhat: &[f64]) -> Result<Metrics> {
    if y.len() != yhat.len() {
        return Err(Error::invalid(format!("length mismatch: {} actual vs {} predicted", y.len(), yhat.len())));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::invalid("R^2 needs at least 2 observations"));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut tot = 0.0;
    for (a, p) in y.iter().zip(yhat) {
        let r = a - p;
        abs += r.abs();
        sq += r * r;
        tot += (a - mean) * (a - mean);
    }
    if tot == 0.0 {
        return Err(Error::invalid("R^2 is undefined for a constant series"));
    }
    Ok(Metrics { mae: abs / n as f64, mse: sq / n as f64, r2: 1.0 - sq / tot })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_predictions() {
        let y = [1.0, 4.0, 2.0, 8.0];
        assert_eq!(compute_metrics(&y, &y).unwrap(), Metrics { mae: 0.0, mse: 0.0, r2: 1.0 });
        let m = compute_metrics(&y, &[3.75; 4]).unwrap();
        assert!(m.r2.abs() < 1e-15);
    }

    #[test]
    fn worked_example() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.mse - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.r2.abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[1.0, 2.0], &[1.0]).is_err());
        assert!(compute_metrics(&[1.0], &[1.0]).is_err());
        assert!(compute_metrics(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn mae_squared_bounded_by_mse() {
        let y = [3.0, -1.0, 4.0, 1.0, 5.0];
        let p = [2.0, 0.0, 4.5, -2.0, 5.0];
        let m = compute_metrics(&y, &p).unwrap();
        assert!(m.mae * m.mae <= m.mse);
        let m = compute_metrics(&y, &y.map(|v| v + 0.5)).unwrap();
        assert!((m.mae * m.mae - m.mse).abs() < 1e-15);
    }
}
