//! One-hidden-layer perceptron regressor trained by mini-batch SGD.
//!
//! Targets are standardised internally and mapped back on prediction; inputs
//! are used as given (the pipeline feeds whitened features).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RowMatrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams { hidden_units: 64, learning_rate: 1e-3, epochs: 500, batch_size: 16 }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("mlp hidden_units, epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("mlp learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Parameters of a `d -> h (ReLU) -> 1` network, flattened as
/// `[W1 (h x d, row per hidden unit), b1 (h), w2 (h), b2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub input_dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl MlpNetwork {
    pub fn param_count(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + 2 * hidden + 1
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = vec![0.0; Self::param_count(input_dim, hidden)];
        let b1 = 1.0 / (input_dim as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let (w1, rest) = params.split_at_mut(hidden * input_dim);
        for w in w1 {
            *w = rng.random_range(-b1..b1);
        }
        for w in &mut rest[hidden..2 * hidden] {
            *w = rng.random_range(-b2..b2);
        }
        MlpNetwork { input_dim, hidden, params }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (h, d) = (self.hidden, self.input_dim);
        let (w1, rest) = self.params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        (w1, b1, w2, rest[0])
    }

    /// Output for one row; `pre` receives the hidden pre-activations.
    fn forward(&self, row: &[f64], pre: &mut [f64]) -> f64 {
        let d = self.input_dim;
        let (w1, b1, w2, b2) = self.split();
        let mut out = b2;
        for j in 0..self.hidden {
            let w = &w1[j * d..(j + 1) * d];
            let z = b1[j] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            pre[j] = z;
            if z > 0.0 {
                out += w2[j] * z;
            }
        }
        out
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut pre = vec![0.0; self.hidden];
        self.forward(row, &mut pre)
    }

    /// Mean squared error over the given rows.
    pub fn loss(&self, x: &RowMatrix, y: &[f64]) -> f64 {
        let mut pre = vec![0.0; self.hidden];
        (0..x.rows).map(|i| (self.forward(x.row(i), &mut pre) - y[i]).powi(2)).sum::<f64>() / x.rows as f64
    }

    /// Adds the gradient of the mean squared error over `rows` into `grad`
    /// and returns that loss.
    fn accumulate(&self, x: &RowMatrix, y: &[f64], rows: &[usize], grad: &mut [f64], pre: &mut [f64]) -> f64 {
        let (h, d) = (self.hidden, self.input_dim);
        let (_, _, w2, _) = self.split();
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &i in rows {
            let row = x.row(i);
            let resid = self.forward(row, pre) - y[i];
            loss += resid * resid * scale;
            let e = 2.0 * resid * scale;
            let (g_w1, rest) = grad.split_at_mut(h * d);
            let (g_b1, rest) = rest.split_at_mut(h);
            let (g_w2, g_b2) = rest.split_at_mut(h);
            g_b2[0] += e;
            for j in 0..h {
                let z = pre[j];
                if z > 0.0 {
                    g_w2[j] += e * z;
                    let dz = e * w2[j];
                    g_b1[j] += dz;
                    for (g, a) in g_w1[j * d..(j + 1) * d].iter_mut().zip(row) {
                        *g += dz * a;
                    }
                }
            }
        }
        loss
    }

    /// Loss and its gradient with respect to `params` over all rows.
    pub fn loss_and_gradient(&self, x: &RowMatrix, y: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut pre = vec![0.0; self.hidden];
        let rows: Vec<usize> = (0..x.rows).collect();
        let loss = self.accumulate(x, y, &rows, &mut grad, &mut pre);
        (loss, grad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub network: MlpNetwork,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl MlpModel {
    pub fn fit(params: &MlpParams, x: &RowMatrix, y: &[f64], seed: u64) -> Result<Self> {
        let n = y.len();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        // A constant target standardizes to zero and keeps a zero scale, so
        // the network output drops out and predictions equal the constant.
        let ys: Vec<f64> = y.iter().map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 }).collect();
        let scale = sd;

        let mut rng = seed::rng(seed);
        let mut net = MlpNetwork::init(x.cols, params.hidden_units, &mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad = vec![0.0; net.params.len()];
        let mut pre = vec![0.0; net.hidden];
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(params.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                epoch_loss += net.accumulate(x, &ys, batch, &mut grad, &mut pre) * batch.len() as f64;
                for (p, g) in net.params.iter_mut().zip(&grad) {
                    *p -= params.learning_rate * g;
                }
            }
            if !epoch_loss.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged(format!("mlp loss became non-finite at epoch {epoch}")));
            }
        }
        Ok(MlpModel { network: net, target_mean: mean, target_scale: scale })
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim
    }

    pub fn predict(&self, x: &RowMatrix) -> Vec<f64> {
        let mut pre = vec![0.0; self.network.hidden];
        (0..x.rows)
            .map(|i| self.target_mean + self.target_scale * self.network.forward(x.row(i), &mut pre))
            .collect()
    }
}
