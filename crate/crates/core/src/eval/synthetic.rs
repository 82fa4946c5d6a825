//! Seeded synthetic monthly spread dataset with a known generating rule.
//!
//! Features are named `x01`, `x02`, ... The first `min(6, d)` are the true
//! drivers; every series is a unit-variance AR(1) with coefficient 0.5.
//! The remaining features are distractors: mixtures of four latent AR(1)
//! factors plus their own noise, correlated with each other but independent
//! of the target.
//!
//! Under [`Recipe::Default`] the spread (in basis points) is
//!
//! ```text
//! spread_t = 150 + 20 * (s_t + a_t + noise * e_t)
//! s_t = 0.9 x1 + 1.2 tanh(1.5 x2) + 0.6 (x3^2 - 1) + 1.2 sin(1.5 x4) + 0.8 x5 + 1.3 |x6|
//! a_t = 0.8 a_{t-1} + 0.6 u_t
//! ```
//!
//! with `e_t`, `u_t` standard normal. Each driver contributes a variance
//! between roughly 0.6 and 0.9 to `s_t`. [`Recipe::Linear`] replaces `s_t` with
//! a linear combination and drops `a_t`; [`Recipe::NoiseOnly`] keeps only
//! `noise * e_t`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Month};
use crate::error::{Error, Result};
use crate::seed;

pub const TRUE_FEATURE_COUNT: usize = 6;

const FEATURE_AR: f64 = 0.5;
const LATENT_FACTORS: usize = 4;
const SPREAD_LEVEL: f64 = 150.0;
const SPREAD_SCALE: f64 = 20.0;
const LINEAR_WEIGHTS: [f64; TRUE_FEATURE_COUNT] = [1.0, -0.8, 0.6, 0.9, -0.5, 0.7];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    Default,
    Linear,
    NoiseOnly,
}

impl std::str::FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Recipe::Default),
            "linear" => Ok(Recipe::Linear),
            "noise_only" => Ok(Recipe::NoiseOnly),
            _ => Err(Error::invalid(format!("unknown recipe `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub recipe: Recipe,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { seed: 0, n: 600, d: 40, noise: 0.5, recipe: Recipe::Default }
    }
}

/// Names of the true drivers for a given feature count.
pub fn true_feature_names(d: usize) -> Vec<String> {
    (0..d.min(TRUE_FEATURE_COUNT)).map(feature_name).collect()
}

fn feature_name(j: usize) -> String {
    format!("x{:02}", j + 1)
}

fn ar1<R: Rng>(rng: &mut R, n: usize, phi: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut v: f64 = StandardNormal.sample(rng);
    for _ in 0..n {
        out.push(v);
        let e: f64 = StandardNormal.sample(rng);
        v = phi * v + innov * e;
    }
    out
}

fn signal(recipe: Recipe, x: &[f64]) -> f64 {
    let g = |j: usize| x.get(j).copied().unwrap_or(0.0);
    match recipe {
        Recipe::Default => {
            0.9 * g(0) + 1.2 * (1.5 * g(1)).tanh() + 0.6 * (g(2) * g(2) - 1.0) + 1.2 * (1.5 * g(3)).sin()
                + 0.8 * g(4)
                + 1.3 * g(5).abs()
        }
        Recipe::Linear => x.iter().zip(LINEAR_WEIGHTS).map(|(a, w)| a * w).sum(),
        Recipe::NoiseOnly => 0.0,
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    let SyntheticConfig { seed: root, n, d, noise, recipe } = *config;
    if n < 40 || d < 5 {
        return Err(Error::invalid(format!("synthetic data needs n >= 40 and d >= 5, got n = {n}, d = {d}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("noise must be finite and nonnegative"));
    }
    let mut rng = seed::rng(seed::derive(root, "synthetic"));
    let n_true = d.min(TRUE_FEATURE_COUNT);

    let mut columns: Vec<Vec<f64>> = (0..n_true).map(|_| ar1(&mut rng, n, FEATURE_AR)).collect();
    let factors: Vec<Vec<f64>> = (0..LATENT_FACTORS).map(|_| ar1(&mut rng, n, FEATURE_AR)).collect();
    for _ in n_true..d {
        let loadings: Vec<f64> = (0..LATENT_FACTORS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let own = ar1(&mut rng, n, FEATURE_AR);
        let norm = (loadings.iter().map(|l| l * l).sum::<f64>() + 0.25).sqrt();
        columns.push(
            (0..n)
                .map(|t| (loadings.iter().zip(&factors).map(|(l, f)| l * f[t]).sum::<f64>() + 0.5 * own[t]) / norm)
                .collect(),
        );
    }

    let mut ar = 0.0;
    let mut target = Vec::with_capacity(n);
    for t in 0..n {
        let row: Vec<f64> = columns[..n_true].iter().map(|c| c[t]).collect();
        let u: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        ar = 0.8 * ar + 0.6 * u;
        let persistent = if recipe == Recipe::Default { ar } else { 0.0 };
        target.push(SPREAD_LEVEL + SPREAD_SCALE * (signal(recipe, &row) + persistent + noise * e));
    }

    let start = Month::new(2000, 1)?;
    Dataset::new(
        (0..n as i64).map(|k| start.plus(k)).collect(),
        (0..d).map(feature_name).collect(),
        DMatrix::from_fn(n, d, |i, j| columns[j][i]),
        target,
        "spread",
    )
}
