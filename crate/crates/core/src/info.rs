//! Mutual-information feature ranking.
//!
//! Both estimators discretise by rank (equal-frequency bins), which makes
//! them invariant to strictly increasing transforms of either variable.
//!
//! * [`entropy`] uses `floor(sqrt(n))` bins and adds the differential
//!   correction `sum_b p_b ln(w_b)` for the bin widths `w_b`, which is the
//!   m-spacing estimator of differential entropy.
//! * [`mutual_information`] bins both axes into `round(cbrt(n))` bins and
//!   evaluates the plug-in discrete mutual information on the joint grid.
//!   A coarser grid than the entropy one keeps the `(B - 1)^2 / 2n` upward
//!   bias of the plug-in estimate small (about 0.02 nats at n = 10,000).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Default number of selected features.
pub const DEFAULT_TOP_K: usize = 20;

/// Smallest sample size accepted by the estimators.
pub const MIN_SAMPLES: usize = 8;

fn check_samples(x: &[f64]) -> Result<()> {
    if x.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_SAMPLES} samples, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples contain non-finite values"));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::invalid("zero-variance input"));
    }
    Ok(())
}

fn sorted_order(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    idx
}

/// Equal-frequency bin index per sample. Tied values share the bin of the
/// first rank in their group.
pub fn equal_frequency_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let order = sorted_order(x);
    let mut out = vec![0; n];
    let mut group_bin = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank == 0 || x[i] != x[order[rank - 1]] {
            group_bin = rank * bins / n;
        }
        out[i] = group_bin;
    }
    out
}

/// Number of bins used by [`entropy`].
pub fn entropy_bins(n: usize) -> usize {
    n.isqrt().max(2)
}

/// Number of bins per axis used by [`mutual_information`].
pub fn mi_bins(n: usize) -> usize {
    let mut b = 1usize;
    while (b + 1).pow(3) <= n {
        b += 1;
    }
    // round to nearest: compare n against the midpoint cube (b + 1/2)^3
    let mid = (2 * b + 1).pow(3);
    if 8 * n >= mid {
        b += 1;
    }
    b.max(2)
}

/// Differential entropy estimate in nats.
pub fn entropy(samples: &[f64]) -> Result<f64> {
    check_samples(samples)?;
    let n = samples.len();
    let bins = entropy_bins(n);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut h = 0.0;
    let mut lo = 0;
    // Bins that collapse onto a single value have zero width; they are
    // merged into the following bin.
    for b in 0..bins {
        let hi = (b + 1) * n / bins;
        let width = sorted[hi.min(n - 1)] - sorted[lo];
        if width <= 0.0 && b + 1 < bins {
            continue;
        }
        if width > 0.0 {
            let p = (hi - lo) as f64 / n as f64;
            h += p * (width / p).ln();
        }
        lo = hi;
    }
    Ok(h)
}

/// Plug-in mutual information in nats, clamped at zero.
///
/// Symmetric bit for bit: the joint-cell terms are summed in sorted order, so
/// swapping the arguments (which transposes the grid) gives the same sum.
pub fn mutual_information(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    check_samples(x)?;
    check_samples(y)?;
    let n = x.len();
    let bins = mi_bins(n);
    let bx = equal_frequency_bins(x, bins);
    let by = equal_frequency_bins(y, bins);

    let mut joint = vec![0usize; bins * bins];
    let mut cx = vec![0usize; bins];
    let mut cy = vec![0usize; bins];
    for (&i, &j) in bx.iter().zip(&by) {
        joint[i * bins + j] += 1;
        cx[i] += 1;
        cy[j] += 1;
    }
    let nf = n as f64;
    let mut terms: Vec<f64> = Vec::new();
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let c = c as f64;
                let marg = (cx[i] * cy[j]) as f64;
                terms.push(c / nf * (c * nf / marg).ln());
            }
        }
    }
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok(mi.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub feature_name: String,
    pub mi_nats: f64,
}

/// Features sorted by descending mutual information with the target; ties
/// keep dataset column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<MiEstimate>,
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature_name.clone()).collect()
    }

    pub fn score(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature_name == name).map(|e| e.mi_nats)
    }

    /// 1-based rank of a feature.
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.feature_name == name).map(|p| p + 1)
    }

    /// CSV with columns `feature_name,mi_nats,rank,selected`; the first `k`
    /// rows are marked selected.
    pub fn to_csv(&self, k: usize) -> String {
        let mut out = String::from("feature_name,mi_nats,rank,selected\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", e.feature_name, e.mi_nats, i + 1, i < k));
        }
        out
    }
}

/// Scores every feature column against the target.
///
/// Constant columns score zero with a warning instead of failing the whole
/// ranking.
pub fn rank_features(ds: &Dataset) -> Result<FeatureRanking> {
    let target = ds.target();
    let scores = (0..ds.d())
        .into_par_iter()
        .map(|j| {
            let col = ds.column(j);
            if col.iter().all(|&v| v == col[0]) {
                log::warn!("feature `{}` has zero variance; scoring it 0", ds.feature_names()[j]);
                return Ok(0.0);
            }
            mutual_information(&col, target)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut entries: Vec<MiEstimate> = ds
        .feature_names()
        .iter()
        .zip(scores)
        .map(|(name, mi_nats)| MiEstimate { feature_name: name.clone(), mi_nats })
        .collect();
    entries.sort_by(|a, b| b.mi_nats.total_cmp(&a.mi_nats));
    Ok(FeatureRanking { entries })
}

/// Names of the `k` highest-ranked features.
pub fn select_top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<String>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", ranking.len())));
    }
    Ok(ranking.entries[..k].iter().map(|e| e.feature_name.clone()).collect())
}
