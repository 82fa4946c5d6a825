//! Random forest regression: bootstrapped variance-reduction trees with
//! per-split feature subsampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RowMatrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    /// Features tried per split; `None` means `max(1, d / 3)`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    /// `None` grows until leaves are pure or at `min_leaf`.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 100, max_features: None, min_leaf: 1, max_depth: None, bootstrap: true }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::invalid("random forest needs at least one tree"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("random forest min_leaf must be at least 1"));
        }
        if self.max_features == Some(0) {
            return Err(Error::invalid("random forest max_features must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub input_dim: usize,
    pub trees: Vec<Tree>,
}

struct Builder<'a, R> {
    x: &'a RowMatrix,
    y: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
    rng: R,
    features: Vec<usize>,
    pairs: Vec<(f64, f64)>,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Builder<'_, R> {
    /// Best split of `rows` on `feature`, scored by `S_L^2 / n_L + S_R^2 / n_R`
    /// (maximising it minimises the children's squared error).
    fn best_on_feature(&mut self, rows: &[usize], feature: usize) -> Option<SplitChoice> {
        let min_leaf = self.params.min_leaf;
        self.pairs.clear();
        self.pairs.extend(rows.iter().map(|&i| (self.x.get(i, feature), self.y[i])));
        self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = self.pairs.len();
        let total: f64 = self.pairs.iter().map(|p| p.1).sum();
        let mut left = 0.0;
        let mut best: Option<SplitChoice> = None;
        for i in 1..m {
            left += self.pairs[i - 1].1;
            let (lo, hi) = (self.pairs[i - 1].0, self.pairs[i].0);
            if lo == hi || i < min_leaf || m - i < min_leaf {
                continue;
            }
            let right = total - left;
            let score = left * left / i as f64 + right * right / (m - i) as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(SplitChoice { feature, threshold, score });
            }
        }
        best
    }

    fn choose_split(&mut self, rows: &[usize]) -> Option<SplitChoice> {
        self.features.shuffle(&mut self.rng);
        let mut best: Option<SplitChoice> = None;
        for slot in 0..self.features.len() {
            // Past the sampled subset, keep looking only until a valid split
            // turns up.
            if slot >= self.mtry && best.is_some() {
                break;
            }
            let f = self.features[slot];
            if let Some(c) = self.best_on_feature(rows, f) {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });

        let pure = rows.iter().all(|&i| self.y[i] == self.y[rows[0]]);
        let too_small = rows.len() < 2 * self.params.min_leaf;
        let too_deep = self.params.max_depth.is_some_and(|md| depth >= md);
        if pure || too_small || too_deep {
            return id;
        }
        let Some(split) = self.choose_split(rows) else { return id };

        // Partition rows in place: left block first.
        let mut cut = 0;
        for k in 0..rows.len() {
            if self.x.get(rows[k], split.feature) <= split.threshold {
                rows.swap(k, cut);
                cut += 1;
            }
        }
        let (l, r) = rows.split_at_mut(cut);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

fn grow_tree(params: &ForestParams, x: &RowMatrix, y: &[f64], tree_seed: u64) -> Tree {
    let n = x.rows;
    let mut rng = seed::rng(tree_seed);
    let mut rows: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mtry = params.max_features.unwrap_or((x.cols / 3).max(1)).min(x.cols);
    let mut b = Builder {
        x,
        y,
        params,
        mtry,
        rng,
        features: (0..x.cols).collect(),
        pairs: Vec::with_capacity(n),
        nodes: Vec::new(),
    };
    b.build(&mut rows, 0);
    Tree { nodes: b.nodes }
}

impl ForestModel {
    pub fn fit(params: &ForestParams, x: &RowMatrix, y: &[f64], seed: u64) -> Result<Self> {
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| grow_tree(params, x, y, seed::derive_indexed(seed, t as u64)))
            .collect();
        Ok(ForestModel { input_dim: x.cols, trees })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn predict(&self, x: &RowMatrix) -> Vec<f64> {
        (0..x.rows)
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit, FittedRegressor, Hyperparams, RegressorSpec};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn spec(params: ForestParams, seed: u64) -> RegressorSpec {
        RegressorSpec::new(Hyperparams::RandomForest(params), seed)
    }

    #[test]
    fn single_unbootstrapped_tree_memorises_unique_rows() {
        let n = 60;
        let x = DMatrix::from_fn(n, 4, |i, j| ((i * 31 + j * 17) as f64 * 0.713).sin() * (j + 1) as f64);
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos() * 10.0).collect();
        let params = ForestParams { trees: 1, bootstrap: false, ..Default::default() };
        let m = fit(&spec(params, 3), &x, &y).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
        let FittedRegressor::RandomForest(f) = &m else { unreachable!() };
        assert_eq!(f.trees[0].leaf_count(), n);
    }

    #[test]
    fn depth_limit_is_respected() {
        let x = DMatrix::from_fn(100, 2, |i, j| (i * (j + 1)) as f64);
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let params = ForestParams { trees: 3, max_depth: Some(2), ..Default::default() };
        let FittedRegressor::RandomForest(f) = fit(&spec(params, 1), &x, &y).unwrap() else { unreachable!() };
        assert!(f.trees.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn constant_features_give_the_mean() {
        let x = DMatrix::from_element(10, 3, 1.0);
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let params = ForestParams { trees: 1, bootstrap: false, ..Default::default() };
        let p = fit(&spec(params, 0), &x, &y).unwrap().predict(&x).unwrap();
        assert!(p.iter().all(|&v| (v - 4.5).abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn predictions_bounded_and_reproducible(seed in any::<u64>(), n in 5usize..40) {
            let x = DMatrix::from_fn(n, 3, |i, j| ((seed.wrapping_add((i * 3 + j) as u64) % 97) as f64).sqrt());
            let y: Vec<f64> = (0..n).map(|i| ((seed >> 3).wrapping_add(i as u64 * 7) % 23) as f64 - 11.0).collect();
            let params = ForestParams { trees: 7, ..Default::default() };
            let a = fit(&spec(params.clone(), seed), &x, &y).unwrap();
            let b = fit(&spec(params, seed), &x, &y).unwrap();
            let q = DMatrix::from_fn(9, 3, |i, j| i as f64 * 1.3 - j as f64);
            let pa = a.predict(&q).unwrap();
            prop_assert_eq!(&pa, &b.predict(&q).unwrap());
            let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            prop_assert!(pa.iter().all(|&p| p >= lo - 1e-9 && p <= hi + 1e-9));
        }
    }
}
