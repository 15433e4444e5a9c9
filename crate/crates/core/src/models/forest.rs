use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams, N_CLASSES};
use crate::data::MentalState;
use crate::seed::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

/// Bagged Gini trees; class probabilities are averaged over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws its bootstrap sample and feature subsets from its own
    /// generator seeded with `mix_seed([seed, t])`, so trees build in
    /// parallel without changing the result.
    pub fn fit(x: ArrayView2<f64>, y: &[MentalState], params: &ForestParams, seed: u64) -> Self {
        let n = y.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, t as u64]));
                let samples = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit(x, y, samples, &params.tree, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), N_CLASSES));
        for (row, mut dst) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            let row = row.to_vec();
            for t in &self.trees {
                for (d, p) in dst.iter_mut().zip(t.predict_row(&row)) {
                    *d += p;
                }
            }
            dst /= self.trees.len() as f64;
        }
        out
    }
}
