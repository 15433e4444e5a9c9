//! CART classification trees with Gini impurity.
//!
//! A split sends a sample left when `x[feature] <= threshold`, where the
//! threshold is always an observed training value (the lower side of the
//! gap). Under a strictly increasing transform of a feature, the same
//! samples fall on the same sides, so fitted trees predict identically.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MentalState;

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        probabilities: [f64; N_CLASSES],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub max_features: usize,
    pub min_samples_split: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn gini(counts: &[usize; N_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

struct Best {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl DecisionTree {
    /// Fits on the rows listed in `samples` (repeats allowed, as produced by
    /// bootstrap sampling).
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[MentalState],
        samples: Vec<usize>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut tree = DecisionTree { nodes: Vec::new() };
        tree.grow(x, y, samples, 0, params, rng);
        tree
    }

    fn grow(
        &mut self,
        x: ArrayView2<f64>,
        y: &[MentalState],
        samples: Vec<usize>,
        depth: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        let mut counts = [0usize; N_CLASSES];
        for &i in &samples {
            counts[y[i].index()] += 1;
        }
        let n = samples.len();
        let leaf = Node::Leaf {
            probabilities: counts.map(|c| c as f64 / n.max(1) as f64),
        };
        self.nodes.push(leaf);

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_done = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_done || n < params.min_samples_split.max(2) {
            return id;
        }
        let Some(best) = best_split(x, y, &samples, &counts, params, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| x[[i, best.feature]] <= best.threshold);
        let l = self.grow(x, y, left, depth + 1, params, rng);
        let r = self.grow(x, y, right, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    pub fn predict_row(&self, row: &[f64]) -> &[f64; N_CLASSES] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { probabilities } => return probabilities,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Draws features in random order and evaluates the first `max_features`;
/// if none of them can split the node, keeps drawing until one can.
fn best_split(
    x: ArrayView2<f64>,
    y: &[MentalState],
    samples: &[usize],
    counts: &[usize; N_CLASSES],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Option<Best> {
    let n = samples.len();
    let parent = gini(counts, n);
    let mut features: Vec<usize> = (0..x.ncols()).collect();
    features.shuffle(rng);

    let mut best: Option<Best> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (visited, &f) in features.iter().enumerate() {
        if visited >= params.max_features && best.is_some() {
            break;
        }
        pairs.clear();
        pairs.extend(samples.iter().map(|&i| (x[[i, f]], y[i].index())));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; N_CLASSES];
        for k in 0..n - 1 {
            left[pairs[k].1] += 1;
            if pairs[k].0 == pairs[k + 1].0 {
                continue;
            }
            let nl = k + 1;
            let nr = n - nl;
            let right: [usize; N_CLASSES] = std::array::from_fn(|c| counts[c] - left[c]);
            let impurity =
                (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            if impurity < parent && best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(Best {
                    feature: f,
                    threshold: pairs[k].0,
                    impurity,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn splits_a_single_threshold() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [
            MentalState::Focused,
            MentalState::Focused,
            MentalState::Drowsed,
            MentalState::Drowsed,
        ];
        let params = TreeParams {
            max_depth: None,
            max_features: 1,
            min_samples_split: 2,
        };
        let t = DecisionTree::fit(x.view(), &y, (0..4).collect(), &params, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.depth(), 1);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 1.0,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.predict_row(&[1.5])[2], 1.0);
    }

    #[test]
    fn constant_features_make_a_leaf() {
        let x = array![[1.0, 2.0], [1.0, 2.0]];
        let y = [MentalState::Focused, MentalState::Drowsed];
        let params = TreeParams {
            max_depth: None,
            max_features: 1,
            min_samples_split: 2,
        };
        let t = DecisionTree::fit(x.view(), &y, vec![0, 1], &params, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[1.0, 2.0]), &[0.5, 0.0, 0.5]);
    }
}
