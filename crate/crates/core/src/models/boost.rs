//! Second-order gradient boosting with softmax loss.
//!
//! Each round fits one regression tree per class to the gradient
//! `g = p − y` and hessian `h = p(1 − p)` of the multinomial log-loss.
//! Split gain is `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]`, leaf weight
//! `−G/(H+λ)`, shrunk by the learning rate. Trees grow level by level over
//! feature columns presorted once per fit.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::mlp::softmax_rows;
use super::tree::N_CLASSES;
use crate::data::MentalState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: ArrayView2<f64>, r: usize) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[[r, *feature]] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    /// `rounds[r][k]` is the tree for class `k` in round `r`.
    pub rounds: Vec<Vec<RegressionTree>>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    g: f64,
    h: f64,
    last: Option<f64>,
}

impl GradientBoosting {
    pub fn fit(x: ArrayView2<f64>, y: &[MentalState], params: &BoostParams) -> Self {
        let n = y.len();
        let sorted: Vec<Vec<usize>> = (0..x.ncols())
            .map(|f| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
                idx
            })
            .collect();
        let mut scores = Array2::<f64>::zeros((n, N_CLASSES));
        let mut rounds = Vec::with_capacity(params.n_rounds);
        for _ in 0..params.n_rounds {
            let p = softmax_rows(scores.clone());
            let mut trees = Vec::with_capacity(N_CLASSES);
            for k in 0..N_CLASSES {
                let g: Vec<f64> = (0..n)
                    .map(|i| p[[i, k]] - if y[i].index() == k { 1.0 } else { 0.0 })
                    .collect();
                let h: Vec<f64> = (0..n).map(|i| (p[[i, k]] * (1.0 - p[[i, k]])).max(1e-16)).collect();
                let (tree, leaf_of) = grow(x, &sorted, &g, &h, params);
                for i in 0..n {
                    if let RegNode::Leaf { value } = tree.nodes[leaf_of[i]] {
                        scores[[i, k]] += value;
                    }
                }
                trees.push(tree);
            }
            rounds.push(trees);
        }
        Self { rounds }
    }

    pub fn decision_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut s = Array2::zeros((x.nrows(), N_CLASSES));
        for trees in &self.rounds {
            for (k, t) in trees.iter().enumerate() {
                for r in 0..x.nrows() {
                    s[[r, k]] += t.predict_row(x, r);
                }
            }
        }
        s
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        softmax_rows(self.decision_scores(x))
    }
}

/// Grows one tree; also returns each training row's leaf node id.
fn grow(
    x: ArrayView2<f64>,
    sorted: &[Vec<usize>],
    g: &[f64],
    h: &[f64],
    params: &BoostParams,
) -> (RegressionTree, Vec<usize>) {
    let n = g.len();
    let lambda = params.lambda;
    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    let mut node_of = vec![0usize; n];
    // (node id, G, H) of nodes still open for splitting.
    let mut open: Vec<(usize, f64, f64)> = vec![(0, g.iter().sum(), h.iter().sum())];

    let leaf_value = |gs: f64, hs: f64| -gs / (hs + lambda) * params.learning_rate;
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);

    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let mut slot_of = vec![None; nodes.len()];
        for (s, &(id, _, _)) in open.iter().enumerate() {
            slot_of[id] = Some(s);
        }
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        let mut acc = vec![Acc::default(); open.len()];
        for (f, order) in sorted.iter().enumerate() {
            acc.iter_mut().for_each(|a| *a = Acc::default());
            for &i in order {
                let Some(s) = slot_of[node_of[i]] else {
                    continue;
                };
                let v = x[[i, f]];
                let a = acc[s];
                if let Some(prev) = a.last {
                    if prev < v {
                        let (_, gt, ht) = open[s];
                        let (gr, hr) = (gt - a.g, ht - a.h);
                        if a.h >= params.min_child_weight && hr >= params.min_child_weight {
                            let gain = 0.5 * (score(a.g, a.h) + score(gr, hr) - score(gt, ht));
                            if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: prev,
                                });
                            }
                        }
                    }
                }
                let a = &mut acc[s];
                a.g += g[i];
                a.h += h[i];
                a.last = Some(v);
            }
        }

        let mut next_open = Vec::new();
        let mut child_of = vec![None; open.len()];
        for (s, cand) in best.iter().enumerate() {
            let Some(c) = cand else { continue };
            let l = nodes.len();
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes[open[s].0] = RegNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: l,
                right: l + 1,
            };
            child_of[s] = Some((l, c.feature, c.threshold));
        }
        let mut sums = std::collections::HashMap::<usize, (f64, f64)>::new();
        for i in 0..n {
            if let Some(s) = slot_of[node_of[i]] {
                if let Some((l, f, t)) = child_of[s] {
                    node_of[i] = if x[[i, f]] <= t { l } else { l + 1 };
                    let e = sums.entry(node_of[i]).or_insert((0.0, 0.0));
                    e.0 += g[i];
                    e.1 += h[i];
                }
            }
        }
        for (s, c) in child_of.iter().enumerate() {
            if let Some((l, _, _)) = c {
                for id in [*l, l + 1] {
                    let (gs, hs) = sums.get(&id).copied().unwrap_or((0.0, 0.0));
                    next_open.push((id, gs, hs));
                }
            } else {
                let (id, gs, hs) = open[s];
                nodes[id] = RegNode::Leaf {
                    value: leaf_value(gs, hs),
                };
            }
        }
        open = next_open;
    }
    for (id, gs, hs) in open {
        nodes[id] = RegNode::Leaf {
            value: leaf_value(gs, hs),
        };
    }
    (RegressionTree { nodes }, node_of)
}

impl GradientBoosting {
    pub fn n_trees(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn learns_a_threshold() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = [
            MentalState::Focused,
            MentalState::Focused,
            MentalState::Unfocused,
            MentalState::Unfocused,
            MentalState::Drowsed,
            MentalState::Drowsed,
        ];
        let params = BoostParams {
            n_rounds: 30,
            max_depth: 2,
            learning_rate: 0.3,
            lambda: 1.0,
            min_child_weight: 0.0,
        };
        let m = GradientBoosting::fit(x.view(), &y, &params);
        let p = m.predict_proba(x.view());
        for (r, t) in y.iter().enumerate() {
            let row = p.row(r);
            let arg = (0..3).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            assert_eq!(arg, t.index());
        }
        assert_eq!(m.n_trees(), 90);
    }
}
