use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::N_CLASSES;
use crate::data::MentalState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
}

/// One-vs-rest linear SVMs.
///
/// Each binary problem minimizes `λ/2·‖w‖² + mean(hinge)` with
/// `λ = 1/(C·n)` by Pegasos stochastic subgradient steps (`η_t = 1/(λt)`,
/// projection onto the ball of radius `1/√λ`). The bias is an extra
/// constant input and is regularized with the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// `N_CLASSES × (d + 1)`, bias in the last column.
    pub weights: Array2<f64>,
}

impl LinearSvm {
    pub fn fit(x: ArrayView2<f64>, y: &[MentalState], params: &SvmParams, seed: u64) -> Self {
        let (n, d) = x.dim();
        let lambda = 1.0 / (params.c * n as f64);
        let radius = 1.0 / lambda.sqrt();
        let mut weights = Array2::zeros((N_CLASSES, d + 1));
        for k in 0..N_CLASSES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut w = Array1::<f64>::zeros(d + 1);
            let mut order: Vec<usize> = (0..n).collect();
            let mut t = 0usize;
            for _ in 0..params.epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    let target = if y[i].index() == k { 1.0 } else { -1.0 };
                    let xi = x.row(i);
                    let margin = target * (w.slice(ndarray::s![..d]).dot(&xi) + w[d]);
                    w *= 1.0 - eta * lambda;
                    if margin < 1.0 {
                        w.slice_mut(ndarray::s![..d]).scaled_add(eta * target, &xi);
                        w[d] += eta * target;
                    }
                    let norm = w.dot(&w).sqrt();
                    if norm > radius {
                        w *= radius / norm;
                    }
                }
            }
            weights.row_mut(k).assign(&w);
        }
        Self { weights }
    }

    pub fn decision_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let w = self.weights.slice(ndarray::s![.., ..d]);
        let mut s = x.dot(&w.t());
        s += &self.weights.index_axis(Axis(1), d);
        s
    }
}
