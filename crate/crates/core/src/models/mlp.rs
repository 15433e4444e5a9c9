//! Fully connected networks with softmax output and cross-entropy loss.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MentalState;
use crate::error::{Error, Result};
use crate::training::Trainable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Smooth stand-in used when checking gradients numerically.
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in × fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    /// Dropout rate applied after each hidden layer's activation (0 = none).
    pub dropout: Vec<f64>,
}

/// Per-layer gradients, in the same layout as [`MlpModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

struct ForwardCache {
    /// Input followed by every hidden activation (post-dropout).
    activations: Vec<Array2<f64>>,
    /// Scaled keep masks per hidden layer, when dropout was active.
    masks: Vec<Option<Array2<f64>>>,
    probabilities: Array2<f64>,
}

impl MlpModel {
    /// Initializes weights uniformly in `±1/√fan_in`; biases start at zero.
    pub fn new(sizes: &[usize], hidden_activation: Activation, dropout: Vec<f64>, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::ShapeMismatch("an MLP needs at least two layer sizes".into()));
        }
        if dropout.len() != sizes.len() - 2 {
            return Err(Error::ShapeMismatch(format!(
                "{} dropout rates for {} hidden layers",
                dropout.len(),
                sizes.len() - 2
            )));
        }
        if dropout.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(Error::BadArgs("dropout rates must lie in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || {
                        rng.random_range(-bound..bound)
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self {
            layers,
            hidden_activation,
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.ncols()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        Gradients {
            layers: self.layers.clone(),
        }
        .flat()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::LengthMismatch {
                expected: self.parameter_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|p| *p = *it.next().expect("length checked"));
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Class probabilities for each row of `x`; dropout is inactive.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.run_forward(x, None).probabilities)
    }

    fn run_forward(&self, x: ArrayView2<f64>, mut dropout_rng: Option<&mut ChaCha8Rng>) -> ForwardCache {
        let mut activations = vec![x.to_owned()];
        let mut masks = Vec::with_capacity(self.dropout.len());
        let last = self.layers.len() - 1;
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights);
            z += &layer.bias;
            if i == last {
                logits = Some(z);
                break;
            }
            self.hidden_activation.apply(&mut z);
            let rate = self.dropout[i];
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let m = Array2::from_shape_simple_fn(z.raw_dim(), || {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    z *= &m;
                    Some(m)
                }
                _ => None,
            };
            masks.push(mask);
            activations.push(z);
        }
        ForwardCache {
            activations,
            masks,
            probabilities: softmax_rows(logits.expect("at least one layer")),
        }
    }

    /// Mean cross-entropy loss and its gradient for a batch. With
    /// `dropout_rng`, one dropout mask is drawn and shared by the forward
    /// and backward pass.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        targets: &[MentalState],
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        self.check_input(&x)?;
        if targets.len() != x.nrows() || x.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} rows with {} targets",
                x.nrows(),
                targets.len()
            )));
        }
        let cache = self.run_forward(x, dropout_rng);
        let n = x.nrows() as f64;
        let loss = cross_entropy(&cache.probabilities, targets);

        let mut delta = cache.probabilities.clone();
        for (mut row, t) in delta.axis_iter_mut(Axis(0)).zip(targets) {
            row[t.index()] -= 1.0;
        }
        delta /= n;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &cache.activations[i];
            grads.push(Dense {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i == 0 {
                break;
            }
            let mut back = delta.dot(&self.layers[i].weights.t());
            if let Some(mask) = &cache.masks[i - 1] {
                back *= mask;
                // Chain through the pre-dropout activation: a = mask · f(z).
                Zip::from(&mut back)
                    .and(input)
                    .and(mask)
                    .for_each(|b, &a, &m| {
                        if m != 0.0 {
                            *b *= self.hidden_activation.derivative_from_output(a / m);
                        }
                    });
            } else {
                let act = self.hidden_activation;
                Zip::from(&mut back)
                    .and(input)
                    .for_each(|b, &a| *b *= act.derivative_from_output(a));
            }
            delta = back;
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// Mean loss and accuracy without dropout.
    pub fn evaluate(&self, x: ArrayView2<f64>, y: &[MentalState]) -> Result<(f64, f64)> {
        let p = self.forward(x)?;
        let labels = super::argmax_rows(&p);
        Ok((cross_entropy(&p, y), super::accuracy(&labels, y)?))
    }
}

pub fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    z
}

/// Mean negative log-likelihood, with probabilities clamped at 1e-300.
pub fn cross_entropy(p: &Array2<f64>, targets: &[MentalState]) -> f64 {
    let total: f64 = p
        .axis_iter(Axis(0))
        .zip(targets)
        .map(|(row, t)| -row[t.index()].max(1e-300).ln())
        .sum();
    total / targets.len() as f64
}

/// SGD with classical momentum: `v ← μ·v − lr·g`, `θ ← θ + v`.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    pub momentum: f64,
    velocity: Vec<Dense>,
}

impl MomentumSgd {
    pub fn new(model: &MlpModel, momentum: f64) -> Self {
        Self {
            momentum,
            velocity: model
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        let mu = self.momentum;
        for ((layer, v), g) in model.layers.iter_mut().zip(&mut self.velocity).zip(&grads.layers) {
            Zip::from(&mut v.weights)
                .and(&g.weights)
                .for_each(|v, &g| *v = mu * *v - lr * g);
            Zip::from(&mut v.bias)
                .and(&g.bias)
                .for_each(|v, &g| *v = mu * *v - lr * g);
            layer.weights += &v.weights;
            layer.bias += &v.bias;
        }
    }
}

/// An MLP together with its optimizer state, driven by the epoch loop.
#[derive(Debug, Clone)]
pub struct MlpTrainer {
    pub model: MlpModel,
    pub optimizer: MomentumSgd,
    pub batch_size: usize,
    rng: ChaCha8Rng,
}

impl MlpTrainer {
    pub fn new(model: MlpModel, momentum: f64, batch_size: usize, seed: u64) -> Self {
        Self {
            optimizer: MomentumSgd::new(&model, momentum),
            model,
            batch_size: batch_size.max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Trainable for MlpTrainer {
    fn train_epoch(&mut self, x: ArrayView2<f64>, y: &[MentalState], order: &[usize], lr: f64) -> Result<()> {
        for batch in order.chunks(self.batch_size) {
            let bx = x.select(Axis(0), batch);
            let by: Vec<MentalState> = batch.iter().map(|&i| y[i]).collect();
            let (_, grads) = self
                .model
                .loss_and_gradients(bx.view(), &by, Some(&mut self.rng))?;
            self.optimizer.step(&mut self.model, &grads, lr);
        }
        Ok(())
    }

    fn evaluate(&self, x: ArrayView2<f64>, y: &[MentalState]) -> Result<(f64, f64)> {
        self.model.evaluate(x, y)
    }
}
