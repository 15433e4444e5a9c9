//! Epoch loop with plateau learning-rate halving and early stopping.
//!
//! Both mechanisms watch validation accuracy and count epochs without a
//! strict improvement (`acc > best + min_improvement_delta`). The scheduler
//! halves the learning rate when its counter reaches
//! `lr_halving_patience` and then resets the counter. Early stopping keeps
//! its own counter, which a halving does not touch, and stops the run when
//! it reaches `early_stop_patience`. The returned weights are always the
//! snapshot taken at the best validation epoch.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MentalState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_halving_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub min_improvement_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            lr_halving_patience: 3,
            early_stop_patience: 10,
            max_epochs: 200,
            min_improvement_delta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::BadArgs(format!("initial_lr {}", self.initial_lr)));
        }
        if self.lr_halving_patience < 1 || self.early_stop_patience < 1 {
            return Err(Error::BadArgs("patience values must be ≥ 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::BadArgs("max_epochs must be ≥ 1".into()));
        }
        if self.min_improvement_delta.is_nan() || self.min_improvement_delta < 0.0 {
            return Err(Error::BadArgs("min_improvement_delta must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochEvent {
    Improved,
    Halved,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
    /// Learning rate used during this epoch; `None` for one-pass models.
    pub learning_rate: Option<f64>,
    pub events: BTreeSet<EpochEvent>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl History {
    pub fn halvings(&self) -> usize {
        self.count(EpochEvent::Halved)
    }

    pub fn stopped_early(&self) -> bool {
        self.count(EpochEvent::Stopped) > 0
    }

    fn count(&self, e: EpochEvent) -> usize {
        self.epochs.iter().filter(|r| r.events.contains(&e)).count()
    }

    /// CSV with columns `epoch,lr,train_loss,train_acc,val_loss,val_acc,events`;
    /// events are `|`-separated.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("epoch,lr,train_loss,train_acc,val_loss,val_acc,events\n");
        for r in &self.epochs {
            let events: Vec<&str> = r
                .events
                .iter()
                .map(|e| match e {
                    EpochEvent::Improved => "improved",
                    EpochEvent::Halved => "halved",
                    EpochEvent::Stopped => "stopped",
                })
                .collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.epoch,
                opt(r.learning_rate),
                r.train_loss,
                r.train_accuracy,
                opt(r.validation_loss),
                opt(r.validation_accuracy),
                events.join("|")
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Halves the learning rate after `patience` epochs without improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    best: Option<f64>,
    stagnant: usize,
    patience: usize,
    delta: f64,
}

impl PlateauScheduler {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            lr: config.initial_lr,
            best: None,
            stagnant: 0,
            patience: config.lr_halving_patience,
            delta: config.min_improvement_delta,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation accuracy; returns `true` if the rate
    /// was halved.
    pub fn step(&mut self, validation_accuracy: f64) -> bool {
        if improves(self.best, validation_accuracy, self.delta) {
            self.best = Some(validation_accuracy);
            self.stagnant = 0;
            return false;
        }
        self.stagnant += 1;
        if self.stagnant >= self.patience {
            self.lr /= 2.0;
            self.stagnant = 0;
            true
        } else {
            false
        }
    }
}

fn improves(best: Option<f64>, acc: f64, delta: f64) -> bool {
    match best {
        None => true,
        Some(b) => acc > b + delta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop { best_epoch: usize },
}

/// Stops after `patience` consecutive epochs without improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    best: Option<f64>,
    best_epoch: usize,
    epoch: usize,
    stagnant: usize,
    patience: usize,
    delta: f64,
}

impl EarlyStopping {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            best: None,
            best_epoch: 0,
            epoch: 0,
            stagnant: 0,
            patience: config.early_stop_patience,
            delta: config.min_improvement_delta,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best
    }

    /// Whether the most recent call recorded an improvement.
    pub fn just_improved(&self) -> bool {
        self.epoch > 0 && self.best_epoch == self.epoch
    }

    pub fn check(&mut self, validation_accuracy: f64) -> StopDecision {
        self.epoch += 1;
        if improves(self.best, validation_accuracy, self.delta) {
            self.best = Some(validation_accuracy);
            self.best_epoch = self.epoch;
            self.stagnant = 0;
            return StopDecision::Continue;
        }
        self.stagnant += 1;
        if self.stagnant >= self.patience {
            StopDecision::Stop {
                best_epoch: self.best_epoch,
            }
        } else {
            StopDecision::Continue
        }
    }
}

/// A model the epoch loop can drive.
pub trait Trainable: Clone {
    /// One pass over `order` (indices into `x`/`y`) at learning rate `lr`.
    fn train_epoch(&mut self, x: ArrayView2<f64>, y: &[MentalState], order: &[usize], lr: f64) -> Result<()>;

    /// Mean loss and accuracy on a labeled set.
    fn evaluate(&self, x: ArrayView2<f64>, y: &[MentalState]) -> Result<(f64, f64)>;
}

/// Runs the epoch loop and returns the best-validation snapshot with the
/// full history. Training order is reshuffled every epoch from `seed`.
pub fn train_loop<T: Trainable>(
    mut model: T,
    train: (ArrayView2<f64>, &[MentalState]),
    validation: (ArrayView2<f64>, &[MentalState]),
    config: &TrainConfig,
    seed: u64,
) -> Result<(T, History)> {
    config.validate()?;
    if train.1.is_empty() {
        return Err(Error::EmptyTrain);
    }
    if validation.1.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scheduler = PlateauScheduler::new(config);
    let mut stopper = EarlyStopping::new(config);
    let mut order: Vec<usize> = (0..train.1.len()).collect();
    let mut best = model.clone();
    let mut history = History::default();

    for epoch in 1..=config.max_epochs {
        let lr = scheduler.lr();
        order.shuffle(&mut rng);
        model.train_epoch(train.0, train.1, &order, lr)?;
        let (train_loss, train_accuracy) = model.evaluate(train.0, train.1)?;
        let (val_loss, val_acc) = model.evaluate(validation.0, validation.1)?;

        let mut events = BTreeSet::new();
        if scheduler.step(val_acc) {
            events.insert(EpochEvent::Halved);
        }
        let decision = stopper.check(val_acc);
        if stopper.just_improved() {
            events.insert(EpochEvent::Improved);
            best = model.clone();
        }
        if let StopDecision::Stop { .. } = decision {
            events.insert(EpochEvent::Stopped);
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            validation_loss: Some(val_loss),
            validation_accuracy: Some(val_acc),
            learning_rate: Some(lr),
            events,
        });
        if decision != StopDecision::Continue {
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok((best, history))
}
