//! Classifiers behind one interface: three MLP architectures, a random
//! forest, one-vs-rest linear SVMs, and gradient-boosted trees.
//!
//! Hyperparameters live in a string-keyed map on [`ClassifierSpec`] so
//! they can be echoed into reports and overridden from the command line.
//! Each kind accepts a fixed key set ([`ModelKind::default_hyperparameters`]);
//! anything else is rejected.

pub mod boost;
pub mod forest;
pub mod mlp;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::MentalState;
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::training::{train_loop, EpochRecord, History, TrainConfig};

use boost::{BoostParams, GradientBoosting};
use forest::{ForestParams, RandomForest};
use mlp::{Activation, MlpModel, MlpTrainer};
use svm::{LinearSvm, SvmParams};
use tree::TreeParams;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Dnn4Small,
    Dnn4Large,
    Dnn6,
    RandomForest,
    Svm,
    GradBoost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::RandomForest,
        ModelKind::Svm,
        ModelKind::GradBoost,
        ModelKind::Dnn4Large,
        ModelKind::Dnn6,
        ModelKind::Dnn4Small,
    ];

    /// Position in the best-accuracy table: forest, SVM, boosting, the
    /// large four-hidden-layer net, the six-hidden-layer net, then the
    /// small four-hidden-layer net.
    pub fn table_rank(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed")
    }

    pub fn is_mlp(self) -> bool {
        matches!(self, ModelKind::Dnn4Small | ModelKind::Dnn4Large | ModelKind::Dnn6)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::Dnn4Small => "dnn4-small",
            ModelKind::Dnn4Large => "dnn4",
            ModelKind::Dnn6 => "dnn6",
            ModelKind::RandomForest => "rf",
            ModelKind::Svm => "svm",
            ModelKind::GradBoost => "xgb",
        }
    }

    /// Layer widths from input to output.
    pub fn layer_sizes(self) -> Option<Vec<usize>> {
        let hidden: &[usize] = match self {
            ModelKind::Dnn4Small => &[64, 128, 64],
            ModelKind::Dnn4Large => &[512, 1024, 512],
            ModelKind::Dnn6 => &[512, 512, 1024, 2048, 1024],
            _ => return None,
        };
        let mut sizes = vec![FEATURE_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(MentalState::ALL.len());
        Some(sizes)
    }

    /// Dropout after each hidden layer: 50% after the 2048-wide layer of
    /// the six-layer net, none elsewhere.
    pub fn dropout(self) -> Vec<f64> {
        match self.layer_sizes() {
            None => Vec::new(),
            Some(sizes) => sizes[1..sizes.len() - 1]
                .iter()
                .map(|&w| if self == ModelKind::Dnn6 && w == 2048 { 0.5 } else { 0.0 })
                .collect(),
        }
    }

    pub fn default_hyperparameters(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            ModelKind::Dnn4Small | ModelKind::Dnn4Large | ModelKind::Dnn6 => {
                &[("momentum", 0.9), ("batch_size", 64.0)]
            }
            ModelKind::RandomForest => &[
                ("n_trees", 100.0),
                ("max_depth", 0.0),
                ("max_features", 15.0),
                ("min_samples_split", 2.0),
                ("bootstrap", 1.0),
            ],
            ModelKind::Svm => &[("c", 1.0), ("epochs", 20.0)],
            ModelKind::GradBoost => &[
                ("n_rounds", 100.0),
                ("max_depth", 3.0),
                ("learning_rate", 0.1),
                ("lambda", 1.0),
                ("min_child_weight", 1.0),
            ],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" | "random-forest" => Ok(ModelKind::RandomForest),
            "svm" => Ok(ModelKind::Svm),
            "xgb" | "gradboost" | "grad-boost" => Ok(ModelKind::GradBoost),
            "dnn4" | "dnn4-large" => Ok(ModelKind::Dnn4Large),
            "dnn4-small" => Ok(ModelKind::Dnn4Small),
            "dnn6" => Ok(ModelKind::Dnn6),
            other => Err(Error::BadArgs(format!(
                "unknown model {other:?}; valid kinds: rf, svm, xgb, dnn4, dnn4-small, dnn6"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ModelKind,
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpParams {
    pub momentum: f64,
    pub batch_size: usize,
}

/// Typed view of a spec's hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Mlp(MlpParams),
    Forest(ForestParams),
    Svm(SvmParams),
    Boost(BoostParams),
}

impl ClassifierSpec {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            kind,
            hyperparameters: kind.default_hyperparameters(),
            seed,
        }
    }

    /// Overrides one hyperparameter; unknown keys are rejected.
    pub fn with(mut self, key: &str, value: f64) -> Result<Self> {
        if !self.kind.default_hyperparameters().contains_key(key) {
            return Err(Error::UnknownHyperparameter {
                kind: self.kind,
                key: key.to_string(),
            });
        }
        self.hyperparameters.insert(key.to_string(), value);
        Ok(self)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let defaults = self.kind.default_hyperparameters();
        if let Some(k) = self.hyperparameters.keys().find(|k| !defaults.contains_key(*k)) {
            return Err(Error::UnknownHyperparameter {
                kind: self.kind,
                key: k.clone(),
            });
        }
        let get = |k: &str| self.hyperparameters.get(k).copied().unwrap_or(defaults[k]);
        let count = |k: &str| -> Result<usize> {
            let v = get(k);
            if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::BadArgs(format!("{k} must be a non-negative integer, got {v}")));
            }
            Ok(v as usize)
        };
        let positive = |k: &str| -> Result<f64> {
            let v = get(k);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::BadArgs(format!("{k} must be positive, got {v}")));
            }
            Ok(v)
        };
        Ok(match self.kind {
            ModelKind::Dnn4Small | ModelKind::Dnn4Large | ModelKind::Dnn6 => Resolved::Mlp(MlpParams {
                momentum: get("momentum"),
                batch_size: count("batch_size")?.max(1),
            }),
            ModelKind::RandomForest => Resolved::Forest(ForestParams {
                n_trees: count("n_trees")?.max(1),
                tree: TreeParams {
                    max_depth: match count("max_depth")? {
                        0 => None,
                        d => Some(d),
                    },
                    max_features: count("max_features")?.max(1),
                    min_samples_split: count("min_samples_split")?,
                },
                bootstrap: get("bootstrap") != 0.0,
            }),
            ModelKind::Svm => Resolved::Svm(SvmParams {
                c: positive("c")?,
                epochs: count("epochs")?.max(1),
            }),
            ModelKind::GradBoost => Resolved::Boost(BoostParams {
                n_rounds: count("n_rounds")?.max(1),
                max_depth: count("max_depth")?.max(1),
                learning_rate: positive("learning_rate")?,
                lambda: get("lambda").max(0.0),
                min_child_weight: get("min_child_weight").max(0.0),
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "state", rename_all = "kebab-case")]
pub enum FittedState {
    Mlp(MlpModel),
    Forest(RandomForest),
    Svm(LinearSvm),
    Boost(GradientBoosting),
}

/// A fitted classifier with its training history, serializable as a
/// versioned JSON bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ClassifierSpec,
    pub state: Option<FittedState>,
    pub history: History,
}

impl TrainedModel {
    pub fn unfitted(spec: ClassifierSpec) -> Self {
        Self {
            format_version: BUNDLE_FORMAT_VERSION,
            spec,
            state: None,
            history: History::default(),
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.history.best_epoch
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: TrainedModel = serde_json::from_str(&text)?;
        if m.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::BadArgs(format!(
                "unsupported model bundle version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<MentalState>,
    /// Class probabilities; for the SVM, a softmax over decision scores.
    pub probabilities: Array2<f64>,
}

/// Fits `spec` on standardized features.
///
/// MLP kinds run the scheduled epoch loop under `config` and need a
/// validation set. Tree and SVM kinds fit in one pass and use the
/// validation set only for the reported history.
pub fn fit(
    spec: &ClassifierSpec,
    train: (ArrayView2<f64>, &[MentalState]),
    validation: (ArrayView2<f64>, &[MentalState]),
    config: &TrainConfig,
) -> Result<TrainedModel> {
    if train.1.is_empty() {
        return Err(Error::EmptyTrain);
    }
    for (x, y) in [train, validation] {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
    }
    let resolved = spec.resolve()?;
    let (state, history) = match resolved {
        Resolved::Mlp(p) => {
            if validation.1.is_empty() {
                return Err(Error::MissingValidation(spec.kind));
            }
            let model = MlpModel::new(
                &spec.kind.layer_sizes().expect("mlp kind"),
                Activation::Relu,
                spec.kind.dropout(),
                spec.seed,
            )?;
            let trainer = MlpTrainer::new(model, p.momentum, p.batch_size, spec.seed ^ 0xD0D0);
            let (best, history) = train_loop(trainer, train, validation, config, spec.seed)?;
            (FittedState::Mlp(best.model), history)
        }
        Resolved::Forest(p) => (
            FittedState::Forest(RandomForest::fit(train.0, train.1, &p, spec.seed)),
            History::default(),
        ),
        Resolved::Svm(p) => (
            FittedState::Svm(LinearSvm::fit(train.0, train.1, &p, spec.seed)),
            History::default(),
        ),
        Resolved::Boost(p) => (
            FittedState::Boost(GradientBoosting::fit(train.0, train.1, &p)),
            History::default(),
        ),
    };
    let mut model = TrainedModel {
        format_version: BUNDLE_FORMAT_VERSION,
        spec: spec.clone(),
        state: Some(state),
        history,
    };
    if model.history.epochs.is_empty() {
        model.history = one_pass_history(&model, train, validation)?;
    }
    Ok(model)
}

fn one_pass_history(
    model: &TrainedModel,
    train: (ArrayView2<f64>, &[MentalState]),
    validation: (ArrayView2<f64>, &[MentalState]),
) -> Result<History> {
    let score = |(x, y): (ArrayView2<f64>, &[MentalState])| -> Result<(f64, f64)> {
        let p = predict(model, x)?;
        Ok((mlp::cross_entropy(&p.probabilities, y), accuracy(&p.labels, y)?))
    };
    let (train_loss, train_accuracy) = score(train)?;
    let (validation_loss, validation_accuracy) = if validation.1.is_empty() {
        (None, None)
    } else {
        let (l, a) = score(validation)?;
        (Some(l), Some(a))
    };
    Ok(History {
        epochs: vec![EpochRecord {
            epoch: 1,
            train_loss,
            train_accuracy,
            validation_loss,
            validation_accuracy,
            learning_rate: None,
            events: Default::default(),
        }],
        best_epoch: 1,
    })
}

/// Predicted labels (argmax, ties to the lower class index) and class
/// probabilities.
pub fn predict(model: &TrainedModel, x: ArrayView2<f64>) -> Result<Predictions> {
    let state = model.state.as_ref().ok_or(Error::NotFitted)?;
    if x.ncols() != FEATURE_DIM && !matches!(state, FittedState::Mlp(_)) {
        return Err(Error::ShapeMismatch(format!(
            "expected {FEATURE_DIM} features, got {}",
            x.ncols()
        )));
    }
    let probabilities = match state {
        FittedState::Mlp(m) => m.forward(x)?,
        FittedState::Forest(f) => f.predict_proba(x),
        FittedState::Svm(s) => mlp::softmax_rows(s.decision_scores(x)),
        FittedState::Boost(b) => b.predict_proba(x),
    };
    let labels = match state {
        // Margins decide for the SVM; the softmax only rescales them.
        FittedState::Svm(s) => argmax_rows(&s.decision_scores(x)),
        _ => argmax_rows(&probabilities),
    };
    Ok(Predictions {
        labels,
        probabilities,
    })
}

pub fn argmax_rows(scores: &Array2<f64>) -> Vec<MentalState> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            MentalState::from_index(best).expect("three classes")
        })
        .collect()
}

/// Fraction of exact label matches.
pub fn accuracy(predictions: &[MentalState], truth: &[MentalState]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use MentalState::*;

    #[test]
    fn argmax_and_ties() {
        let p = array![[0.2, 0.5, 0.3], [0.5, 0.5, 0.0], [0.1, 0.45, 0.45]];
        assert_eq!(argmax_rows(&p), vec![Unfocused, Focused, Unfocused]);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[Focused, Drowsed], &[Focused, Drowsed]).unwrap(), 1.0);
        assert_eq!(
            accuracy(
                &[Focused, Drowsed, Drowsed, Unfocused],
                &[Focused, Drowsed, Drowsed, Drowsed]
            )
            .unwrap(),
            0.75
        );
        assert!(matches!(
            accuracy(&[Focused], &[Focused, Focused]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(accuracy(&[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn every_kind_has_defaults_and_rejects_unknown_keys() {
        for kind in ModelKind::ALL {
            let spec = ClassifierSpec::new(kind, 0);
            spec.resolve().unwrap();
            assert!(matches!(
                spec.clone().with("nope", 1.0),
                Err(Error::UnknownHyperparameter { .. })
            ));
            let mut raw = spec;
            raw.hyperparameters.insert("bogus".into(), 1.0);
            assert!(raw.resolve().is_err());
        }
    }

    #[test]
    fn architectures() {
        assert_eq!(
            ModelKind::Dnn6.layer_sizes().unwrap(),
            vec![252, 512, 512, 1024, 2048, 1024, 3]
        );
        assert_eq!(ModelKind::Dnn6.dropout(), vec![0.0, 0.0, 0.0, 0.5, 0.0]);
        assert_eq!(ModelKind::Dnn4Large.dropout(), vec![0.0; 3]);
        assert_eq!(ModelKind::RandomForest.layer_sizes(), None);
    }

    #[test]
    fn names_parse() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.short_name().parse::<ModelKind>().unwrap(), kind);
        }
        let err = "lstm".parse::<ModelKind>().unwrap_err().to_string();
        assert!(err.contains("rf, svm, xgb"));
    }

    #[test]
    fn unfitted_model_cannot_predict() {
        let m = TrainedModel::unfitted(ClassifierSpec::new(ModelKind::Svm, 0));
        assert!(matches!(
            predict(&m, Array2::zeros((1, FEATURE_DIM)).view()),
            Err(Error::NotFitted)
        ));
    }

    #[test]
    fn mlp_needs_validation() {
        let x = Array2::zeros((4, FEATURE_DIM));
        let y = [Focused, Unfocused, Drowsed, Focused];
        let empty = Array2::zeros((0, FEATURE_DIM));
        let err = fit(
            &ClassifierSpec::new(ModelKind::Dnn4Small, 0),
            (x.view(), &y),
            (empty.view(), &[]),
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingValidation(ModelKind::Dnn4Small)));
        assert!(matches!(
            fit(
                &ClassifierSpec::new(ModelKind::Svm, 0),
                (empty.view(), &[]),
                (empty.view(), &[]),
                &TrainConfig::default()
            ),
            Err(Error::EmptyTrain)
        ));
    }
}
