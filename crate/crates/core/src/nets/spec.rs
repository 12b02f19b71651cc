use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Target, FEATURE_NAMES};

pub const EMBEDDING_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Cnn,
    Fcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Fcn, ModelKind::Cnn, ModelKind::Lstm];

    /// Hidden layer widths.
    pub fn default_layer_sizes(self) -> Vec<usize> {
        match self {
            ModelKind::Lstm => vec![128, 64, 64, 16],
            ModelKind::Cnn => vec![128, 128, 16],
            ModelKind::Fcn => vec![128, 64, 16],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Cnn => "cnn",
            ModelKind::Fcn => "fcn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelKind::Lstm),
            "cnn" => Ok(ModelKind::Cnn),
            "fcn" => Ok(ModelKind::Fcn),
            _ => Err(Error::Schema(format!("unknown model kind `{s}`"))),
        }
    }
}

/// Architecture description.
///
/// * `Lstm`: BiLSTM(64+64, sequences) → BiLSTM(32+32, last step) → dense 64 → dense 16
/// * `Cnn`: conv1d(128 filters, same padding) → temporal mean → dense 128 → dense 16
/// * `Fcn`: flatten → dense 128 → dense 64 → dense 16
///
/// Every hidden dense/conv layer is followed by batch norm (when enabled),
/// ReLU and dropout; a linear softmax layer produces the class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub target: Target,
    pub layer_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub batchnorm: bool,
    pub num_classes: usize,
    pub window_length: usize,
    /// Input column names; the input width is their count.
    pub input_features: Vec<String>,
    pub kernel_width: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, target: Target) -> Self {
        Self {
            kind,
            target,
            layer_sizes: kind.default_layer_sizes(),
            dropout_rate: 0.2,
            batchnorm: true,
            num_classes: target.num_classes(),
            window_length: crate::encoding::DEFAULT_WINDOW,
            input_features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            kernel_width: 3,
        }
    }

    pub fn with_features(mut self, names: Vec<String>) -> Self {
        self.input_features = names;
        self
    }

    pub fn input_width(&self) -> usize {
        self.input_features.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Schema(m));
        if self.layer_sizes != self.kind.default_layer_sizes() {
            return fail(format!(
                "{} layer sizes must be {:?}, got {:?}",
                self.kind,
                self.kind.default_layer_sizes(),
                self.layer_sizes
            ));
        }
        if self.layer_sizes.last() != Some(&EMBEDDING_DIM) {
            return fail("final hidden layer must have 16 units".into());
        }
        if self.kind == ModelKind::Lstm && self.layer_sizes[..2].iter().any(|s| s % 2 != 0) {
            return fail("bidirectional widths must be even".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.num_classes < 2 || self.num_classes != self.target.num_classes() {
            return fail(format!(
                "{} classes does not fit target {}",
                self.num_classes, self.target
            ));
        }
        if self.window_length == 0 || self.input_features.is_empty() {
            return fail("empty input shape".into());
        }
        if self.kernel_width == 0 || self.kernel_width % 2 == 0 {
            return fail(format!("kernel width {} must be odd", self.kernel_width));
        }
        Ok(())
    }
}

/// Optimizer and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a test-accuracy improvement.
    pub patience: usize,
    /// Cap on minibatches per epoch (a fresh shuffle each epoch); 0 means a full pass.
    pub batches_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 50,
            patience: 10,
            batches_per_epoch: 0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Input(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// Epoch index and value of the best test accuracy (earliest on ties).
    pub fn best(&self) -> Option<(usize, f64)> {
        self.test_accuracy
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (i, a)| match best {
                Some((_, b)) if b >= a => best,
                _ => Some((i, a)),
            })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_accuracy,test_accuracy\n");
        for i in 0..self.epochs() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.train_loss[i],
                self.train_accuracy[i],
                self.test_accuracy[i]
            ));
        }
        s
    }
}
