//! Classifiers trained from scratch: BiLSTM, 1-D CNN and fully connected.

mod act;
mod check;
mod io;
mod layers;
mod lstm;
mod model;
mod params;
mod spec;
mod train;

pub use act::Act;
pub use check::{model_grad_check, Coverage, ModelGradCheck, TensorCheck};
pub use io::{decode_f64s, encode_f64s, load, save, ModelFile, TensorRecord, FORMAT_VERSION};
pub use layers::{BnStats, Mode, BN_EPSILON, BN_MOMENTUM};
pub use model::{build, update_running_stats, ForwardOutput, LossGrads, Network};
pub use params::{flatten_grads, ModelParams, Param};
pub use spec::{ModelKind, ModelSpec, TrainConfig, TrainHistory, EMBEDDING_DIM};
pub use train::{evaluate, evaluate_with, score, train, train_with, Evaluation};

pub(crate) use layers::Op;
