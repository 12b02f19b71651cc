//! Sparse event encoding of surgical kinematic logs, from-scratch recurrent
//! and convolutional classifiers, and their conversion to spiking networks.

pub mod analysis;
pub mod datagen;
pub mod encoding;
pub mod error;
pub mod nets;
pub mod numcore;
pub mod schema;
pub mod spiking;

pub use error::{Error, Result};
pub use schema::{OperatorId, Target, TaskId, FEATURE_NAMES, NUM_FEATURES};
