//! Deterministic numeric substrate: seeded random streams, dense tensors,
//! row-major kernels and a finite-difference gradient checker.
//!
//! Every accumulation runs in `f64` with a fixed summation order so that
//! results are bitwise reproducible for a given seed.

mod gradcheck;
pub mod kernels;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, grad_check_at, GradCheckReport};
pub use rng::Rng;
pub use tensor::Tensor;
