//! Core library for the hyper-separability experiments: small dense
//! networks trained contrastively or with supervision on handwritten
//! character datasets, plus the super-class probe suite that measures how
//! linearly separable arbitrary label groupings are in the learned
//! representations.
//!
//! Everything is seeded and deterministic. With the `parallel` feature
//! (default) heavy loops fan out over rayon, but every reduction happens
//! sequentially in a fixed order, so parallel and sequential builds
//! produce bitwise-identical results.

pub mod augment;
pub mod contrastive;
pub mod data;
pub mod error;
mod io;
mod parallel;
pub mod rng;
pub mod supervised;
pub mod tensor;

pub mod nn;
pub mod probe;

pub use error::{Error, Result};
pub use parallel::execution_mode;
pub use tensor::Tensor;
