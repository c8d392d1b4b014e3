#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod classifier;
pub mod cli;
pub mod dantzig;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod linalg;
pub mod sample;
mod homotopy;
mod serde_mat;

pub use error::{Error, Result};
pub use sample::SampleMatrix;
