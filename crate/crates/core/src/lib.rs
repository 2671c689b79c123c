//! Kernelized multi-task contextual bandits.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod env;
pub mod history;
pub mod kernel;
pub mod linalg;
pub mod policy;
pub mod regressor;

pub use error::{Error, Result};
