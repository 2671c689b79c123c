//! Reward environments: the rotated-ellipse recommendation simulator and
//! multiclass classification played as a bandit.

pub mod dataset;
mod multiclass;
mod synthetic;

pub use dataset::{
    builtin_manifest, load_dataset, mini_digits, mini_digits_dataset, parse_csv, parse_libsvm, read_manifest, split_dataset, DatasetFormat,
    ManifestEntry, MulticlassDataset,
};
pub use multiclass::{multiclass_round, MulticlassEnv};
pub use synthetic::{
    rotate, synth_reward, synth_round, SyntheticNews, SyntheticNewsConfig,
};

use crate::error::Result;
use crate::kernel::Context;

/// One round as the harness sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundObservation {
    /// One context per arm.
    pub contexts: Vec<Context>,
    /// Expected reward per arm, in `[0, 1]`. Hidden from policies.
    pub expected: Vec<f64>,
    /// Reward revealed if the arm is played.
    pub realized: Vec<f64>,
}

impl RoundObservation {
    pub fn n_arms(&self) -> usize {
        self.contexts.len()
    }

    pub fn best_expected(&self) -> f64 {
        self.expected.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A stream of rounds. `Ok(None)` means the stream is exhausted.
pub trait Environment: Send {
    fn n_arms(&self) -> usize;
    fn next_round(&mut self) -> Result<Option<RoundObservation>>;
}
