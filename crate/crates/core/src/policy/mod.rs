//! Arm-selection policies and the episode loop.

mod baseline;
mod episode;
mod kmtl;
mod reference;
mod sup;

pub use baseline::{FixedArm, OraclePolicy, RandomPolicy};
pub use episode::{run_episode, EpisodeOutcome, WidthAudit};
pub use kmtl::{KmtlUcb, SimilaritySource};
pub use reference::{KernelUcbInd, KernelUcbPool};
pub use sup::{
    base_kmtl_ucb, sup_confidence_alpha, sup_kmtl_ucb_choose, sup_levels, Branch, LevelAction,
    SupKmtlUcb, SupState, SupStep,
};

use crate::error::{Error, Result};
use crate::kernel::{AugmentedContext, Context, ProductKernel};
use crate::regressor::{RegressionMode, UcbIndex};

/// Shared tuning knobs.
#[derive(Clone, Debug)]
pub struct PolicyConfig {
    /// Exploration weight on the width.
    pub beta: f64,
    /// Ridge parameter.
    pub lambda: f64,
    /// Confidence level used by the theoretical multipliers.
    pub delta: f64,
    /// Assumed RKHS norm bound of the reward function.
    pub c: f64,
    /// Horizon `T`.
    pub horizon: usize,
    /// Rounds between refreshes of an estimated similarity matrix.
    pub similarity_period: usize,
    pub regression: RegressionMode,
}

impl PolicyConfig {
    /// Defaults with `beta` set to the theoretical multiplier `alpha + c sqrt(lambda)`.
    pub fn theoretical(horizon: usize, n_arms: usize) -> Self {
        let mut cfg = Self {
            beta: 0.0,
            lambda: 1.0,
            delta: 0.05,
            c: 1.0,
            horizon,
            similarity_period: 1,
            regression: RegressionMode::Weighted,
        };
        cfg.beta = cfg.theoretical_beta(n_arms);
        cfg
    }

    /// `sqrt(ln(2 T N / delta) / 2) + c sqrt(lambda)`.
    pub fn theoretical_beta(&self, n_arms: usize) -> f64 {
        let t = self.horizon as f64;
        ((2.0 * t * n_arms as f64 / self.delta).ln() / 2.0).sqrt() + self.c * self.lambda.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.similarity_period == 0 {
            return Err(Error::config("similarity period must be at least 1"));
        }
        Ok(())
    }
}

/// What a policy decided in one round.
#[derive(Clone, Debug)]
pub struct Decision {
    pub arm: usize,
    /// Indices the choice was based on; empty for non-UCB policies.
    pub indices: Vec<UcbIndex>,
    /// Augmented context of the chosen arm as the policy sees it.
    pub chosen: Option<AugmentedContext>,
}

/// Kernel, training points and ridge parameter behind a policy's estimates.
#[derive(Clone, Debug)]
pub struct ModelSnapshot {
    pub kernel: ProductKernel,
    pub points: Vec<AugmentedContext>,
    pub lambda: f64,
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Picks an arm given one context per arm. `oracle` carries the expected
    /// rewards and is only supplied to policies whose
    /// [`uses_oracle`](Policy::uses_oracle) returns `true`.
    fn choose(&mut self, round: usize, contexts: &[Context], oracle: Option<&[f64]>) -> Result<Decision>;

    /// Reveals the reward of the arm chosen in the last call to `choose`.
    fn observe(&mut self, round: usize, arm: usize, reward: f64) -> Result<()>;

    fn uses_oracle(&self) -> bool {
        false
    }

    fn snapshot(&self) -> Option<ModelSnapshot> {
        None
    }

    /// `(c_k, lambda)` for width auditing, when the policy produces widths.
    fn width_bound(&self) -> Option<(f64, f64)> {
        None
    }
}

pub(crate) fn require_contexts(contexts: &[Context]) -> Result<()> {
    if contexts.is_empty() {
        Err(Error::config("empty candidate list"))
    } else {
        Ok(())
    }
}
