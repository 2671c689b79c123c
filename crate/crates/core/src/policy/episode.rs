use crate::env::Environment;
use crate::error::{Error, Result};
use crate::kernel::AugmentedContext;

use super::{ModelSnapshot, Policy};

/// Relative slack allowed on `s^2 <= c_k / lambda` before counting a violation.
const AUDIT_SLACK: f64 = 1e-12;

/// Tally of `s^2 <= c_k / lambda` checks over every width a policy reported.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WidthAudit {
    pub checks: usize,
    pub violations: usize,
    /// Largest observed `s^2 lambda / c_k`.
    pub max_ratio: f64,
}

impl WidthAudit {
    pub fn record(&mut self, width: f64, c_k: f64, lambda: f64) {
        let ratio = width * width * lambda / c_k;
        self.checks += 1;
        if ratio > 1.0 + AUDIT_SLACK {
            self.violations += 1;
        }
        self.max_ratio = self.max_ratio.max(ratio);
    }

    pub fn merge(&mut self, other: &WidthAudit) {
        self.checks += other.checks;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
    }
}

/// Everything one episode produced.
#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub policy: String,
    /// `R(t)` for `t = 1..=T`, from expected rewards.
    pub cum_regret: Vec<f64>,
    pub actions: Vec<usize>,
    pub width_audit: WidthAudit,
    /// Augmented context the policy would play at round `T + 1`, when requested.
    pub lookahead: Option<AugmentedContext>,
    /// Model state after round `T`.
    pub snapshot: Option<ModelSnapshot>,
}

impl EpisodeOutcome {
    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }
}

/// Plays `horizon` rounds of `policy` against `env`.
///
/// With `lookahead` set, one further round is drawn and the policy's choice
/// for it is recorded without being observed.
pub fn run_episode(
    env: &mut dyn Environment,
    policy: &mut dyn Policy,
    horizon: usize,
    lookahead: bool,
) -> Result<EpisodeOutcome> {
    let bound = policy.width_bound();
    let mut audit = WidthAudit::default();
    let mut cum_regret = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for round in 1..=horizon {
        let obs = env.next_round()?.ok_or_else(|| {
            Error::Runtime(format!("environment exhausted after {} of {horizon} rounds", round - 1))
        })?;
        let oracle = policy.uses_oracle().then_some(obs.expected.as_slice());
        let decision = policy.choose(round, &obs.contexts, oracle)?;
        if decision.arm >= obs.contexts.len() {
            return Err(Error::Index {
                index: decision.arm,
                len: obs.contexts.len(),
            });
        }
        if let Some((c_k, lambda)) = bound {
            for u in &decision.indices {
                audit.record(u.width, c_k, lambda);
            }
        }
        policy.observe(round, decision.arm, obs.realized[decision.arm])?;
        let best = obs.expected.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        total += best - obs.expected[decision.arm];
        cum_regret.push(total);
        actions.push(decision.arm);
    }
    let snapshot = policy.snapshot();
    let lookahead = if lookahead {
        match env.next_round()? {
            Some(obs) => policy.choose(horizon + 1, &obs.contexts, None)?.chosen,
            None => None,
        }
    } else {
        None
    };
    Ok(EpisodeOutcome {
        policy: policy.name().to_string(),
        cum_regret,
        actions,
        width_audit: audit,
        lookahead,
        snapshot,
    })
}
