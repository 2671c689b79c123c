//! Master/base construction with disjoint per-level round sets.
//!
//! Each round walks down the levels `q = 1, 2, ...`. At every level the base
//! routine scores the surviving arms using only the rounds stored in `Psi^q`.
//! The walk ends by exploiting (all widths tiny), or by exploring an arm whose
//! width is still above `2^{-q}`, in which case the round joins `Psi^q`.

use crate::error::{Error, Result};
use crate::history::History;
use crate::kernel::{ArmDescriptor, AugmentedContext, Context, ProductKernel, SimilarityMode, TaskSimilarity, KernelSpec};
use crate::regressor::{argmax_lowest, fit_subset, RegressionMode};

use super::{require_contexts, Decision, ModelSnapshot, Policy, PolicyConfig};

/// `Q = ceil(ln T)`, at least 1.
pub fn sup_levels(horizon: usize) -> usize {
    ((horizon.max(1) as f64).ln().ceil() as usize).max(1)
}

/// `alpha = sqrt(ln(2 T N (ceil(ln T) + 1) / delta) / 2)`.
pub fn sup_confidence_alpha(horizon: usize, n_arms: usize, delta: f64) -> f64 {
    let t = horizon as f64;
    let q = (t.ln().ceil()).max(0.0);
    ((2.0 * t * n_arms as f64 * (q + 1.0) / delta).ln() / 2.0).sqrt()
}

/// Per-arm output of the base routine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseScore {
    pub arm: usize,
    pub estimate: f64,
    pub width: f64,
    /// `(alpha + c sqrt(lambda)) * width`.
    pub w: f64,
    pub ucb: f64,
}

/// Scores `candidates` (indexed by `arms`) with an unweighted regression on
/// the history rounds at positions `psi`.
pub fn base_kmtl_ucb(
    history: &History,
    psi: &[usize],
    arms: &[usize],
    candidates: &[AugmentedContext],
    kernel: &ProductKernel,
    config: &PolicyConfig,
) -> Result<Vec<BaseScore>> {
    let state = fit_subset(history, psi, kernel, config.lambda, RegressionMode::Unweighted)?;
    let mult = sup_confidence_alpha(config.horizon, history.n_arms(), config.delta) + config.c * config.lambda.sqrt();
    let picked: Vec<AugmentedContext> = arms.iter().map(|&a| candidates[a].clone()).collect();
    let idx = state.ucb_indices(&picked, mult)?;
    Ok(arms
        .iter()
        .zip(idx)
        .map(|(&arm, u)| BaseScore {
            arm,
            estimate: u.estimate,
            width: u.width,
            w: mult * u.width,
            ucb: u.index,
        })
        .collect())
}

/// Which way a level resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Every width at most `1/sqrt(T)`: greedy on ucb, no set updated.
    Exploit,
    /// Every width at most `2^{-q}`: filter arms and descend a level.
    Filter,
    /// Some width above `2^{-q}`: play it and record the round in `Psi^q`.
    Explore,
}

/// Set update a round caused.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelAction {
    None,
    /// Round appended to `Psi^level` (1-based level).
    Append { level: usize },
}

/// Trace of one level visited within a round.
#[derive(Clone, Debug)]
pub struct SupStep {
    pub round: usize,
    pub level: usize,
    pub active: Vec<usize>,
    pub scores: Vec<BaseScore>,
    pub branch: Branch,
    /// Arms kept for the next level (only for [`Branch::Filter`]).
    pub survivors: Vec<usize>,
}

/// Level count and the disjoint round sets, stored as history positions.
#[derive(Clone, Debug)]
pub struct SupState {
    levels: usize,
    psi: Vec<Vec<usize>>,
}

impl SupState {
    pub fn new(horizon: usize) -> Self {
        let levels = sup_levels(horizon);
        Self {
            levels,
            psi: vec![Vec::new(); levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `Psi^q` for the 1-based level `q`, as 0-based history positions.
    pub fn psi(&self, level: usize) -> &[usize] {
        &self.psi[level - 1]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.psi
    }
}

/// Runs the level walk for round `round` (1-based) and applies the set update.
/// `history` must hold exactly rounds `1..round`.
pub fn sup_kmtl_ucb_choose(
    round: usize,
    candidates: &[AugmentedContext],
    history: &History,
    state: &mut SupState,
    kernel: &ProductKernel,
    config: &PolicyConfig,
) -> Result<(usize, LevelAction, Vec<SupStep>)> {
    if candidates.is_empty() {
        return Err(Error::config("empty candidate list"));
    }
    if round == 0 || round > config.horizon {
        return Err(Error::config(format!("round {round} outside 1..={}", config.horizon)));
    }
    let exploit_tol = 1.0 / (config.horizon as f64).sqrt();
    let mut active: Vec<usize> = (0..candidates.len()).collect();
    let mut steps = Vec::new();
    let mut q = 1;
    loop {
        assert!(q <= state.levels, "level {q} exceeds Q = {}", state.levels);
        let scores = base_kmtl_ucb(history, &state.psi[q - 1], &active, candidates, kernel, config)?;
        let level_tol = 0.5f64.powi(q as i32);
        if scores.iter().all(|s| s.w <= exploit_tol) {
            let best = argmax_lowest(scores.iter().map(|s| s.ucb)).expect("non-empty");
            let arm = scores[best].arm;
            steps.push(SupStep { round, level: q, active, scores, branch: Branch::Exploit, survivors: Vec::new() });
            return Ok((arm, LevelAction::None, steps));
        }
        if scores.iter().all(|s| s.w <= level_tol) {
            let top = scores.iter().map(|s| s.ucb).fold(f64::NEG_INFINITY, f64::max);
            let survivors: Vec<usize> = scores
                .iter()
                .filter(|s| s.ucb >= top - 2.0 * level_tol)
                .map(|s| s.arm)
                .collect();
            steps.push(SupStep {
                round,
                level: q,
                active,
                scores,
                branch: Branch::Filter,
                survivors: survivors.clone(),
            });
            active = survivors;
            q += 1;
            continue;
        }
        let arm = scores.iter().find(|s| s.w > level_tol).expect("some width above tolerance").arm;
        state.psi[q - 1].push(history.len());
        steps.push(SupStep { round, level: q, active, scores, branch: Branch::Explore, survivors: Vec::new() });
        return Ok((arm, LevelAction::Append { level: q }, steps));
    }
}

/// Policy wrapper around [`sup_kmtl_ucb_choose`] with a fixed task similarity.
pub struct SupKmtlUcb {
    name: String,
    config: PolicyConfig,
    kernel: ProductKernel,
    history: History,
    state: SupState,
    log: Vec<SupStep>,
    keep_log: bool,
    pending: Option<AugmentedContext>,
}

impl SupKmtlUcb {
    pub fn new(
        name: impl Into<String>,
        context_kernel: KernelSpec,
        similarity: TaskSimilarity,
        config: PolicyConfig,
    ) -> Result<Self> {
        config.validate()?;
        if similarity.mode() == SimilarityMode::Estimated {
            return Err(Error::config("the master/base policy needs a fixed task similarity"));
        }
        let n_arms = similarity.n_arms();
        let state = SupState::new(config.horizon);
        Ok(Self {
            name: name.into(),
            kernel: ProductKernel::new(similarity, context_kernel)?,
            config,
            history: History::new(n_arms),
            state,
            log: Vec::new(),
            keep_log: false,
            pending: None,
        })
    }

    /// Retains every [`SupStep`] for later inspection.
    pub fn with_log(mut self) -> Self {
        self.keep_log = true;
        self
    }

    pub fn state(&self) -> &SupState {
        &self.state
    }

    pub fn log(&self) -> &[SupStep] {
        &self.log
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    fn descriptor(&self, arm: usize) -> ArmDescriptor {
        if self.kernel.task.mode() == SimilarityMode::Pooled {
            ArmDescriptor::Singleton
        } else {
            ArmDescriptor::Arm(arm)
        }
    }
}

impl Policy for SupKmtlUcb {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, round: usize, contexts: &[Context], _oracle: Option<&[f64]>) -> Result<Decision> {
        require_contexts(contexts)?;
        if contexts.len() != self.history.n_arms() {
            return Err(Error::config(format!(
                "expected {} candidate contexts, got {}",
                self.history.n_arms(),
                contexts.len()
            )));
        }
        let candidates: Vec<AugmentedContext> = contexts
            .iter()
            .enumerate()
            .map(|(a, x)| AugmentedContext::new(self.descriptor(a), x.clone()))
            .collect();
        // Round T + 1 is a lookahead: decide on a scratch copy of the level sets.
        let lookahead = round == self.config.horizon + 1;
        let mut scratch;
        let (state, round) = if lookahead {
            scratch = self.state.clone();
            (&mut scratch, self.config.horizon)
        } else {
            (&mut self.state, round)
        };
        let (arm, _, steps) = sup_kmtl_ucb_choose(round, &candidates, &self.history, state, &self.kernel, &self.config)?;
        if self.keep_log && !lookahead {
            self.log.extend(steps);
        }
        let chosen = candidates[arm].clone();
        self.pending = Some(chosen.clone());
        Ok(Decision {
            arm,
            indices: Vec::new(),
            chosen: Some(chosen),
        })
    }

    fn observe(&mut self, round: usize, arm: usize, reward: f64) -> Result<()> {
        let chosen = self
            .pending
            .take()
            .ok_or_else(|| Error::Runtime("observe called without a pending choice".into()))?;
        self.history.push(round, arm, chosen, reward)
    }

    fn snapshot(&self) -> Option<ModelSnapshot> {
        Some(ModelSnapshot {
            kernel: self.kernel.clone(),
            points: self.history.points(),
            lambda: self.config.lambda,
        })
    }

    fn width_bound(&self) -> Option<(f64, f64)> {
        None
    }
}
