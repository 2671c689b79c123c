use crate::error::{Error, Result};
use crate::history::History;
use crate::kernel::{
    ArmDescriptor, AugmentedContext, Context, ContextGram, EmbeddingAccumulator, KernelSpec,
    ProductKernel, SimilarityMode, TaskSimilarity,
};
use crate::regressor::{argmax_lowest, fit_with_context_gram, UcbIndex};

use super::{require_contexts, Decision, ModelSnapshot, Policy, PolicyConfig};

/// Where the task-similarity matrix comes from.
#[derive(Clone, Debug)]
pub enum SimilaritySource {
    /// Independent, pooled, known or parametric `K_Z`.
    Fixed(TaskSimilarity),
    /// Re-estimated from mean embeddings of each arm's played contexts.
    Estimated { embedding: KernelSpec, sigma_z: f64 },
}

/// KMTL-UCB: play `argmax_a f_t(x_a) + beta * s_a` using the multi-task
/// kernel ridge estimate over all past rounds.
pub struct KmtlUcb {
    name: String,
    config: PolicyConfig,
    context_kernel: KernelSpec,
    similarity: TaskSimilarity,
    history: History,
    gram: ContextGram,
    accumulator: Option<EmbeddingAccumulator>,
    refreshed_at: Option<usize>,
    pending: Option<AugmentedContext>,
}

impl KmtlUcb {
    pub fn new(
        name: impl Into<String>,
        n_arms: usize,
        context_kernel: KernelSpec,
        source: SimilaritySource,
        config: PolicyConfig,
    ) -> Result<Self> {
        config.validate()?;
        if n_arms == 0 {
            return Err(Error::config("need at least one arm"));
        }
        let (similarity, accumulator) = match source {
            SimilaritySource::Fixed(ts) => {
                if ts.n_arms() != n_arms {
                    return Err(Error::config(format!(
                        "similarity matrix is {}x{}, expected {n_arms} arms",
                        ts.n_arms(),
                        ts.n_arms()
                    )));
                }
                if ts.mode() == SimilarityMode::Estimated {
                    return Err(Error::config("use SimilaritySource::Estimated for estimated similarity"));
                }
                (ts, None)
            }
            SimilaritySource::Estimated { embedding, sigma_z } => {
                let acc = EmbeddingAccumulator::new(n_arms, embedding, sigma_z)?;
                (acc.similarity()?, Some(acc))
            }
        };
        Ok(Self {
            name: name.into(),
            config,
            context_kernel,
            similarity,
            history: History::new(n_arms),
            gram: ContextGram::new(context_kernel),
            accumulator,
            refreshed_at: None,
            pending: None,
        })
    }

    pub fn similarity(&self) -> &TaskSimilarity {
        &self.similarity
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    fn descriptor(&self, arm: usize) -> ArmDescriptor {
        match self.similarity.mode() {
            SimilarityMode::Pooled => ArmDescriptor::Singleton,
            SimilarityMode::Estimated => ArmDescriptor::Distribution(arm),
            _ => ArmDescriptor::Arm(arm),
        }
    }

    fn refresh_similarity(&mut self) -> Result<()> {
        if let Some(acc) = &self.accumulator {
            let due = match self.refreshed_at {
                None => true,
                Some(at) => self.history.len() - at >= self.config.similarity_period,
            };
            if due {
                self.similarity = acc.similarity()?;
                self.refreshed_at = Some(self.history.len());
            }
        }
        Ok(())
    }

    fn product_kernel(&self) -> ProductKernel {
        ProductKernel {
            task: self.similarity.clone(),
            context: self.context_kernel,
        }
    }

    /// UCB indices for the given per-arm contexts under the current history.
    pub fn indices(&mut self, contexts: &[Context]) -> Result<Vec<UcbIndex>> {
        require_contexts(contexts)?;
        if contexts.len() != self.history.n_arms() {
            return Err(Error::config(format!(
                "expected {} candidate contexts, got {}",
                self.history.n_arms(),
                contexts.len()
            )));
        }
        self.refresh_similarity()?;
        let kernel = self.product_kernel();
        let state = fit_with_context_gram(
            &self.history,
            &kernel,
            self.config.lambda,
            self.config.regression,
            &self.gram,
        )?;
        let candidates = self.augment(contexts);
        state.ucb_indices(&candidates, self.config.beta)
    }

    fn augment(&self, contexts: &[Context]) -> Vec<AugmentedContext> {
        contexts
            .iter()
            .enumerate()
            .map(|(a, x)| AugmentedContext::new(self.descriptor(a), x.clone()))
            .collect()
    }
}

impl Policy for KmtlUcb {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, _round: usize, contexts: &[Context], _oracle: Option<&[f64]>) -> Result<Decision> {
        let indices = self.indices(contexts)?;
        let arm = argmax_lowest(indices.iter().map(|u| u.index))
            .ok_or_else(|| Error::config("empty candidate list"))?;
        let chosen = AugmentedContext::new(self.descriptor(arm), contexts[arm].clone());
        self.pending = Some(chosen.clone());
        Ok(Decision {
            arm,
            indices,
            chosen: Some(chosen),
        })
    }

    fn observe(&mut self, round: usize, arm: usize, reward: f64) -> Result<()> {
        let chosen = self
            .pending
            .take()
            .ok_or_else(|| Error::Runtime("observe called without a pending choice".into()))?;
        self.gram.push(&chosen.x);
        if let Some(acc) = &mut self.accumulator {
            acc.push(arm, &chosen.x);
        }
        self.history.push(round, arm, chosen, reward)
    }

    fn snapshot(&self) -> Option<ModelSnapshot> {
        Some(ModelSnapshot {
            kernel: self.product_kernel(),
            points: self.history.points(),
            lambda: self.config.lambda,
        })
    }

    fn width_bound(&self) -> Option<(f64, f64)> {
        let c = match self.context_kernel.sup() {
            Some(sup) => sup * self.similarity.max_diagonal(),
            None => self.product_kernel().diag_bound(&self.history.points()),
        };
        Some((c, self.config.lambda))
    }
}
