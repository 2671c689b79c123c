//! Stand-alone Kernel-UCB baselines.
//!
//! These do not go through the task kernel at all: the pooled variant runs one
//! kernel ridge regression on raw contexts, the independent variant keeps a
//! separate regression per arm. With the same weighting they are the pooled
//! and independent specializations of KMTL-UCB, which makes them useful
//! references for checking it.

use faer::Mat;

use crate::error::{Error, Result};
use crate::kernel::{ArmDescriptor, AugmentedContext, Context, ContextGram, KernelSpec, ProductKernel, TaskSimilarity};
use crate::linalg::{Cholesky, Matrix};
use crate::regressor::{argmax_lowest, width_from_radicand, RegressionMode, UcbIndex};

use super::{require_contexts, Decision, ModelSnapshot, Policy, PolicyConfig};

/// Estimates and widths of one kernel ridge system at a batch of queries.
/// `ridge[i]` is the diagonal ridge term for training point `i`.
fn krr_scores(
    kernel: &KernelSpec,
    gram: &ContextGram,
    members: &[usize],
    ridge: &[f64],
    rewards: &[f64],
    queries: &[&Context],
    lambda: f64,
) -> Result<Vec<(f64, f64)>> {
    let n = members.len();
    if n == 0 {
        return queries
            .iter()
            .map(|q| Ok((0.0, width_from_radicand(kernel.eval(q.as_slice(), q.as_slice()), lambda)?)))
            .collect();
    }
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = gram.get(members[i], members[j]);
        }
        m[(j, j)] += ridge[j];
    }
    let chol = Cholesky::factor(&m)?;
    let y: Vec<f64> = members.iter().map(|&i| rewards[i]).collect();
    let coef = chol.solve(&y);
    let stored = gram_contexts(gram, members);
    let mut kv = Mat::zeros(n, queries.len());
    for (j, q) in queries.iter().enumerate() {
        for (i, x) in stored.iter().enumerate() {
            kv[(i, j)] = kernel.eval(q.as_slice(), x.as_slice());
        }
    }
    let est: Vec<f64> = (0..queries.len())
        .map(|j| (0..n).map(|i| kv[(i, j)] * coef[i]).sum())
        .collect();
    chol.forward_in_place(&mut kv);
    queries
        .iter()
        .enumerate()
        .map(|(j, q)| {
            let red: f64 = (0..n).map(|i| kv[(i, j)] * kv[(i, j)]).sum();
            let w = width_from_radicand(kernel.eval(q.as_slice(), q.as_slice()) - red, lambda)?;
            Ok((est[j], w))
        })
        .collect()
}

fn gram_contexts<'a>(gram: &'a ContextGram, members: &[usize]) -> Vec<&'a Context> {
    members.iter().map(|&i| gram.context(i)).collect()
}

fn pick(indices: &[UcbIndex]) -> Result<usize> {
    argmax_lowest(indices.iter().map(|u| u.index)).ok_or_else(|| Error::config("empty candidate list"))
}

/// Kernel-UCB with every arm sharing one regression on contexts.
pub struct KernelUcbPool {
    name: String,
    config: PolicyConfig,
    kernel: KernelSpec,
    gram: ContextGram,
    arms: Vec<usize>,
    rewards: Vec<f64>,
    counts: Vec<usize>,
    pending: Option<Context>,
}

impl KernelUcbPool {
    pub fn new(name: impl Into<String>, n_arms: usize, kernel: KernelSpec, config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            name: name.into(),
            config,
            kernel,
            gram: ContextGram::new(kernel),
            arms: Vec::new(),
            rewards: Vec::new(),
            counts: vec![0; n_arms],
            pending: None,
        })
    }
}

impl Policy for KernelUcbPool {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, _round: usize, contexts: &[Context], _oracle: Option<&[f64]>) -> Result<Decision> {
        require_contexts(contexts)?;
        let members: Vec<usize> = (0..self.arms.len()).collect();
        let ridge: Vec<f64> = self
            .arms
            .iter()
            .map(|&a| match self.config.regression {
                RegressionMode::Weighted => self.config.lambda * self.counts[a] as f64,
                RegressionMode::Unweighted => self.config.lambda,
            })
            .collect();
        let queries: Vec<&Context> = contexts.iter().collect();
        let scores = krr_scores(
            &self.kernel,
            &self.gram,
            &members,
            &ridge,
            &self.rewards,
            &queries,
            self.config.lambda,
        )?;
        let indices: Vec<UcbIndex> = scores
            .iter()
            .enumerate()
            .map(|(a, &(estimate, width))| UcbIndex {
                arm: a,
                estimate,
                width,
                index: estimate + self.config.beta * width,
            })
            .collect();
        let arm = pick(&indices)?;
        self.pending = Some(contexts[arm].clone());
        Ok(Decision {
            arm,
            indices,
            chosen: Some(AugmentedContext::new(ArmDescriptor::Singleton, contexts[arm].clone())),
        })
    }

    fn observe(&mut self, _round: usize, arm: usize, reward: f64) -> Result<()> {
        let x = self
            .pending
            .take()
            .ok_or_else(|| Error::Runtime("observe called without a pending choice".into()))?;
        self.gram.push(&x);
        self.arms.push(arm);
        self.rewards.push(reward);
        self.counts[arm] += 1;
        Ok(())
    }

    /// The equivalent product kernel with `k_Z = 1`.
    fn snapshot(&self) -> Option<ModelSnapshot> {
        Some(ModelSnapshot {
            kernel: ProductKernel {
                task: TaskSimilarity::pooled(self.counts.len()),
                context: self.kernel,
            },
            points: (0..self.gram.len())
                .map(|i| AugmentedContext::new(ArmDescriptor::Singleton, self.gram.context(i).clone()))
                .collect(),
            lambda: self.config.lambda,
        })
    }

    fn width_bound(&self) -> Option<(f64, f64)> {
        self.kernel.sup().map(|s| (s, self.config.lambda))
    }
}

/// Kernel-UCB with a separate regression per arm.
pub struct KernelUcbInd {
    name: String,
    config: PolicyConfig,
    kernel: KernelSpec,
    per_arm: Vec<ArmData>,
    played: Vec<usize>,
    pending: Option<Context>,
}

struct ArmData {
    gram: ContextGram,
    rewards: Vec<f64>,
}

impl KernelUcbInd {
    pub fn new(name: impl Into<String>, n_arms: usize, kernel: KernelSpec, config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            name: name.into(),
            config,
            kernel,
            per_arm: (0..n_arms)
                .map(|_| ArmData {
                    gram: ContextGram::new(kernel),
                    rewards: Vec::new(),
                })
                .collect(),
            played: Vec::new(),
            pending: None,
        })
    }
}

impl Policy for KernelUcbInd {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, _round: usize, contexts: &[Context], _oracle: Option<&[f64]>) -> Result<Decision> {
        require_contexts(contexts)?;
        if contexts.len() != self.per_arm.len() {
            return Err(Error::config(format!(
                "expected {} candidate contexts, got {}",
                self.per_arm.len(),
                contexts.len()
            )));
        }
        let mut indices = Vec::with_capacity(contexts.len());
        for (a, x) in contexts.iter().enumerate() {
            let data = &self.per_arm[a];
            let n = data.rewards.len();
            let ridge_scale = match self.config.regression {
                RegressionMode::Weighted => n as f64,
                RegressionMode::Unweighted => 1.0,
            };
            let members: Vec<usize> = (0..n).collect();
            let ridge = vec![self.config.lambda * ridge_scale; n];
            let (estimate, width) = krr_scores(
                &self.kernel,
                &data.gram,
                &members,
                &ridge,
                &data.rewards,
                &[x],
                self.config.lambda,
            )?[0];
            indices.push(UcbIndex {
                arm: a,
                estimate,
                width,
                index: estimate + self.config.beta * width,
            });
        }
        let arm = pick(&indices)?;
        self.pending = Some(contexts[arm].clone());
        Ok(Decision {
            arm,
            indices,
            chosen: Some(AugmentedContext::new(ArmDescriptor::Arm(arm), contexts[arm].clone())),
        })
    }

    fn observe(&mut self, _round: usize, arm: usize, reward: f64) -> Result<()> {
        let x = self
            .pending
            .take()
            .ok_or_else(|| Error::Runtime("observe called without a pending choice".into()))?;
        let data = &mut self.per_arm[arm];
        data.gram.push(&x);
        data.rewards.push(reward);
        self.played.push(arm);
        Ok(())
    }

    /// The equivalent product kernel with indicator `k_Z`, points in play order.
    fn snapshot(&self) -> Option<ModelSnapshot> {
        let mut next = vec![0usize; self.per_arm.len()];
        let points = self
            .played
            .iter()
            .map(|&a| {
                let x = self.per_arm[a].gram.context(next[a]).clone();
                next[a] += 1;
                AugmentedContext::new(ArmDescriptor::Arm(a), x)
            })
            .collect();
        Some(ModelSnapshot {
            kernel: ProductKernel {
                task: TaskSimilarity::independent(self.per_arm.len()),
                context: self.kernel,
            },
            points,
            lambda: self.config.lambda,
        })
    }

    fn width_bound(&self) -> Option<(f64, f64)> {
        self.kernel.sup().map(|s| (s, self.config.lambda))
    }
}
