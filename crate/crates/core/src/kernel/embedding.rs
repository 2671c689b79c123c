//! Task similarity estimated from empirical kernel mean embeddings.
//!
//! Each arm's context distribution is embedded as the average feature map of
//! the contexts observed when that arm was played. The squared RKHS distance
//! between two such embeddings is a V-statistic over pairwise kernel values,
//! and the arm similarity is a Gaussian of that distance.

use crate::error::{Error, Result};
use crate::history::History;
use crate::linalg::{is_psd, project_psd, symmetric_eigenvalues, Matrix};

use super::similarity::PSD_TOL;
use super::{Context, KernelRole, KernelSpec, TaskSimilarity};

/// `||Psi(P_x) - Psi(P_y)||^2` for the empirical distributions of `xs` and `ys`.
pub fn embedding_sq_distance<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    kernel: &KernelSpec,
    xs: &[X],
    ys: &[Y],
) -> f64 {
    let mean = |a: &[&[f64]], b: &[&[f64]]| {
        let mut s = 0.0;
        for u in a {
            for v in b {
                s += kernel.eval(u, v);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let xs: Vec<&[f64]> = xs.iter().map(AsRef::as_ref).collect();
    let ys: Vec<&[f64]> = ys.iter().map(AsRef::as_ref).collect();
    (mean(&xs, &xs) + mean(&ys, &ys) - 2.0 * mean(&xs, &ys)).max(0.0)
}

fn check_args(embed: &KernelSpec, sigma_z: f64) -> Result<()> {
    if embed.role == KernelRole::Task {
        return Err(Error::config("embedding kernel must act on contexts"));
    }
    if !(sigma_z.is_finite() && sigma_z > 0.0) {
        return Err(Error::config(format!("sigma_Z must be positive, got {sigma_z}")));
    }
    Ok(())
}

/// Estimates `K_Z` from the contexts each arm was played on.
///
/// Arms never played have similarity 0 to every other arm and 1 to themselves.
pub fn estimate_task_similarity(
    history: &History,
    embed: &KernelSpec,
    sigma_z: f64,
) -> Result<TaskSimilarity> {
    check_args(embed, sigma_z)?;
    let n = history.n_arms();
    let samples: Vec<Vec<&Context>> = (0..n).map(|a| history.contexts_of(a).collect()).collect();
    let mut m = Matrix::zeros(n, n);
    for a in 0..n {
        m[(a, a)] = 1.0;
        for b in 0..a {
            if samples[a].is_empty() || samples[b].is_empty() {
                continue;
            }
            let d2 = embedding_sq_distance(embed, &samples[a], &samples[b]);
            let v = (-d2 / (2.0 * sigma_z * sigma_z)).exp();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    finalize(m)
}

/// Clips to the PSD cone when rounding pushed the estimate outside it, then
/// rescales to a unit diagonal.
fn finalize(m: Matrix) -> Result<TaskSimilarity> {
    let eigs = symmetric_eigenvalues(&m)?;
    if is_psd(&eigs, PSD_TOL) {
        return Ok(TaskSimilarity::estimated(m));
    }
    log::debug!(
        "estimated task similarity left the PSD cone (min eigenvalue {}); projecting",
        eigs[eigs.len() - 1]
    );
    let p = project_psd(&m)?;
    let n = p.nrows();
    let d: Vec<f64> = (0..n).map(|i| p[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    Ok(TaskSimilarity::estimated(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            p[(i, j)] / (d[i] * d[j])
        }
    })))
}

/// Running pairwise kernel sums between arms, so the similarity estimate can
/// be refreshed in `O(N^2)` after each `O(t)` update.
#[derive(Clone, Debug)]
pub struct EmbeddingAccumulator {
    kernel: KernelSpec,
    sigma_z: f64,
    samples: Vec<Vec<Context>>,
    // sums[a * n + b] = sum_{i in a, j in b} k'(x_i, x_j)
    sums: Vec<f64>,
}

impl EmbeddingAccumulator {
    pub fn new(n_arms: usize, kernel: KernelSpec, sigma_z: f64) -> Result<Self> {
        check_args(&kernel, sigma_z)?;
        Ok(Self {
            kernel,
            sigma_z,
            samples: vec![Vec::new(); n_arms],
            sums: vec![0.0; n_arms * n_arms],
        })
    }

    pub fn n_arms(&self) -> usize {
        self.samples.len()
    }

    pub fn push(&mut self, arm: usize, x: &Context) {
        let n = self.n_arms();
        for b in 0..n {
            let s: f64 = self.samples[b]
                .iter()
                .map(|y| self.kernel.eval(x.as_slice(), y.as_slice()))
                .sum();
            if b == arm {
                self.sums[arm * n + arm] += 2.0 * s + self.kernel.eval(x.as_slice(), x.as_slice());
            } else {
                self.sums[arm * n + b] += s;
                self.sums[b * n + arm] += s;
            }
        }
        self.samples[arm].push(x.clone());
    }

    pub fn sq_distance(&self, a: usize, b: usize) -> Option<f64> {
        let n = self.n_arms();
        let (na, nb) = (self.samples[a].len() as f64, self.samples[b].len() as f64);
        if na == 0.0 || nb == 0.0 {
            return None;
        }
        let d2 = self.sums[a * n + a] / (na * na) + self.sums[b * n + b] / (nb * nb)
            - 2.0 * self.sums[a * n + b] / (na * nb);
        Some(d2.max(0.0))
    }

    pub fn similarity(&self) -> Result<TaskSimilarity> {
        let n = self.n_arms();
        let mut m = Matrix::zeros(n, n);
        for a in 0..n {
            m[(a, a)] = 1.0;
            for b in 0..a {
                if let Some(d2) = self.sq_distance(a, b) {
                    let v = (-d2 / (2.0 * self.sigma_z * self.sigma_z)).exp();
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
            }
        }
        finalize(m)
    }
}
