//! Multi-task kernel ridge regression on augmented contexts.
//!
//! Weighted mode minimizes the per-arm averaged squared loss plus
//! `lambda ||f||^2`, giving coefficients `(eta K + lambda I)^{-1} eta y` with
//! `eta = diag(1 / n_{a_tau})`. Because `eta` is diagonal and positive,
//!
//! ```text
//! (eta K + lambda I)^{-1} eta = (K + lambda eta^{-1})^{-1}
//! ```
//!
//! so both the estimate and the width only need a Cholesky factor of the SPD
//! matrix `K + lambda diag(n_{a_tau})`. Unweighted mode drops the counts and
//! factors `K + lambda I`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::History;
use crate::kernel::{AugmentedContext, ContextGram, ProductKernel};
use crate::linalg::{Cholesky, Matrix};

/// Radicands in `[-WIDTH_CLAMP, 0)` are treated as rounding noise and clamped.
pub const WIDTH_CLAMP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionMode {
    /// Per-arm losses are averaged (weights `1 / n_a`).
    Weighted,
    /// Plain sum of squared losses.
    Unweighted,
}

/// Estimate, width and UCB index for one candidate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UcbIndex {
    pub arm: usize,
    pub estimate: f64,
    pub width: f64,
    pub index: f64,
}

/// A fitted regressor. Immutable once built.
pub struct RegressorState {
    kernel: ProductKernel,
    lambda: f64,
    mode: RegressionMode,
    points: Vec<AugmentedContext>,
    factor: Option<Cholesky>,
    alpha: Vec<f64>,
}

impl std::fmt::Debug for RegressorState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegressorState")
            .field("lambda", &self.lambda)
            .field("mode", &self.mode)
            .field("n", &self.points.len())
            .finish()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("lambda must be positive, got {lambda}")))
    }
}

/// Fits on every observation in `history`.
pub fn fit(
    history: &History,
    kernel: &ProductKernel,
    lambda: f64,
    mode: RegressionMode,
) -> Result<RegressorState> {
    let idx: Vec<usize> = (0..history.len()).collect();
    fit_subset(history, &idx, kernel, lambda, mode)
}

/// Fits on the observations at positions `subset` of `history`.
///
/// In weighted mode the counts are taken within the subset.
pub fn fit_subset(
    history: &History,
    subset: &[usize],
    kernel: &ProductKernel,
    lambda: f64,
    mode: RegressionMode,
) -> Result<RegressorState> {
    check_lambda(lambda)?;
    let records = history.records();
    let points: Vec<AugmentedContext> = subset.iter().map(|&i| records[i].context.clone()).collect();
    let n = points.len();
    let mut counts = vec![0usize; history.n_arms()];
    for &i in subset {
        counts[records[i].arm] += 1;
    }
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = kernel.eval(&points[i], &points[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        let w = match mode {
            RegressionMode::Weighted => counts[records[subset[i]].arm] as f64,
            RegressionMode::Unweighted => 1.0,
        };
        m[(i, i)] = kernel.eval(&points[i], &points[i]) + lambda * w;
    }
    let y: Vec<f64> = subset.iter().map(|&i| records[i].reward).collect();
    solve(kernel, lambda, mode, points, m, &y)
}

/// Fits on the whole history, reading `k_X` values from a cache that holds
/// the history's contexts in order.
pub fn fit_with_context_gram(
    history: &History,
    kernel: &ProductKernel,
    lambda: f64,
    mode: RegressionMode,
    gram: &ContextGram,
) -> Result<RegressorState> {
    check_lambda(lambda)?;
    let n = history.len();
    if gram.len() != n {
        return Err(Error::config(format!(
            "context gram holds {} points, history {}",
            gram.len(),
            n
        )));
    }
    let records = history.records();
    let counts = history.pull_counts();
    let task: Vec<usize> = records.iter().map(|r| r.context.z.task_index()).collect();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        // The Cholesky factorization reads the lower triangle only.
        for i in j..n {
            m[(i, j)] = kernel.task.entry(task[i], task[j]) * gram.get(i, j);
        }
        let w = match mode {
            RegressionMode::Weighted => counts[records[j].arm] as f64,
            RegressionMode::Unweighted => 1.0,
        };
        m[(j, j)] += lambda * w;
    }
    let y = history.rewards();
    solve(kernel, lambda, mode, history.points(), m, &y)
}

fn solve(
    kernel: &ProductKernel,
    lambda: f64,
    mode: RegressionMode,
    points: Vec<AugmentedContext>,
    system: Matrix,
    y: &[f64],
) -> Result<RegressorState> {
    if points.is_empty() {
        return Ok(RegressorState {
            kernel: kernel.clone(),
            lambda,
            mode,
            points,
            factor: None,
            alpha: Vec::new(),
        });
    }
    let factor = Cholesky::factor(&system)?;
    let alpha = factor.solve(y);
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::numerical(format!(
            "non-finite ridge coefficients ({})",
            crate::linalg::condition_report(&system)
        )));
    }
    Ok(RegressorState {
        kernel: kernel.clone(),
        lambda,
        mode,
        points,
        factor: Some(factor),
        alpha,
    })
}

impl RegressorState {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> RegressionMode {
        self.mode
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.alpha
    }

    fn kernel_vector(&self, x: &AugmentedContext) -> Vec<f64> {
        self.points.iter().map(|p| self.kernel.eval(x, p)).collect()
    }

    /// `f_t(x) = k(x)^T alpha`; zero before any data.
    pub fn predict(&self, x: &AugmentedContext) -> f64 {
        self.points
            .iter()
            .zip(&self.alpha)
            .map(|(p, a)| self.kernel.eval(x, p) * a)
            .sum()
    }

    /// `lambda^{-1/2} sqrt(k(x, x) - k^T (eta K + lambda I)^{-1} eta k)`.
    pub fn width(&self, x: &AugmentedContext) -> Result<f64> {
        let self_k = self.kernel.eval(x, x);
        let reduction = match &self.factor {
            None => 0.0,
            Some(f) => {
                let k = self.kernel_vector(x);
                let mut rhs = Mat::from_fn(k.len(), 1, |i, _| k[i]);
                f.forward_in_place(&mut rhs);
                (0..k.len()).map(|i| rhs[(i, 0)] * rhs[(i, 0)]).sum()
            }
        };
        width_from_radicand(self_k - reduction, self.lambda)
    }

    /// One [`UcbIndex`] per candidate, `index = estimate + beta * width`.
    pub fn ucb_indices(&self, candidates: &[AugmentedContext], beta: f64) -> Result<Vec<UcbIndex>> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::config(format!("beta must be nonnegative, got {beta}")));
        }
        let n = self.points.len();
        let m = candidates.len();
        let mut kv = Mat::zeros(n, m);
        for (j, c) in candidates.iter().enumerate() {
            for (i, p) in self.points.iter().enumerate() {
                kv[(i, j)] = self.kernel.eval(c, p);
            }
        }
        let estimates: Vec<f64> = (0..m)
            .map(|j| (0..n).map(|i| kv[(i, j)] * self.alpha[i]).sum())
            .collect();
        if let Some(f) = &self.factor {
            f.forward_in_place(&mut kv);
        }
        candidates
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let reduction: f64 = (0..n).map(|i| kv[(i, j)] * kv[(i, j)]).sum();
                let width = width_from_radicand(self.kernel.eval(c, c) - reduction, self.lambda)?;
                Ok(UcbIndex {
                    arm: j,
                    estimate: estimates[j],
                    width,
                    index: estimates[j] + beta * width,
                })
            })
            .collect()
    }
}

/// `sqrt(radicand / lambda)` with the small-negative clamp.
pub fn width_from_radicand(radicand: f64, lambda: f64) -> Result<f64> {
    let r = if radicand < 0.0 {
        if radicand >= -WIDTH_CLAMP {
            0.0
        } else {
            return Err(Error::numerical(format!(
                "width radicand {radicand:e} is negative beyond tolerance"
            )));
        }
    } else {
        radicand
    };
    Ok((r / lambda).sqrt())
}

/// Position of the largest index, lowest position on ties.
pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ArmDescriptor, Context, KernelRole, KernelSpec, TaskSimilarity};

    fn aug(a: usize, x: f64) -> AugmentedContext {
        AugmentedContext::new(ArmDescriptor::Arm(a), Context::new(vec![x]).unwrap())
    }

    fn kernel(ts: TaskSimilarity) -> ProductKernel {
        ProductKernel::new(ts, KernelSpec::gaussian(1.0, KernelRole::Context).unwrap()).unwrap()
    }

    #[test]
    fn empty_history_predicts_zero_with_unit_width() {
        let h = History::new(2);
        let st = fit(&h, &kernel(TaskSimilarity::independent(2)), 1.0, RegressionMode::Weighted).unwrap();
        assert!(st.coefficients().is_empty());
        assert_eq!(st.predict(&aug(0, 0.3)), 0.0);
        assert_eq!(st.width(&aug(0, 0.3)).unwrap(), 1.0);
        let idx = st.ucb_indices(&[aug(0, 0.0), aug(1, 1.0)], 1.0).unwrap();
        assert!(idx.iter().all(|u| u.index == 1.0));
    }

    #[test]
    fn empty_history_width_carries_lambda_prefactor() {
        let h = History::new(1);
        let st = fit(&h, &kernel(TaskSimilarity::pooled(1)), 4.0, RegressionMode::Weighted).unwrap();
        assert_eq!(st.width(&aug(0, 0.0)).unwrap(), 0.5);
    }

    #[test]
    fn one_observation_weighted() {
        let mut h = History::new(1);
        h.push(1, 0, aug(0, 0.0), 1.0).unwrap();
        let st = fit(&h, &kernel(TaskSimilarity::pooled(1)), 1.0, RegressionMode::Weighted).unwrap();
        assert!((st.coefficients()[0] - 0.5).abs() < 1e-15);
        assert!((st.predict(&aug(0, 0.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_independent_arms_block_solve() {
        let mut h = History::new(2);
        h.push(1, 0, aug(0, 0.0), 1.0).unwrap();
        h.push(2, 1, aug(1, 0.0), 0.0).unwrap();
        let st = fit(&h, &kernel(TaskSimilarity::independent(2)), 1.0, RegressionMode::Weighted).unwrap();
        let a = st.coefficients();
        assert!((a[0] - 0.5).abs() < 1e-15 && a[1].abs() < 1e-15);
    }

    #[test]
    fn unseen_independent_arm_predicts_zero() {
        let mut h = History::new(2);
        h.push(1, 0, aug(0, 0.0), 1.0).unwrap();
        let st = fit(&h, &kernel(TaskSimilarity::independent(2)), 1.0, RegressionMode::Weighted).unwrap();
        assert_eq!(st.predict(&aug(1, 0.0)), 0.0);
        assert_eq!(st.width(&aug(1, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn unweighted_single_point_width() {
        let mut h = History::new(1);
        h.push(1, 0, aug(0, 0.0), 1.0).unwrap();
        let st = fit(&h, &kernel(TaskSimilarity::pooled(1)), 1.0, RegressionMode::Unweighted).unwrap();
        let w = st.width(&aug(0, 0.0)).unwrap();
        assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
        let u = st.ucb_indices(&[aug(0, 0.0)], 1.0).unwrap()[0];
        assert!((u.index - 1.207_106_781_186_547_5).abs() < 1e-12);
        let u0 = st.ucb_indices(&[aug(0, 0.0)], 0.0).unwrap()[0];
        assert_eq!(u0.index, u0.estimate);
    }

    #[test]
    fn gram_cache_path_matches_direct_fit() {
        let ts = crate::kernel::parametric_task_matrix(0.4, 3).unwrap();
        let k = kernel(ts);
        let mut h = History::new(3);
        let mut g = ContextGram::new(k.context);
        for t in 0..9 {
            let a = (t * 7) % 3;
            let p = aug(a, (t as f64 * 0.37).sin());
            g.push(&p.x);
            h.push(t + 1, a, p, (t as f64 * 0.11).cos()).unwrap();
        }
        for mode in [RegressionMode::Weighted, RegressionMode::Unweighted] {
            let a = fit(&h, &k, 0.7, mode).unwrap();
            let b = fit_with_context_gram(&h, &k, 0.7, mode, &g).unwrap();
            for (x, y) in a.coefficients().iter().zip(b.coefficients()) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn negative_radicand_clamp() {
        assert_eq!(width_from_radicand(-5e-11, 1.0).unwrap(), 0.0);
        assert!(width_from_radicand(-1e-6, 1.0).is_err());
    }

    #[test]
    fn lambda_must_be_positive() {
        let h = History::new(1);
        assert!(fit(&h, &kernel(TaskSimilarity::pooled(1)), 0.0, RegressionMode::Weighted).is_err());
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(argmax_lowest([1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax_lowest([2.0, 2.0]), Some(0));
        assert_eq!(argmax_lowest(Vec::<f64>::new()), None);
    }
}
