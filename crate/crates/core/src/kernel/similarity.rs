use crate::error::{Error, Result};
use crate::linalg::{is_psd, is_symmetric, symmetric_eigenvalues, Matrix};

use super::{ArmDescriptor, KernelSpec};

/// Relative PSD tolerance: smallest eigenvalue >= -PSD_TOL * largest.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimilarityMode {
    Independent,
    Pooled,
    Known,
    Parametric(f64),
    Estimated,
}

/// The `N x N` task-similarity matrix `K_Z` together with how it was obtained.
#[derive(Clone, Debug)]
pub struct TaskSimilarity {
    mode: SimilarityMode,
    matrix: Matrix,
}

impl TaskSimilarity {
    pub fn independent(n_arms: usize) -> Self {
        Self {
            mode: SimilarityMode::Independent,
            matrix: Matrix::from_fn(n_arms, n_arms, |i, j| if i == j { 1.0 } else { 0.0 }),
        }
    }

    pub fn pooled(n_arms: usize) -> Self {
        Self {
            mode: SimilarityMode::Pooled,
            matrix: Matrix::from_fn(n_arms, n_arms, |_, _| 1.0),
        }
    }

    /// A user-supplied similarity matrix. Must be symmetric and PSD.
    pub fn known(matrix: Matrix) -> Result<Self> {
        validate_matrix(&matrix)?;
        Ok(Self {
            mode: SimilarityMode::Known,
            matrix,
        })
    }

    /// Known similarity built by evaluating `spec` on per-arm feature vectors,
    /// e.g. a Gaussian kernel on article angles.
    pub fn from_arm_features(spec: &KernelSpec, features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::config("no arm features supplied"));
        }
        let m = Matrix::from_fn(n, n, |i, j| spec.eval(&features[i], &features[j]));
        Self::known(m)
    }

    pub(crate) fn estimated(matrix: Matrix) -> Self {
        Self {
            mode: SimilarityMode::Estimated,
            matrix,
        }
    }

    pub fn mode(&self) -> SimilarityMode {
        self.mode
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n_arms(&self) -> usize {
        self.matrix.nrows()
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.matrix[(a, b)]
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n_arms())
            .map(|i| self.matrix[(i, i)])
            .fold(0.0, f64::max)
    }

    /// Eigenvalues of `K_Z`, descending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        symmetric_eigenvalues(&self.matrix)
    }
}

fn validate_matrix(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::config(format!(
            "task similarity must be a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, 1e-12) {
        return Err(Error::Validation("task similarity is not symmetric".into()));
    }
    let eigs = symmetric_eigenvalues(m)?;
    if !is_psd(&eigs, PSD_TOL) {
        return Err(Error::Validation(format!(
            "task similarity is not PSD (smallest eigenvalue {})",
            eigs[eigs.len() - 1]
        )));
    }
    Ok(())
}

/// `K_Z(mu) = (1 - mu) I + mu 11^T`.
pub fn parametric_task_matrix(mu: f64, n_arms: usize) -> Result<TaskSimilarity> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Domain(format!("mu must lie in [0, 1], got {mu}")));
    }
    if n_arms == 0 {
        return Err(Error::Domain("need at least one arm".into()));
    }
    Ok(TaskSimilarity {
        mode: SimilarityMode::Parametric(mu),
        matrix: Matrix::from_fn(n_arms, n_arms, |i, j| if i == j { 1.0 } else { mu }),
    })
}

/// Evaluates `k_Z` on two arm descriptors.
pub fn eval_task_kernel(ts: &TaskSimilarity, a: &ArmDescriptor, b: &ArmDescriptor) -> Result<f64> {
    let n = ts.n_arms();
    match ts.mode {
        SimilarityMode::Pooled => Ok(1.0),
        _ => {
            let (i, j) = match (a, b) {
                (ArmDescriptor::Singleton, _) | (_, ArmDescriptor::Singleton) => {
                    return Err(Error::config(
                        "singleton descriptor only valid with pooled similarity",
                    ))
                }
                _ => (a.task_index(), b.task_index()),
            };
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::Index { index: idx, len: n });
                }
            }
            match ts.mode {
                SimilarityMode::Independent => Ok(if i == j { 1.0 } else { 0.0 }),
                _ => Ok(ts.matrix[(i, j)]),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelRole;

    #[test]
    fn independent_indicator() {
        let ts = TaskSimilarity::independent(3);
        let v = eval_task_kernel(&ts, &ArmDescriptor::Arm(1), &ArmDescriptor::Arm(1)).unwrap();
        assert_eq!(v, 1.0);
        let v = eval_task_kernel(&ts, &ArmDescriptor::Arm(0), &ArmDescriptor::Arm(2)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn pooled_always_one() {
        let ts = TaskSimilarity::pooled(4);
        for (a, b) in [
            (ArmDescriptor::Arm(0), ArmDescriptor::Arm(3)),
            (ArmDescriptor::Singleton, ArmDescriptor::Singleton),
            (ArmDescriptor::Arm(2), ArmDescriptor::Singleton),
        ] {
            assert_eq!(eval_task_kernel(&ts, &a, &b).unwrap(), 1.0);
        }
    }

    #[test]
    fn out_of_range_descriptor() {
        let ts = TaskSimilarity::independent(2);
        let err = eval_task_kernel(&ts, &ArmDescriptor::Arm(2), &ArmDescriptor::Arm(0));
        assert!(matches!(err, Err(Error::Index { index: 2, len: 2 })));
    }

    #[test]
    fn parametric_limits() {
        let id = parametric_task_matrix(0.0, 4).unwrap();
        let ones = parametric_task_matrix(1.0, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(id.entry(i, j), if i == j { 1.0 } else { 0.0 });
                assert_eq!(ones.entry(i, j), 1.0);
            }
        }
    }

    #[test]
    fn parametric_domain_error() {
        assert!(matches!(parametric_task_matrix(1.5, 3), Err(Error::Domain(_))));
        assert!(matches!(parametric_task_matrix(-0.1, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn parametric_half_three_eigenvalues() {
        let e = parametric_task_matrix(0.5, 3).unwrap().eigenvalues().unwrap();
        for (got, want) in e.iter().zip([2.0, 0.5, 0.5]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn parametric_eigenvalue_formula_grid() {
        for n in 2..=8 {
            for &mu in &[0.0, 0.25, 0.5, 0.75, 1.0] {
                let e = parametric_task_matrix(mu, n).unwrap().eigenvalues().unwrap();
                let top = 1.0 + mu * (n as f64 - 1.0);
                assert!((e[0] - top).abs() < 1e-10, "n={n} mu={mu}: {e:?}");
                for v in &e[1..] {
                    assert!((v - (1.0 - mu)).abs() < 1e-10, "n={n} mu={mu}: {e:?}");
                }
            }
        }
    }

    #[test]
    fn known_rejects_asymmetric_and_indefinite() {
        let asym = Matrix::from_fn(2, 2, |i, j| if i == 0 && j == 1 { 0.5 } else if i == j { 1.0 } else { 0.0 });
        assert!(TaskSimilarity::known(asym).is_err());
        let indef = Matrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(TaskSimilarity::known(indef).is_err());
    }

    #[test]
    fn from_arm_features_gaussian() {
        let spec = KernelSpec::gaussian(1.0, KernelRole::Task).unwrap();
        let ts = TaskSimilarity::from_arm_features(&spec, &[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(ts.entry(0, 0), 1.0);
        assert!((ts.entry(0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(ts.mode(), SimilarityMode::Known);
    }
}
