//! Context kernels, task kernels and the product kernel on augmented contexts.
//!
//! An augmented context pairs an arm descriptor `z` with a context vector `x`;
//! the kernel between two augmented contexts factorizes as
//! `k((z, x), (z', x')) = k_Z(z, z') * k_X(x, x')`.

mod embedding;
mod similarity;

pub use embedding::{
    embedding_sq_distance, estimate_task_similarity, EmbeddingAccumulator,
};
pub use similarity::{eval_task_kernel, parametric_task_matrix, SimilarityMode, TaskSimilarity};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A finite real feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "context entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Context {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Identifies which task an augmented context belongs to.
///
/// Arm indices are zero-based inside the library; user-facing surfaces (policy
/// names such as `fixed:<a>`, dataset labels) are one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArmDescriptor {
    /// The arm index itself (independent and multi-task settings).
    Arm(usize),
    /// The single shared task of the pooled setting.
    Singleton,
    /// The empirical context distribution of the given arm.
    Distribution(usize),
}

impl ArmDescriptor {
    /// Row of the task-similarity matrix this descriptor maps to.
    ///
    /// `Singleton` maps to row 0; it only occurs in pooled mode where every
    /// entry of the matrix is 1.
    pub fn task_index(&self) -> usize {
        match *self {
            ArmDescriptor::Arm(a) | ArmDescriptor::Distribution(a) => a,
            ArmDescriptor::Singleton => 0,
        }
    }
}

/// The pair `(z, x)` fed to the product kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedContext {
    pub z: ArmDescriptor,
    pub x: Context,
}

impl AugmentedContext {
    pub fn new(z: ArmDescriptor, x: Context) -> Self {
        Self { z, x }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `exp(-||x - x'||^2 / (2 sigma^2))`.
    Gaussian { bandwidth: f64 },
    /// Plain dot product.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelRole {
    /// `k_X` inside the product kernel.
    Context,
    /// `k'_X` defining the mean embedding of an arm's context distribution.
    Embedding,
    /// A kernel on arm features used to build `K_Z`.
    Task,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub role: KernelRole,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64, role: KernelRole) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::config(format!(
                "Gaussian bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian { bandwidth },
            role,
        })
    }

    pub fn linear(role: KernelRole) -> Self {
        Self {
            family: KernelFamily::Linear,
            role,
        }
    }

    /// Evaluates the kernel without dimension checks.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self.family {
            KernelFamily::Gaussian { bandwidth } => {
                let sq: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelFamily::Linear => a.iter().zip(b).map(|(u, v)| u * v).sum(),
        }
    }

    /// `sup_x k(x, x)` when it does not depend on the data.
    pub fn sup(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Gaussian { .. } => Some(1.0),
            KernelFamily::Linear => None,
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Gaussian { bandwidth } => Some(bandwidth),
            KernelFamily::Linear => None,
        }
    }
}

/// Checked evaluation of a context or embedding kernel.
pub fn eval_context_kernel(spec: &KernelSpec, x: &Context, y: &Context) -> Result<f64> {
    if spec.role == KernelRole::Task {
        return Err(Error::config("task kernels cannot be evaluated on contexts"));
    }
    if x.dim() != y.dim() {
        return Err(Error::config(format!(
            "context dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(spec.eval(x.as_slice(), y.as_slice()))
}

/// `k_Z * k_X` on augmented contexts.
#[derive(Clone, Debug)]
pub struct ProductKernel {
    pub task: TaskSimilarity,
    pub context: KernelSpec,
}

impl ProductKernel {
    pub fn new(task: TaskSimilarity, context: KernelSpec) -> Result<Self> {
        if context.role == KernelRole::Task {
            return Err(Error::config("product kernel needs a context kernel"));
        }
        Ok(Self { task, context })
    }

    /// Unchecked product evaluation for hot loops.
    #[inline]
    pub fn eval(&self, u: &AugmentedContext, v: &AugmentedContext) -> f64 {
        self.task.entry(u.z.task_index(), v.z.task_index())
            * self.context.eval(u.x.as_slice(), v.x.as_slice())
    }

    /// `c_k = max diag(K_Z) * sup k_X`. For kernels without a global bound the
    /// supremum is taken over `points`.
    pub fn diag_bound(&self, points: &[AugmentedContext]) -> f64 {
        let sup_x = self.context.sup().unwrap_or_else(|| {
            points
                .iter()
                .map(|p| self.context.eval(p.x.as_slice(), p.x.as_slice()))
                .fold(0.0, f64::max)
        });
        self.task.max_diagonal() * sup_x
    }
}

/// Checked product-kernel evaluation.
pub fn eval_product_kernel(
    ts: &TaskSimilarity,
    kx: &KernelSpec,
    u: &AugmentedContext,
    v: &AugmentedContext,
) -> Result<f64> {
    let kz = eval_task_kernel(ts, &u.z, &v.z)?;
    let kxv = eval_context_kernel(kx, &u.x, &v.x)?;
    Ok(kz * kxv)
}

/// Gram matrix of the product kernel over `points`.
pub fn gram_matrix(
    ts: &TaskSimilarity,
    kx: &KernelSpec,
    points: &[AugmentedContext],
) -> Result<Matrix> {
    let n = points.len();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = eval_product_kernel(ts, kx, &points[i], &points[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Gram matrix of a plain kernel over raw vectors.
pub fn kernel_matrix(spec: &KernelSpec, points: &[&[f64]]) -> Matrix {
    let n = points.len();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(points[i], points[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Median pairwise Euclidean distance over `sqrt(2)`. `None` for fewer than
/// two points or a zero median.
pub fn median_bandwidth<P: AsRef<[f64]>>(points: &[P]) -> Option<f64> {
    let mut d = Vec::new();
    for i in 0..points.len() {
        for j in 0..i {
            let (a, b) = (points[i].as_ref(), points[j].as_ref());
            d.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    (median > 0.0).then(|| median / std::f64::consts::SQRT_2)
}

/// Incrementally grown lower-triangular cache of `k_X` between stored contexts.
#[derive(Clone, Debug)]
pub struct ContextGram {
    spec: KernelSpec,
    rows: Vec<Vec<f64>>,
    contexts: Vec<Context>,
}

impl ContextGram {
    pub fn new(spec: KernelSpec) -> Self {
        Self {
            spec,
            rows: Vec::new(),
            contexts: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &Context) {
        let mut row = Vec::with_capacity(self.contexts.len() + 1);
        for c in &self.contexts {
            row.push(self.spec.eval(x.as_slice(), c.as_slice()));
        }
        row.push(self.spec.eval(x.as_slice(), x.as_slice()));
        self.rows.push(row);
        self.contexts.push(x.clone());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn context(&self, i: usize) -> &Context {
        &self.contexts[i]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.rows[i][j]
        } else {
            self.rows[j][i]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_psd, symmetric_eigenvalues};
    use proptest::prelude::*;

    fn ctx(v: &[f64]) -> Context {
        Context::new(v.to_vec()).unwrap()
    }

    fn gauss(s: f64) -> KernelSpec {
        KernelSpec::gaussian(s, KernelRole::Context).unwrap()
    }

    #[test]
    fn gaussian_identity_is_one() {
        let x = ctx(&[0.3, -1.2]);
        assert_eq!(eval_context_kernel(&gauss(1.0), &x, &x).unwrap(), 1.0);
    }

    #[test]
    fn linear_is_dot_product() {
        let k = KernelSpec::linear(KernelRole::Context);
        let v = eval_context_kernel(&k, &ctx(&[1.0, 2.0]), &ctx(&[3.0, 4.0])).unwrap();
        assert_eq!(v, 11.0);
    }

    #[test]
    fn gaussian_at_distance_two() {
        let v = eval_context_kernel(&gauss(1.0), &ctx(&[0.0, 0.0]), &ctx(&[2.0, 0.0])).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let err = eval_context_kernel(&gauss(1.0), &ctx(&[0.0]), &ctx(&[0.0, 1.0]));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn task_role_rejected_on_contexts() {
        let k = KernelSpec::gaussian(1.0, KernelRole::Task).unwrap();
        assert!(eval_context_kernel(&k, &ctx(&[0.0]), &ctx(&[0.0])).is_err());
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(KernelSpec::gaussian(0.0, KernelRole::Context).is_err());
        assert!(KernelSpec::gaussian(-1.0, KernelRole::Context).is_err());
        assert!(KernelSpec::gaussian(f64::NAN, KernelRole::Context).is_err());
    }

    #[test]
    fn non_finite_context_rejected() {
        assert!(Context::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn pooled_product_equals_context_kernel() {
        let ts = TaskSimilarity::pooled(3);
        let u = AugmentedContext::new(ArmDescriptor::Singleton, ctx(&[0.1, 0.2]));
        let v = AugmentedContext::new(ArmDescriptor::Singleton, ctx(&[0.5, -0.2]));
        let p = eval_product_kernel(&ts, &gauss(0.7), &u, &v).unwrap();
        let c = eval_context_kernel(&gauss(0.7), &u.x, &v.x).unwrap();
        assert_eq!(p, c);
    }

    #[test]
    fn independent_product_zero_across_arms() {
        let ts = TaskSimilarity::independent(3);
        let u = AugmentedContext::new(ArmDescriptor::Arm(0), ctx(&[0.1]));
        let v = AugmentedContext::new(ArmDescriptor::Arm(2), ctx(&[0.1]));
        assert_eq!(eval_product_kernel(&ts, &gauss(1.0), &u, &v).unwrap(), 0.0);
    }

    #[test]
    fn parametric_product_off_diagonal() {
        let ts = parametric_task_matrix(0.5, 2).unwrap();
        let u = AugmentedContext::new(ArmDescriptor::Arm(0), ctx(&[0.4]));
        let v = AugmentedContext::new(ArmDescriptor::Arm(1), ctx(&[0.4]));
        assert_eq!(eval_product_kernel(&ts, &gauss(1.0), &u, &v).unwrap(), 0.5);
    }

    #[test]
    fn gram_examples() {
        let p = AugmentedContext::new(ArmDescriptor::Singleton, ctx(&[0.3]));
        let g = gram_matrix(&TaskSimilarity::pooled(1), &gauss(1.0), &[p.clone()]).unwrap();
        assert_eq!(g[(0, 0)], 1.0);

        let ts = TaskSimilarity::independent(2);
        let a = AugmentedContext::new(ArmDescriptor::Arm(0), ctx(&[0.3]));
        let g = gram_matrix(&ts, &gauss(1.0), &[a.clone(), a.clone()]).unwrap();
        assert_eq!(
            (g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]),
            (1.0, 1.0, 1.0, 1.0)
        );

        let b = AugmentedContext::new(ArmDescriptor::Arm(1), ctx(&[0.3]));
        let g = gram_matrix(&ts, &gauss(1.0), &[a, b]).unwrap();
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(1, 0)], 0.0);
    }

    #[test]
    fn context_gram_matches_direct() {
        let spec = gauss(0.8);
        let mut cache = ContextGram::new(spec);
        let xs: Vec<Context> = (0..5).map(|i| ctx(&[i as f64 * 0.3, 1.0 - i as f64])).collect();
        for x in &xs {
            cache.push(x);
        }
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(cache.get(i, j), spec.eval(xs[i].as_slice(), xs[j].as_slice()));
            }
        }
    }

    fn arb_points() -> impl Strategy<Value = Vec<(usize, Vec<f64>)>> {
        prop::collection::vec((0usize..4, prop::collection::vec(-2.0f64..2.0, 3)), 1..20)
    }

    proptest! {
        #[test]
        fn product_kernel_symmetric_and_factorizes(
            pts in arb_points(), mu in 0.0f64..=1.0, bw in 0.2f64..3.0
        ) {
            let ts = parametric_task_matrix(mu, 4).unwrap();
            let kx = gauss(bw);
            let aug: Vec<AugmentedContext> = pts
                .iter()
                .map(|(a, x)| AugmentedContext::new(ArmDescriptor::Arm(*a), ctx(x)))
                .collect();
            for u in &aug {
                for v in &aug {
                    let k_uv = eval_product_kernel(&ts, &kx, u, v).unwrap();
                    let k_vu = eval_product_kernel(&ts, &kx, v, u).unwrap();
                    prop_assert_eq!(k_uv, k_vu);
                    let factor = eval_task_kernel(&ts, &u.z, &v.z).unwrap()
                        * eval_context_kernel(&kx, &u.x, &v.x).unwrap();
                    prop_assert_eq!(k_uv, factor);
                }
            }
        }

        #[test]
        fn gram_is_psd(pts in arb_points(), mu in 0.0f64..=1.0, bw in 0.2f64..3.0, linear in any::<bool>()) {
            let ts = parametric_task_matrix(mu, 4).unwrap();
            let kx = if linear { KernelSpec::linear(KernelRole::Context) } else { gauss(bw) };
            let aug: Vec<AugmentedContext> = pts
                .iter()
                .map(|(a, x)| AugmentedContext::new(ArmDescriptor::Arm(*a), ctx(x)))
                .collect();
            let g = gram_matrix(&ts, &kx, &aug).unwrap();
            let e = symmetric_eigenvalues(&g).unwrap();
            prop_assert!(is_psd(&e, 1e-8), "eigenvalues {:?}", e);
        }
    }

    #[test]
    fn median_bandwidth_of_two_points() {
        let b = median_bandwidth(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!((b - 1.414_213_562_373_095).abs() < 1e-12);
        assert!(median_bandwidth(&[vec![1.0], vec![1.0]]).is_none());
        assert!(median_bandwidth(&[vec![1.0]]).is_none());
    }
}
