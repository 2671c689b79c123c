//! Regret aggregation and spectral diagnostics.
//!
//! Spectral quantities are computed from symmetric eigendecompositions and
//! kept in the log domain. Logarithms are natural throughout.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::{parametric_task_matrix, AugmentedContext, ProductKernel};
use crate::linalg::{symmetric_eigenvalues, Matrix};

/// Eigenvalues below `-SPECTRUM_CLAMP * lambda_max` are an error; those
/// above it and below zero are set to zero.
pub const SPECTRUM_CLAMP: f64 = 1e-8;

/// Eigenvalues at most `RANK_TOL * lambda_max` do not count toward rank.
pub const RANK_TOL: f64 = 1e-8;

/// Slack on the nonincreasing check of `log g(mu)`.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Cumulative regret of several runs of one policy.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretTrace {
    pub policy: String,
    /// Free-form description of the configuration that produced the runs.
    pub fingerprint: String,
    /// `runs[r][t-1] = R(t)` for run `r`.
    pub runs: Vec<Vec<f64>>,
}

impl RegretTrace {
    /// Checks equal lengths and that every run is nondecreasing.
    pub fn validate(&self) -> Result<()> {
        let len = self.runs.first().map_or(0, Vec::len);
        for (r, run) in self.runs.iter().enumerate() {
            if run.len() != len {
                return Err(Error::Aggregation(format!(
                    "{}: run {r} has {} rounds, run 0 has {len}",
                    self.policy,
                    run.len()
                )));
            }
            if let Some(t) = run.windows(2).position(|w| w[1] < w[0]) {
                return Err(Error::Aggregation(format!(
                    "{}: run {r} decreases at round {}",
                    self.policy,
                    t + 2
                )));
            }
        }
        Ok(())
    }
}

/// Per-round mean, sample standard deviation and `mean +- 2 std / sqrt(runs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

pub fn aggregate_runs(runs: &[Vec<f64>]) -> Result<RegretSummary> {
    let first = runs.first().ok_or_else(|| Error::Aggregation("no runs to aggregate".into()))?;
    let len = first.len();
    if let Some(r) = runs.iter().position(|r| r.len() != len) {
        return Err(Error::Aggregation(format!(
            "run {r} has {} rounds, run 0 has {len}",
            runs[r].len()
        )));
    }
    let k = runs.len() as f64;
    let mut out = RegretSummary {
        mean: Vec::with_capacity(len),
        std: Vec::with_capacity(len),
        ci_lo: Vec::with_capacity(len),
        ci_hi: Vec::with_capacity(len),
    };
    for t in 0..len {
        let mean = runs.iter().map(|r| r[t]).sum::<f64>() / k;
        let std = if runs.len() > 1 {
            (runs.iter().map(|r| (r[t] - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 2.0 * std / k.sqrt();
        out.mean.push(mean);
        out.std.push(std);
        out.ci_lo.push(mean - half);
        out.ci_hi.push(mean + half);
    }
    Ok(out)
}

/// Descending eigenvalues of a PSD Gram matrix with tiny negatives zeroed.
pub fn spectrum(gram: &Matrix) -> Result<Vec<f64>> {
    let mut e = symmetric_eigenvalues(gram)?;
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite eigenvalue"));
    }
    let top = e.first().copied().unwrap_or(0.0).max(0.0);
    for v in &mut e {
        if *v < 0.0 {
            if *v < -SPECTRUM_CLAMP * top.max(f64::MIN_POSITIVE) && *v < -SPECTRUM_CLAMP {
                return Err(Error::numerical(format!(
                    "eigenvalue {v:e} is negative beyond tolerance (largest {top:e})"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(e)
}

/// `log g = sum_i log((lambda_i + lambda) / lambda)` from eigenvalues.
pub fn log_g_from_eigenvalues(eigs: &[f64], lambda: f64) -> f64 {
    eigs.iter().map(|&e| (e / lambda).ln_1p()).sum()
}

/// `log(det(K + lambda I) / lambda^n)`.
pub fn compute_g(gram: &Matrix, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::config(format!("lambda must be positive, got {lambda}")));
    }
    Ok(log_g_from_eigenvalues(&spectrum(gram)?, lambda))
}

/// Gram matrix of `kernel` over `points`.
pub fn product_gram(kernel: &ProductKernel, points: &[AugmentedContext]) -> Matrix {
    let n = points.len();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&points[i], &points[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Smallest `j` with `j lambda ln T >= sum_{i > j} lambda_i` over descending
/// eigenvalues.
pub fn effective_rank(eigs: &[f64], lambda: f64, horizon: usize) -> usize {
    let lt = (horizon as f64).ln();
    let mut tail: f64 = eigs.iter().sum();
    for j in 0..=eigs.len() {
        if j > 0 {
            tail -= eigs[j - 1];
        }
        // Guard the running subtraction against drift below zero.
        if j as f64 * lambda * lt >= tail.max(0.0) || j == eigs.len() {
            return j;
        }
    }
    eigs.len()
}

/// Count of eigenvalues above `RANK_TOL * lambda_max`.
pub fn numerical_rank(eigs: &[f64]) -> usize {
    let top = eigs.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    eigs.iter().filter(|&&e| e > RANK_TOL * top).count()
}

/// High-probability regret bound of the master/base algorithm:
///
/// `2 sqrt(T) + 10 (sqrt(ln(2TN(ln T + 1)/delta) / 2) + c sqrt(lambda))
///   * sqrt(2 m log_g) * sqrt(T ceil(ln T))`.
pub fn regret_bound_value(horizon: usize, n_arms: usize, delta: f64, lambda: f64, c: f64, m: f64, log_g: f64) -> f64 {
    let t = horizon as f64;
    let alpha = ((2.0 * t * n_arms as f64 * (t.ln() + 1.0) / delta).ln() / 2.0).sqrt();
    2.0 * t.sqrt() + 10.0 * (alpha + c * lambda.sqrt()) * (2.0 * m * log_g).sqrt() * (t * t.ln().ceil()).sqrt()
}

/// `r ln(2T(2(T+1)c_k + r lambda - r lambda ln T) / (r lambda))`.
///
/// NaN when the logarithm's argument is not positive, which happens for large
/// `r` relative to `T c_k / lambda`.
pub fn effective_rank_gain_bound(r: usize, horizon: usize, lambda: f64, c_k: f64) -> f64 {
    let (r, t) = (r as f64, horizon as f64);
    let arg = 2.0 * t * (2.0 * (t + 1.0) * c_k + r * lambda - r * lambda * t.ln()) / (r * lambda);
    if arg > 0.0 {
        r * arg.ln()
    } else {
        f64::NAN
    }
}

/// `r_z r_x ln(((T+1) c_k + lambda) / lambda)`.
pub fn rank_product_gain_bound(r_z: usize, r_x: usize, horizon: usize, lambda: f64, c_k: f64) -> f64 {
    (r_z * r_x) as f64 * (((horizon as f64 + 1.0) * c_k + lambda) / lambda).ln()
}

/// Whether `x` is majorized by `y`: after sorting both descending, every
/// partial sum of `x` is at most that of `y` and the totals agree.
pub fn is_majorized(x: &[f64], y: &[f64], tol: f64) -> bool {
    if x.len() != y.len() {
        return false;
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(|a, b| b.total_cmp(a));
    ys.sort_by(|a, b| b.total_cmp(a));
    let (mut sx, mut sy) = (0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        sx += a;
        sy += b;
        if sx > sy + tol {
            return false;
        }
    }
    (sx - sy).abs() <= tol
}

/// `(K_Z kron 1 1^T) hadamard K_X^r`: arm blocks of size `n` scaled by the
/// corresponding task similarity. `kx_r` is ordered arm by arm.
pub fn rearranged_gram(kz: &Matrix, kx_r: &Matrix, n: usize) -> Result<Matrix> {
    let size = kz.nrows() * n;
    if kx_r.nrows() != size || kx_r.ncols() != size {
        return Err(Error::config(format!(
            "context gram is {}x{}, expected {size}x{size}",
            kx_r.nrows(),
            kx_r.ncols()
        )));
    }
    Ok(Matrix::from_fn(size, size, |i, j| kz[(i / n, j / n)] * kx_r[(i, j)]))
}

/// `log g(mu)` for the balanced rearranged Gram at each grid value.
pub fn log_g_over_mu(kx_r: &Matrix, n: usize, n_arms: usize, lambda: f64, mu_grid: &[f64]) -> Result<Vec<f64>> {
    mu_grid
        .iter()
        .map(|&mu| {
            let kz = parametric_task_matrix(mu, n_arms)?;
            compute_g(&rearranged_gram(kz.matrix(), kx_r, n)?, lambda)
        })
        .collect()
}

/// One assertion of a diagnostics run.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// Records `lhs <= rhs + slack`. NaN on either side fails.
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            pass: lhs <= rhs + slack,
        }
    }
}

/// Checks that `log g(mu)` is nonincreasing along `mu_grid` (assumed sorted
/// ascending), one record per adjacent pair.
pub fn g_mu_monotonicity_check(
    kx_r: &Matrix,
    n: usize,
    n_arms: usize,
    lambda: f64,
    mu_grid: &[f64],
) -> Result<Vec<CheckRecord>> {
    let g = log_g_over_mu(kx_r, n, n_arms, lambda, mu_grid)?;
    Ok(g
        .windows(2)
        .zip(mu_grid.windows(2))
        .map(|(gw, mw)| {
            CheckRecord::le(format!("log_g_monotone[mu={}->{}]", mw[0], mw[1]), gw[1], gw[0], MONOTONE_SLACK)
        })
        .collect())
}

/// Lower bound on the squared width:
/// `(4 n c_k l + lambda) / (n c_k l + 2 lambda)^2 (k_self + lambda) - 1`
/// with `l = lambda_max(K_Z)`.
pub fn width_lower_bound(n: usize, c_k: f64, lambda_max_kz: f64, k_self: f64, lambda: f64) -> f64 {
    let a = n as f64 * c_k * lambda_max_kz;
    (4.0 * a + lambda) / (a + 2.0 * lambda).powi(2) * (k_self + lambda) - 1.0
}

/// Checks `L <= s^2 <= c_k / lambda` for one squared width. The lower check is
/// only recorded when `L > 0`.
pub fn width_bounds_check(
    label: &str,
    s2: f64,
    k_self: f64,
    lambda_max_kz: f64,
    c_k: f64,
    n: usize,
    lambda: f64,
) -> Vec<CheckRecord> {
    let mut out = vec![CheckRecord::le(format!("width_upper[{label}]"), s2, c_k / lambda, 1e-12 * c_k / lambda)];
    let l = width_lower_bound(n, c_k, lambda_max_kz, k_self, lambda);
    if l > 0.0 {
        out.push(CheckRecord::le(format!("width_lower[{label}]"), l, s2, 1e-12));
    }
    out
}

/// Writes records as CSV with header `name,lhs,rhs,pass`.
pub fn write_report(path: &Path, records: &[CheckRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("name,lhs,rhs,pass\n");
    for r in records {
        body.push_str(&format!("{},{:e},{:e},{}\n", r.name, r.lhs, r.rhs, r.pass));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;
    use proptest::prelude::*;

    #[test]
    fn aggregate_examples() {
        let s = aggregate_runs(&[vec![1.0, 2.0, 3.0], vec![3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(s.mean, vec![2.0, 3.0, 4.0]);
        for v in &s.std {
            assert!((v - 2f64.sqrt()).abs() < 1e-15);
        }
        let one = aggregate_runs(&[vec![0.5, 1.5]]).unwrap();
        assert_eq!(one.mean, vec![0.5, 1.5]);
        assert_eq!(one.ci_lo, one.ci_hi);
        assert!(matches!(aggregate_runs(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Aggregation(_))));
        assert!(aggregate_runs(&[]).is_err());
    }

    #[test]
    fn trace_validation() {
        let good = RegretTrace { policy: "p".into(), fingerprint: String::new(), runs: vec![vec![0.0, 1.0]] };
        assert!(good.validate().is_ok());
        let bad = RegretTrace { policy: "p".into(), fingerprint: String::new(), runs: vec![vec![1.0, 0.5]] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn g_examples() {
        let i2 = from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((compute_g(&i2, 1.0).unwrap() - 4f64.ln()).abs() < 1e-14);
        assert_eq!(compute_g(&Matrix::zeros(3, 3), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn effective_rank_examples() {
        assert_eq!(effective_rank(&[5.0, 0.0, 0.0], 1.0, 2), 1);
        assert_eq!(effective_rank(&[0.0, 0.0, 0.0], 1.0, 2), 0);
        assert_eq!(effective_rank(&[3.0, 3.0, 3.0], 1.0, 2), 3);
    }

    #[test]
    fn bound_examples() {
        assert!((regret_bound_value(100, 5, 0.05, 1.0, 1.0, 1.0, 0.0) - 20.0).abs() < 1e-12);
        // Independent arithmetic: alpha = sqrt(ln(2*100*5*(ln 100 + 1)/0.05)/2).
        let lt = 100f64.ln();
        let alpha = ((1000.0 * (lt + 1.0) / 0.05).ln() * 0.5).sqrt();
        let want = 2.0 * 10.0 + 10.0 * (alpha + 1.0) * 20f64.sqrt() * (100.0 * 5.0f64).sqrt();
        let got = regret_bound_value(100, 5, 0.05, 1.0, 1.0, 1.0, 10.0);
        assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        let mut prev = 0.0;
        for i in 0..50 {
            let v = regret_bound_value(100, 5, 0.05, 1.0, 1.0, 1.0, i as f64 * 0.7);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn rank_product_bound_and_rank() {
        assert_eq!(numerical_rank(&[2.0, 1e-9, 0.0]), 1);
        assert_eq!(numerical_rank(&[0.0, 0.0]), 0);
        assert!((rank_product_gain_bound(2, 3, 9, 1.0, 1.0) - 6.0 * 11f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn majorization_example() {
        let a = parametric_task_matrix(0.2, 3).unwrap().eigenvalues().unwrap();
        let b = parametric_task_matrix(0.8, 3).unwrap().eigenvalues().unwrap();
        assert!((a[0] - 1.4).abs() < 1e-12 && (a[2] - 0.8).abs() < 1e-12);
        assert!((b[0] - 2.6).abs() < 1e-12 && (b[2] - 0.2).abs() < 1e-12);
        assert!(is_majorized(&a, &b, 1e-12));
        assert!(!is_majorized(&b, &a, 1e-12));
    }

    #[test]
    fn width_lower_bound_nonincreasing_in_mu() {
        // N = 3, n = 2, c_k = 1, lambda = 1, k_self = 1.
        let mut prev = f64::INFINITY;
        for i in 0..=10 {
            let mu = i as f64 / 10.0;
            let l = 1.0 + mu * 2.0;
            let v = width_lower_bound(2, 1.0, l, 1.0, 1.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn report_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_report(&p, &[CheckRecord::le("a", 1.0, 2.0, 0.0)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "name,lhs,rhs,pass\na,1e0,2e0,true\n");
        write_report(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "name,lhs,rhs,pass\n");
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    fn dense_log_det(m: &Matrix) -> f64 {
        let n = m.nrows();
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
        let mut log_det = 0.0;
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            let piv = a[k][k];
            log_det += piv.abs().ln();
            for i in k + 1..n {
                let f = a[i][k] / piv;
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        log_det
    }

    fn arb_gram() -> impl Strategy<Value = Matrix> {
        (1usize..20).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), n).prop_map(|pts| {
                let n = pts.len();
                Matrix::from_fn(n, n, |i, j| {
                    let d: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d / 0.5).exp()
                })
            })
        })
    }

    proptest! {
        #[test]
        fn g_matches_dense_determinant(k in arb_gram(), lambda in 0.05f64..3.0) {
            let n = k.nrows();
            let shifted = Matrix::from_fn(n, n, |i, j| k[(i, j)] + if i == j { lambda } else { 0.0 });
            let want = dense_log_det(&shifted) - n as f64 * lambda.ln();
            let got = compute_g(&k, lambda).unwrap();
            prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{} vs {}", got, want);
        }

        #[test]
        fn effective_rank_is_minimal(eigs in prop::collection::vec(0.0f64..5.0, 1..12), lambda in 0.1f64..2.0, t in 2usize..500) {
            let mut e = eigs;
            e.sort_by(|a, b| b.total_cmp(a));
            let r = effective_rank(&e, lambda, t);
            let holds = |j: usize| j as f64 * lambda * (t as f64).ln() >= e[j..].iter().sum::<f64>();
            prop_assert!(holds(r));
            for j in 0..r {
                prop_assert!(!holds(j));
            }
        }
    }
}
