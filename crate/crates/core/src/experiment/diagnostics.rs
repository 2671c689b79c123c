//! Seeded theory checks behind `kmtl diagnose`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    g_mu_monotonicity_check, is_majorized, product_gram, rearranged_gram, spectrum, width_bounds_check,
    width_lower_bound, CheckRecord, MONOTONE_SLACK,
};
use crate::error::{Error, Result};
use crate::history::History;
use crate::kernel::{
    kernel_matrix, parametric_task_matrix, ArmDescriptor, AugmentedContext, Context, KernelRole, KernelSpec,
    ProductKernel, TaskSimilarity,
};
use crate::regressor::{fit, RegressionMode};

/// Check groups in execution order.
pub const CHECK_GROUPS: [&str; 4] = ["width", "g_mu", "rearrangement", "bounds"];

/// Fault that divides squared widths by `lambda` a second time.
pub const FAULT_WIDTH_OFF_BY_LAMBDA: &str = "width-off-by-lambda";

/// Grid `0, 0.1, ..., 1`.
pub fn mu_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub seed: u64,
    /// Random instances per group.
    pub instances: usize,
    /// Groups to run; all of [`CHECK_GROUPS`] when absent.
    pub checks: Option<Vec<String>>,
    pub inject_fault: Option<String>,
    /// Horizon and run count of the episodes behind the `bounds` group.
    pub horizon: usize,
    pub runs: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 50,
            checks: None,
            inject_fault: None,
            horizon: 200,
            runs: 3,
        }
    }
}

impl DiagnosticsConfig {
    fn groups(&self) -> Result<Vec<&str>> {
        let Some(list) = &self.checks else {
            return Ok(CHECK_GROUPS.to_vec());
        };
        list.iter()
            .map(|g| {
                CHECK_GROUPS.iter().copied().find(|k| k == g).ok_or_else(|| {
                    Error::config(format!("unknown check group '{g}' (known: {})", CHECK_GROUPS.join(", ")))
                })
            })
            .collect()
    }

    fn fault(&self) -> Result<bool> {
        match self.inject_fault.as_deref() {
            None => Ok(false),
            Some(FAULT_WIDTH_OFF_BY_LAMBDA) => Ok(true),
            Some(other) => Err(Error::config(format!(
                "unknown fault '{other}' (known: {FAULT_WIDTH_OFF_BY_LAMBDA})"
            ))),
        }
    }
}

/// Runs the selected groups and returns one record per assertion.
pub fn run_diagnostics(cfg: &DiagnosticsConfig) -> Result<Vec<CheckRecord>> {
    let groups = cfg.groups()?;
    let fault = cfg.fault()?;
    let mut out = Vec::new();
    for g in groups {
        match g {
            "width" => out.extend(width_checks(cfg.seed, cfg.instances, fault)?),
            "g_mu" => out.extend(g_mu_checks(cfg.seed, cfg.instances)?),
            "rearrangement" => out.extend(rearrangement_checks(cfg.seed, cfg.instances)?),
            "bounds" => out.extend(episode_bound_checks(cfg)?),
            _ => unreachable!(),
        }
    }
    Ok(out)
}

fn rng_for(seed: u64, group: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(group);
    rng
}

fn random_point(rng: &mut ChaCha8Rng) -> Context {
    Context::new(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).expect("finite")
}

/// Balanced history: `n` rounds per arm, arms interleaved round-robin.
fn balanced_history(rng: &mut ChaCha8Rng, n_arms: usize, n: usize) -> Result<History> {
    let mut h = History::new(n_arms);
    for t in 0..n_arms * n {
        let a = t % n_arms;
        h.push(t + 1, a, AugmentedContext::new(ArmDescriptor::Arm(a), random_point(rng)), rng.random_range(0.0..1.0))?;
    }
    Ok(h)
}

struct WidthInstance {
    label: String,
    history: History,
    kernel: ProductKernel,
    lambda: f64,
    queries: Vec<AugmentedContext>,
}

/// Two arms, independent tasks, one pull each near the origin, queries far
/// away. With `lambda = 0.1` the lower bound is about 2.13 and the squared
/// widths are close to 10.
fn positive_lower_bound_instance() -> Result<WidthInstance> {
    let kernel = ProductKernel::new(TaskSimilarity::independent(2), KernelSpec::gaussian(1.0, KernelRole::Context)?)?;
    let mut history = History::new(2);
    for a in 0..2 {
        history.push(a + 1, a, AugmentedContext::new(ArmDescriptor::Arm(a), Context::new(vec![0.0, 0.0])?), 0.5)?;
    }
    let queries = (0..2)
        .map(|a| Ok(AugmentedContext::new(ArmDescriptor::Arm(a), Context::new(vec![8.0, 8.0])?)))
        .collect::<Result<_>>()?;
    Ok(WidthInstance {
        label: "positive_L".into(),
        history,
        kernel,
        lambda: 0.1,
        queries,
    })
}

fn width_records(inst: &WidthInstance, fault: bool) -> Result<Vec<CheckRecord>> {
    let state = fit(&inst.history, &inst.kernel, inst.lambda, RegressionMode::Unweighted)?;
    let c_k = inst.kernel.context.sup().unwrap_or(1.0) * inst.kernel.task.max_diagonal();
    let lmax = inst.kernel.task.eigenvalues()?[0];
    let n = inst.history.pull_counts().iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    for (i, q) in inst.queries.iter().enumerate() {
        let mut s2 = state.width(q)?.powi(2);
        if fault {
            s2 /= inst.lambda;
        }
        let k_self = inst.kernel.eval(q, q);
        out.extend(width_bounds_check(&format!("{}#{}", inst.label, i), s2, k_self, lmax, c_k, n, inst.lambda));
    }
    Ok(out)
}

/// Upper and lower width bounds on random balanced instances at `lambda = 1`
/// plus the constructed positive-L instance, then `L(mu)` on a grid.
pub fn width_checks(seed: u64, instances: usize, fault: bool) -> Result<Vec<CheckRecord>> {
    let mut rng = rng_for(seed, 1);
    let mut out = width_records(&positive_lower_bound_instance()?, fault)?;
    for i in 0..instances {
        let n_arms = rng.random_range(2..=5);
        let n = rng.random_range(1..=4);
        let mu = rng.random_range(0.0..=1.0);
        let history = balanced_history(&mut rng, n_arms, n)?;
        let kernel = ProductKernel::new(
            parametric_task_matrix(mu, n_arms)?,
            KernelSpec::gaussian(rng.random_range(0.2..2.0), KernelRole::Context)?,
        )?;
        let queries = (0..n_arms)
            .map(|a| AugmentedContext::new(ArmDescriptor::Arm(a), random_point(&mut rng)))
            .collect();
        let inst = WidthInstance {
            label: format!("random{i}"),
            history,
            kernel,
            lambda: 1.0,
            queries,
        };
        out.extend(width_records(&inst, fault)?);
    }
    let (n_arms, n, c_k, lambda) = (3usize, 2usize, 1.0, 1.0);
    let grid = mu_grid();
    let ls: Vec<f64> = grid
        .iter()
        .map(|&mu| Ok(width_lower_bound(n, c_k, parametric_task_matrix(mu, n_arms)?.eigenvalues()?[0], 1.0, lambda)))
        .collect::<Result<_>>()?;
    for (lw, mw) in ls.windows(2).zip(grid.windows(2)) {
        out.push(CheckRecord::le(format!("L_monotone[mu={}->{}]", mw[0], mw[1]), lw[1], lw[0], MONOTONE_SLACK));
    }
    Ok(out)
}

/// Random context gram of `size` points with a random Gaussian bandwidth.
fn random_context_gram(rng: &mut ChaCha8Rng, size: usize) -> Result<crate::linalg::Matrix> {
    let spec = KernelSpec::gaussian(rng.random_range(0.2..2.0), KernelRole::Context)?;
    let pts: Vec<Vec<f64>> = (0..size).map(|_| random_point(rng).into_inner()).collect();
    let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
    Ok(kernel_matrix(&spec, &refs))
}

/// `log g(mu)` monotonicity on random balanced instances and majorization
/// of the parametric similarity spectra along the grid.
pub fn g_mu_checks(seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = rng_for(seed, 2);
    let grid = mu_grid();
    let mut out = Vec::new();
    for i in 0..instances {
        let n_arms = rng.random_range(2..=5);
        let n = rng.random_range(1..=6);
        let lambda = [0.1, 1.0][rng.random_range(0..2)];
        let kx = random_context_gram(&mut rng, n_arms * n)?;
        for mut r in g_mu_monotonicity_check(&kx, n, n_arms, lambda, &grid)? {
            r.name = format!("instance{i}/{}", r.name);
            out.push(r);
        }
        for w in grid.windows(2) {
            let lo = parametric_task_matrix(w[0], n_arms)?.eigenvalues()?;
            let hi = parametric_task_matrix(w[1], n_arms)?.eigenvalues()?;
            let ok = is_majorized(&lo, &hi, 1e-9);
            out.push(CheckRecord {
                name: format!("instance{i}/majorized[N={n_arms},mu={}->{}]", w[0], w[1]),
                lhs: lo[0],
                rhs: hi[0],
                pass: ok,
            });
        }
    }
    Ok(out)
}

/// Spectrum of the product gram of an interleaved balanced history against
/// the arm-sorted rearranged form.
pub fn rearrangement_checks(seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = rng_for(seed, 3);
    let mut out = Vec::new();
    for i in 0..instances {
        let n_arms = rng.random_range(2..=5);
        let n = rng.random_range(1..=6);
        let mu = rng.random_range(0.0..=1.0);
        let history = balanced_history(&mut rng, n_arms, n)?;
        let ctx = KernelSpec::gaussian(rng.random_range(0.2..2.0), KernelRole::Context)?;
        let kz = parametric_task_matrix(mu, n_arms)?;
        let kernel = ProductKernel::new(kz.clone(), ctx)?;
        let direct = spectrum(&product_gram(&kernel, &history.points()))?;
        let mut sorted: Vec<&[f64]> = Vec::with_capacity(n_arms * n);
        for a in 0..n_arms {
            sorted.extend(history.contexts_of(a).map(Context::as_slice));
        }
        let rearranged = spectrum(&rearranged_gram(kz.matrix(), &kernel_matrix(&ctx, &sorted), n)?)?;
        let diff = direct.iter().zip(&rearranged).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let tol = 1e-8 * direct[0].max(1.0);
        out.push(CheckRecord::le(format!("rearranged_spectrum[instance{i}]"), diff, tol, 0.0));
    }
    Ok(out)
}

/// Information-gain and regret-bound checks on short seeded
/// synthetic episodes of KMTL-UCB.
pub fn episode_bound_checks(cfg: &DiagnosticsConfig) -> Result<Vec<CheckRecord>> {
    let exp = super::ExperimentConfig {
        policies: vec!["kmtl-ucb".into()],
        horizon: cfg.horizon,
        runs: cfg.runs,
        seed: cfg.seed,
        ..Default::default()
    };
    let report = super::run_experiment(&exp)?;
    let mut out = Vec::new();
    for (r, o) in report.outcomes[0].iter().enumerate() {
        out.extend(super::run_bound_checks(o, &report.params, &format!("kmtl-ucb/run{}", r + 1))?);
    }
    Ok(out)
}
