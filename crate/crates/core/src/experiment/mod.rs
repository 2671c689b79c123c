//! Seeded multi-run experiments, their output files and run-time bound checks.

mod bandwidth;
pub mod diagnostics;
pub mod fetch;

pub use bandwidth::{select_bandwidth, BandwidthStrategy, FALLBACK_BANDWIDTH};
pub use diagnostics::{run_diagnostics, DiagnosticsConfig};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate_runs, effective_rank_gain_bound, effective_rank, log_g_from_eigenvalues, numerical_rank, product_gram,
    regret_bound_value, spectrum, rank_product_gain_bound, CheckRecord, RegretTrace,
};
use crate::env::{
    builtin_manifest, load_dataset, mini_digits_dataset, split_dataset, DatasetFormat, Environment, ManifestEntry,
    MulticlassDataset, MulticlassEnv, SyntheticNews, SyntheticNewsConfig,
};
use crate::error::{Error, Result};
use crate::kernel::{
    embedding_sq_distance, kernel_matrix, median_bandwidth, KernelRole, KernelSpec, TaskSimilarity,
};
use crate::policy::{
    run_episode, EpisodeOutcome, FixedArm, KernelUcbInd, KernelUcbPool, KmtlUcb, OraclePolicy, Policy,
    PolicyConfig, RandomPolicy, SimilaritySource, SupKmtlUcb,
};
use crate::regressor::RegressionMode;

/// Policy names accepted in configs and on the command line.
pub const POLICY_NAMES: [&str; 8] = [
    "kmtl-ucb",
    "kmtl-ucb-est",
    "kernel-ucb-ind",
    "kernel-ucb-pool",
    "sup-kmtl-ucb",
    "oracle",
    "random",
    "fixed:<a>",
];

/// Environment variable overriding the data directory.
pub const DATA_DIR_VAR: &str = "KMTL_DATA_DIR";

/// Stream index reserved for drawing synthetic validation rounds.
const VALIDATION_STREAM: u64 = u64::MAX;

/// A bandwidth given as a number or as `"auto"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthSetting {
    Fixed(f64),
    Named(String),
}

impl Default for BandwidthSetting {
    fn default() -> Self {
        Self::Named("auto".into())
    }
}

impl BandwidthSetting {
    fn fixed(&self, what: &str) -> Result<Option<f64>> {
        match self {
            Self::Fixed(v) if v.is_finite() && *v > 0.0 => Ok(Some(*v)),
            Self::Fixed(v) => Err(Error::config(format!("{what} bandwidth must be positive, got {v}"))),
            Self::Named(s) if s == "auto" => Ok(None),
            Self::Named(s) => Err(Error::config(format!("{what} bandwidth must be a number or \"auto\", got '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    /// Context kernel `k_X`.
    pub context: BandwidthSetting,
    /// Embedding kernel `k'_X` used to estimate task similarity.
    pub embedding: BandwidthSetting,
    /// Width of the Gaussian on embedding distances.
    pub sigma_z: BandwidthSetting,
    /// Gaussian on article angles for the synthetic known similarity.
    pub task: BandwidthSetting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_arms: usize,
    pub noise_std: f64,
    /// Rounds drawn from a separate stream for bandwidth selection.
    pub validation_rounds: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            n_arms: 5,
            noise_std: 0.0,
            validation_rounds: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MulticlassSection {
    /// `mini-digits` for the bundled fixture, else a manifest name.
    pub dataset: String,
    /// Explicit file; otherwise the manifest path under the data directory.
    pub path: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
    /// TOML manifest replacing the built-in one.
    pub manifest: Option<PathBuf>,
    pub validation_fraction: f64,
}

impl Default for MulticlassSection {
    fn default() -> Self {
        Self {
            dataset: "mini-digits".into(),
            path: None,
            format: None,
            manifest: None,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `synthetic` or `multiclass`.
    pub env: String,
    pub policies: Vec<String>,
    #[serde(alias = "T")]
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub lambda: f64,
    /// Exploration weight; the theoretical multiplier when absent.
    pub beta: Option<f64>,
    pub delta: f64,
    pub c: f64,
    pub similarity_period: usize,
    pub regression: RegressionMode,
    pub bandwidth_strategy: BandwidthStrategy,
    pub out: PathBuf,
    /// Also write `diagnostics.csv` with run-time bound checks.
    pub diagnostics: bool,
    pub kernel: KernelSection,
    pub synthetic: SyntheticSection,
    pub multiclass: MulticlassSection,
    #[serde(rename = "diagnose")]
    pub diagnose: DiagnosticsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "synthetic".into(),
            policies: vec![
                "kernel-ucb-pool".into(),
                "kernel-ucb-ind".into(),
                "kmtl-ucb".into(),
                "kmtl-ucb-est".into(),
            ],
            horizon: 1000,
            runs: 10,
            seed: 0,
            lambda: 1.0,
            beta: None,
            delta: 0.05,
            c: 1.0,
            similarity_period: 1,
            regression: RegressionMode::Weighted,
            bandwidth_strategy: BandwidthStrategy::Median,
            out: PathBuf::from("out"),
            diagnostics: false,
            kernel: KernelSection::default(),
            synthetic: SyntheticSection::default(),
            multiclass: MulticlassSection::default(),
            diagnose: DiagnosticsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("T must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("no policies configured"));
        }
        for p in &self.policies {
            if !known_policy(p) {
                return Err(Error::config(format!(
                    "unknown policy '{p}' (known: {})",
                    POLICY_NAMES.join(", ")
                )));
            }
        }
        env_kind(&self.env)?;
        Ok(())
    }
}

fn known_policy(name: &str) -> bool {
    POLICY_NAMES[..7].contains(&name) || name.strip_prefix("fixed:").is_some_and(|a| a.parse::<usize>().is_ok())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EnvKind {
    Synthetic,
    Multiclass,
}

fn env_kind(name: &str) -> Result<EnvKind> {
    match name {
        "synthetic" => Ok(EnvKind::Synthetic),
        "multiclass" => Ok(EnvKind::Multiclass),
        other => Err(Error::config(format!("unknown environment '{other}' (known: synthetic, multiclass)"))),
    }
}

/// Hyperparameters after `auto` values have been resolved.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub env: String,
    pub n_arms: usize,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub lambda: f64,
    pub beta: f64,
    pub delta: f64,
    pub c: f64,
    pub regression: String,
    pub similarity_period: usize,
    pub context_bandwidth: f64,
    pub embedding_bandwidth: f64,
    pub sigma_z: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

/// Everything policies and environments need for one experiment.
#[derive(Clone, Debug)]
pub struct Setup {
    pub params: ResolvedParams,
    pub policy: PolicyConfig,
    pub context_kernel: KernelSpec,
    pub embedding_kernel: KernelSpec,
    pub known: Option<TaskSimilarity>,
    synthetic: Option<SyntheticNewsConfig>,
    dataset: Option<Arc<MulticlassDataset>>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let kind = env_kind(&cfg.env)?;
        let (synthetic, dataset, n_arms) = match kind {
            EnvKind::Synthetic => {
                let mut sc = SyntheticNewsConfig::new(cfg.synthetic.n_arms)?;
                sc.noise_std = cfg.synthetic.noise_std;
                sc.validate()?;
                (Some(sc), None, cfg.synthetic.n_arms)
            }
            EnvKind::Multiclass => {
                let ds = open_dataset(&cfg.multiclass).map_err(|e| Error::Dataset {
                    name: cfg.multiclass.dataset.clone(),
                    source: Box::new(e),
                })?;
                let ds = split_dataset(&ds, cfg.multiclass.validation_fraction, cfg.seed)?;
                let n = ds.n_classes;
                (None, Some(Arc::new(ds)), n)
            }
        };
        // Validation samples: points, regression targets and the arm they belong to.
        let (points, targets, groups) = match (&synthetic, &dataset) {
            (Some(sc), _) => synthetic_validation(sc, cfg.seed, cfg.synthetic.validation_rounds)?,
            (_, Some(ds)) => multiclass_validation(ds),
            _ => unreachable!(),
        };
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        let context_bw = match cfg.kernel.context.fixed("context")? {
            Some(v) => v,
            None => select_bandwidth(&refs, Some(&targets), cfg.bandwidth_strategy, cfg.lambda, cfg.seed),
        };
        let embedding_bw = cfg.kernel.embedding.fixed("embedding")?.unwrap_or(context_bw);
        let embedding_kernel = KernelSpec::gaussian(embedding_bw, KernelRole::Embedding)?;
        let sigma_z = match cfg.kernel.sigma_z.fixed("sigma_z")? {
            Some(v) => v,
            None => embedding_sigma(&embedding_kernel, &points, &groups, n_arms),
        };
        let task_bw = cfg.kernel.task.fixed("task")?;
        let known = match &synthetic {
            Some(sc) => Some(sc.known_similarity(task_bw)?),
            None => None,
        };
        let mut policy = PolicyConfig::theoretical(cfg.horizon, n_arms);
        policy.lambda = cfg.lambda;
        policy.delta = cfg.delta;
        policy.c = cfg.c;
        policy.similarity_period = cfg.similarity_period;
        policy.regression = cfg.regression;
        policy.beta = cfg.beta.unwrap_or_else(|| policy.theoretical_beta(n_arms));
        policy.validate()?;
        let task_bandwidth = synthetic.as_ref().map(|sc| {
            task_bw.unwrap_or_else(|| {
                let feats: Vec<Vec<f64>> = sc.angles.iter().map(|&t| vec![t]).collect();
                median_bandwidth(&feats).unwrap_or(FALLBACK_BANDWIDTH)
            })
        });
        let params = ResolvedParams {
            env: cfg.env.clone(),
            n_arms,
            horizon: cfg.horizon,
            runs: cfg.runs,
            seed: cfg.seed,
            lambda: policy.lambda,
            beta: policy.beta,
            delta: policy.delta,
            c: policy.c,
            regression: format!("{:?}", policy.regression).to_lowercase(),
            similarity_period: policy.similarity_period,
            context_bandwidth: context_bw,
            embedding_bandwidth: embedding_bw,
            sigma_z,
            task_bandwidth,
            dataset: dataset.as_ref().map(|d| d.name.clone()),
        };
        Ok(Self {
            params,
            policy,
            context_kernel: KernelSpec::gaussian(context_bw, KernelRole::Context)?,
            embedding_kernel,
            known,
            synthetic,
            dataset,
        })
    }

    pub fn n_arms(&self) -> usize {
        self.params.n_arms
    }

    pub fn dataset(&self) -> Option<&MulticlassDataset> {
        self.dataset.as_deref()
    }

    /// Environment for run `run` (0-based). All policies in a run share it.
    pub fn environment(&self, run: usize) -> Result<Box<dyn Environment>> {
        let stream = run as u64;
        match (&self.synthetic, &self.dataset) {
            (Some(sc), _) => Ok(Box::new(SyntheticNews::new(sc.clone(), self.params.seed, stream)?)),
            (_, Some(ds)) => Ok(Box::new(MulticlassEnv::new(Arc::clone(ds), self.params.seed, stream))),
            _ => unreachable!(),
        }
    }

    fn known_similarity(&self, name: &str) -> Result<TaskSimilarity> {
        self.known.clone().ok_or_else(|| {
            Error::config(format!(
                "policy '{name}' needs a known task similarity, which the {} environment does not have",
                self.params.env
            ))
        })
    }

    /// Instantiates a policy by name for run `run` (0-based).
    pub fn build_policy(&self, name: &str, run: usize) -> Result<Box<dyn Policy>> {
        let n = self.n_arms();
        let cfg = self.policy.clone();
        let kx = self.context_kernel;
        let multiclass = self.dataset.is_some();
        Ok(match name {
            "kmtl-ucb" => Box::new(KmtlUcb::new(name, n, kx, SimilaritySource::Fixed(self.known_similarity(name)?), cfg)?),
            "kmtl-ucb-est" => Box::new(KmtlUcb::new(
                name,
                n,
                kx,
                SimilaritySource::Estimated {
                    embedding: self.embedding_kernel,
                    sigma_z: self.params.sigma_z,
                },
                cfg,
            )?),
            "kernel-ucb-ind" => Box::new(KernelUcbInd::new(name, n, kx, cfg)?),
            "kernel-ucb-pool" if multiclass => {
                return Err(Error::config(
                    "kernel-ucb-pool is not meaningful when every arm shares the same context",
                ))
            }
            "kernel-ucb-pool" => Box::new(KernelUcbPool::new(name, n, kx, cfg)?),
            "sup-kmtl-ucb" => Box::new(SupKmtlUcb::new(name, kx, self.known_similarity(name)?, cfg)?),
            "oracle" => Box::new(OraclePolicy),
            "random" => Box::new(RandomPolicy::new(self.params.seed ^ 0x5EED_0000_0000_0000, run as u64)),
            other => match other.strip_prefix("fixed:").map(str::parse::<usize>) {
                Some(Ok(a)) if (1..=n).contains(&a) => Box::new(FixedArm::new(a - 1)),
                Some(Ok(a)) => return Err(Error::config(format!("fixed arm {a} outside 1..={n}"))),
                _ => {
                    return Err(Error::config(format!(
                        "unknown policy '{other}' (known: {})",
                        POLICY_NAMES.join(", ")
                    )))
                }
            },
        })
    }
}

fn open_dataset(sec: &MulticlassSection) -> Result<MulticlassDataset> {
    if sec.dataset == "mini-digits" && sec.path.is_none() {
        return mini_digits_dataset();
    }
    let manifest: Vec<ManifestEntry> = match &sec.manifest {
        Some(p) => crate::env::read_manifest(p)?,
        None => builtin_manifest(),
    };
    let entry = manifest.iter().find(|e| e.name == sec.dataset);
    let path = match (&sec.path, entry) {
        (Some(p), _) => p.clone(),
        (None, Some(e)) => data_dir().join(&e.path),
        (None, None) => return Err(Error::config(format!("dataset '{}' is not in the manifest", sec.dataset))),
    };
    let format = sec
        .format
        .or(entry.map(|e| e.format))
        .ok_or_else(|| Error::config("dataset format unknown; set multiclass.format"))?;
    load_dataset(&path, format, entry)
}

/// Data directory: `$KMTL_DATA_DIR` or `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

type Validation = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>);

fn synthetic_validation(sc: &SyntheticNewsConfig, seed: u64, rounds: usize) -> Result<Validation> {
    let mut env = SyntheticNews::new(sc.clone(), seed, VALIDATION_STREAM)?;
    let (mut points, mut targets, mut groups) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..rounds {
        let obs = env.next_round()?.expect("synthetic stream is unbounded");
        for (a, x) in obs.contexts.iter().enumerate() {
            points.push(x.as_slice().to_vec());
            targets.push(vec![obs.realized[a]]);
            groups.push(a);
        }
    }
    Ok((points, targets, groups))
}

fn multiclass_validation(ds: &MulticlassDataset) -> Validation {
    let points = ds.validation.iter().map(|&i| ds.features[i].clone()).collect();
    let targets = ds
        .validation
        .iter()
        .map(|&i| (0..ds.n_classes).map(|c| if c == ds.labels[i] { 1.0 } else { 0.0 }).collect())
        .collect();
    let groups = ds.validation.iter().map(|&i| ds.labels[i]).collect();
    (points, targets, groups)
}

/// Median heuristic over the embedding distances between arms' validation
/// samples.
fn embedding_sigma(kernel: &KernelSpec, points: &[Vec<f64>], groups: &[usize], n_arms: usize) -> f64 {
    let by_arm: Vec<Vec<&Vec<f64>>> = (0..n_arms)
        .map(|a| points.iter().zip(groups).filter(|(_, &g)| g == a).map(|(p, _)| p).collect())
        .collect();
    let mut dists = Vec::new();
    for a in 0..n_arms {
        for b in 0..a {
            if !by_arm[a].is_empty() && !by_arm[b].is_empty() {
                dists.push(embedding_sq_distance(kernel, &by_arm[a], &by_arm[b]).sqrt());
            }
        }
    }
    match median_abs(&dists) {
        Some(m) if m > 0.0 => m / std::f64::consts::SQRT_2,
        _ => {
            log::warn!("cannot estimate sigma_Z from {} embedding distance(s); using {FALLBACK_BANDWIDTH}", dists.len());
            FALLBACK_BANDWIDTH
        }
    }
}

fn median_abs(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    Some(if m % 2 == 1 { s[m / 2] } else { 0.5 * (s[m / 2 - 1] + s[m / 2]) })
}

/// Result of [`run_experiment`]: one entry per configured policy, runs in order.
#[derive(Debug)]
pub struct ExperimentReport {
    pub params: ResolvedParams,
    pub policies: Vec<String>,
    /// `outcomes[p][r]` for policy `p` and run `r`.
    pub outcomes: Vec<Vec<EpisodeOutcome>>,
}

impl ExperimentReport {
    pub fn traces(&self) -> Vec<RegretTrace> {
        self.policies
            .iter()
            .zip(&self.outcomes)
            .map(|(p, runs)| RegretTrace {
                policy: p.clone(),
                fingerprint: fingerprint(&self.params),
                runs: runs.iter().map(|o| o.cum_regret.clone()).collect(),
            })
            .collect()
    }

    pub fn final_regrets(&self, policy: &str) -> Option<Vec<f64>> {
        let p = self.policies.iter().position(|n| n == policy)?;
        Some(self.outcomes[p].iter().map(EpisodeOutcome::final_regret).collect())
    }
}

fn fingerprint(p: &ResolvedParams) -> String {
    format!(
        "env={} N={} T={} runs={} seed={} lambda={} beta={} sigma_x={}",
        p.env, p.n_arms, p.horizon, p.runs, p.seed, p.lambda, p.beta, p.context_bandwidth
    )
}

/// Runs every (policy, run) episode on a worker pool. Results come back in
/// configuration order regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let setup = Setup::new(cfg)?;
    // Surface construction errors before spending time on episodes.
    for p in &cfg.policies {
        setup.build_policy(p, 0)?;
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.policies.len())
        .flat_map(|p| (0..cfg.runs).map(move |r| (p, r)))
        .collect();
    let results: Vec<Result<EpisodeOutcome>> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let mut env = setup.environment(r)?;
            let mut policy = setup.build_policy(&cfg.policies[p], r)?;
            let lookahead = policy.snapshot().is_some();
            let out = run_episode(env.as_mut(), policy.as_mut(), cfg.horizon, lookahead)?;
            log::debug!("{} run {} final regret {}", cfg.policies[p], r + 1, out.final_regret());
            Ok(out)
        })
        .collect();
    let mut outcomes: Vec<Vec<EpisodeOutcome>> = (0..cfg.policies.len()).map(|_| Vec::new()).collect();
    for ((p, _), res) in jobs.iter().zip(results) {
        outcomes[*p].push(res?);
    }
    Ok(ExperimentReport {
        params: setup.params,
        policies: cfg.policies.clone(),
        outcomes,
    })
}

/// `policy,run,t,cum_regret` with 1-based runs and rounds.
pub fn regret_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("policy,run,t,cum_regret\n");
    for (name, runs) in report.policies.iter().zip(&report.outcomes) {
        for (r, o) in runs.iter().enumerate() {
            for (t, v) in o.cum_regret.iter().enumerate() {
                writeln!(s, "{name},{},{},{v}", r + 1, t + 1).expect("write to string");
            }
        }
    }
    s
}

/// `policy,t,mean,std,ci_lo,ci_hi`.
pub fn summary_csv(report: &ExperimentReport) -> Result<String> {
    let mut s = String::from("policy,t,mean,std,ci_lo,ci_hi\n");
    for trace in report.traces() {
        trace.validate()?;
        let sum = aggregate_runs(&trace.runs)?;
        for t in 0..sum.mean.len() {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                trace.policy,
                t + 1,
                sum.mean[t],
                sum.std[t],
                sum.ci_lo[t],
                sum.ci_hi[t]
            )
            .expect("write to string");
        }
    }
    Ok(s)
}

/// Resolved hyperparameters as TOML.
pub fn metadata_toml(report: &ExperimentReport) -> Result<String> {
    toml::to_string(&report.params).map_err(|e| Error::Runtime(format!("cannot serialize metadata: {e}")))
}

/// Writes `regret.csv`, `summary.csv`, `metadata.toml` and, when asked,
/// `diagnostics.csv` into `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path, diagnostics: bool) -> Result<Vec<CheckRecord>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("regret.csv", &regret_csv(report))?;
    write("summary.csv", &summary_csv(report)?)?;
    write("metadata.toml", &metadata_toml(report)?)?;
    let mut records = Vec::new();
    if diagnostics {
        for (name, runs) in report.policies.iter().zip(&report.outcomes) {
            for (r, o) in runs.iter().enumerate() {
                records.extend(run_bound_checks(o, &report.params, &format!("{name}/run{}", r + 1))?);
            }
        }
        crate::analysis::write_report(&dir.join("diagnostics.csv"), &records)?;
    }
    Ok(records)
}

/// Spectral quantities of the `T + 1` points a run visited.
#[derive(Clone, Debug)]
pub struct RunSpectrum {
    pub log_g: f64,
    pub effective_rank: usize,
    pub rank_z: usize,
    pub rank_x: usize,
    pub c_k: f64,
    pub lambda: f64,
    pub points: usize,
}

/// Uses the snapshot after round `T` plus the lookahead choice for `T + 1`.
/// `None` for policies without a kernel model.
pub fn run_spectrum(outcome: &EpisodeOutcome, horizon: usize) -> Result<Option<RunSpectrum>> {
    let Some(snap) = &outcome.snapshot else {
        return Ok(None);
    };
    let mut points = snap.points.clone();
    points.extend(outcome.lookahead.clone());
    let eigs = spectrum(&product_gram(&snap.kernel, &points))?;
    let xs: Vec<&[f64]> = points.iter().map(|p| p.x.as_slice()).collect();
    let rank_x = numerical_rank(&spectrum(&kernel_matrix(&snap.kernel.context, &xs))?);
    let rank_z = numerical_rank(&snap.kernel.task.eigenvalues()?);
    let c_k = match snap.kernel.context.sup() {
        Some(s) => s * snap.kernel.task.max_diagonal(),
        None => snap.kernel.diag_bound(&points),
    };
    Ok(Some(RunSpectrum {
        log_g: log_g_from_eigenvalues(&eigs, snap.lambda),
        effective_rank: effective_rank(&eigs, snap.lambda, horizon),
        rank_z,
        rank_x,
        c_k,
        lambda: snap.lambda,
        points: points.len(),
    }))
}

/// Information-gain and regret-bound checks for one run, plus its width audit.
pub fn run_bound_checks(outcome: &EpisodeOutcome, params: &ResolvedParams, label: &str) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    let a = &outcome.width_audit;
    if a.checks > 0 {
        out.push(CheckRecord::le(format!("width_upper_violations[{label}]"), a.violations as f64, 0.0, 0.0));
    }
    let Some(sp) = run_spectrum(outcome, params.horizon)? else {
        return Ok(out);
    };
    let t = params.horizon;
    let r = sp.effective_rank.max(1);
    out.push(CheckRecord::le(
        format!("gain_effective_rank[{label}]"),
        sp.log_g,
        effective_rank_gain_bound(r, t, sp.lambda, sp.c_k),
        1e-9,
    ));
    out.push(CheckRecord::le(
        format!("gain_rank_product[{label}]"),
        sp.log_g,
        rank_product_gain_bound(sp.rank_z, sp.rank_x, t, sp.lambda, sp.c_k),
        1e-9,
    ));
    let m = (sp.c_k / sp.lambda).max(1.0);
    out.push(CheckRecord::le(
        format!("regret_bound[{label}]"),
        outcome.final_regret(),
        regret_bound_value(t, params.n_arms, params.delta, sp.lambda, params.c, m, sp.log_g),
        0.0,
    ));
    Ok(out)
}
