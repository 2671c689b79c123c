use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kmtl::analysis::write_report;
use kmtl::env::{builtin_manifest, read_manifest};
use kmtl::experiment::diagnostics::CHECK_GROUPS;
use kmtl::experiment::fetch::{fetch_entry, FetchStatus};
use kmtl::experiment::{data_dir, run_diagnostics, run_experiment, write_outputs, ExperimentConfig, POLICY_NAMES};
use kmtl::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATASET: u8 = 3;
const EXIT_CHECKS: u8 = 4;

#[derive(Parser)]
#[command(name = "kmtl", version, about = "Kernelized multi-task contextual bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write regret.csv, summary.csv and metadata.toml.
    Run(RunArgs),
    /// Run the seeded theory checks; exits 4 when any check fails.
    Diagnose(DiagnoseArgs),
    /// Download datasets listed in the manifest into the data directory.
    FetchData(FetchArgs),
    /// List policies, environments, check groups and datasets.
    Info,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// Policy names; repeat the flag or separate with commas.
    #[arg(long = "policy", value_delimiter = ',')]
    policies: Vec<String>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write diagnostics.csv with per-run bound checks.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// TOML config; its [diagnose] table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Check groups to run (comma separated); an empty value runs none.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    checks: Option<Vec<String>>,
    #[arg(long)]
    inject_fault: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file.
    #[arg(long, default_value = "diagnostics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FetchArgs {
    /// TOML manifest replacing the built-in one.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Only these datasets.
    #[arg(long = "dataset", value_delimiter = ',')]
    datasets: Vec<String>,
    /// Download again even when the file exists.
    #[arg(long)]
    force: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Dataset { .. } => EXIT_DATASET,
        _ => EXIT_FAILURE,
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        }),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(args: RunArgs) -> Result<u8, Error> {
    let mut cfg = load_config(args.config.as_ref())?;
    if let Some(v) = args.env {
        cfg.env = v;
    }
    if !args.policies.is_empty() {
        cfg.policies = args.policies;
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if args.beta.is_some() {
        cfg.beta = args.beta;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    cfg.diagnostics |= args.diagnostics;
    let report = run_experiment(&cfg)?;
    let records = write_outputs(&report, &cfg.out, cfg.diagnostics)?;
    for (name, runs) in report.policies.iter().zip(&report.outcomes) {
        let finals: Vec<f64> = runs.iter().map(|o| o.final_regret()).collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!("{name}: mean final regret {mean:.4} over {} run(s)", finals.len());
    }
    let failed: Vec<_> = records.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!("FAILED {} (lhs {:e}, rhs {:e})", r.name, r.lhs, r.rhs);
    }
    println!("outputs written to {}", cfg.out.display());
    Ok(if failed.is_empty() { 0 } else { EXIT_CHECKS })
}

fn diagnose(args: DiagnoseArgs) -> Result<u8, Error> {
    let mut cfg = load_config(args.config.as_ref())?.diagnose;
    if let Some(c) = args.checks {
        cfg.checks = Some(c.into_iter().filter(|s| !s.is_empty()).collect());
    }
    if args.inject_fault.is_some() {
        cfg.inject_fault = args.inject_fault;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let records = run_diagnostics(&cfg)?;
    write_report(&args.out, &records)?;
    let failed: Vec<_> = records.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!("FAILED {} (lhs {:e}, rhs {:e})", r.name, r.lhs, r.rhs);
    }
    println!("{} check(s), {} failed; report at {}", records.len(), failed.len(), args.out.display());
    Ok(if failed.is_empty() { 0 } else { EXIT_CHECKS })
}

fn fetch(args: FetchArgs) -> Result<u8, Error> {
    let manifest = match &args.manifest {
        Some(p) => read_manifest(p)?,
        None => builtin_manifest(),
    };
    for name in &args.datasets {
        if !manifest.iter().any(|e| &e.name == name) {
            return Err(Error::Config(format!("dataset '{name}' is not in the manifest")));
        }
    }
    let dir = data_dir();
    let mut failures = 0;
    for e in manifest.iter().filter(|e| args.datasets.is_empty() || args.datasets.contains(&e.name)) {
        match fetch_entry(e, &dir, args.force) {
            Ok(FetchStatus::Present(p)) => println!("{}: present at {}", e.name, p.display()),
            Ok(FetchStatus::Downloaded { path, verified }) => println!(
                "{}: downloaded to {}{}",
                e.name,
                path.display(),
                if verified { " (checksum ok)" } else { " (no checksum)" }
            ),
            Ok(FetchStatus::NoSource) => println!("{}: no download source; place {} manually", e.name, e.path),
            Err(err) => {
                eprintln!("{}: {err}", e.name);
                failures += 1;
            }
        }
    }
    Ok(if failures == 0 { 0 } else { EXIT_DATASET })
}

fn info() -> u8 {
    println!("policies: {}", POLICY_NAMES.join(", "));
    println!("environments: synthetic, multiclass");
    println!("check groups: {}", CHECK_GROUPS.join(", "));
    println!("data directory: {}", data_dir().display());
    println!("datasets:");
    println!("  mini-digits (bundled, N=3, d=8)");
    for e in builtin_manifest() {
        println!("  {} ({}, N={}, d={})", e.name, e.path, e.n_classes, e.d);
    }
    0
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Diagnose(a) => diagnose(a),
        Command::FetchData(a) => fetch(a),
        Command::Info => Ok(info()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
