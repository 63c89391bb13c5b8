//! `shelab`: run configured simulations and experiments.
//!
//! Exit codes: 0 success, 1 usage, config or hypothesis error, 2 numeric
//! failure, 3 experiment invalid.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use shelab_core::config::{keys_for, ExperimentName};
use shelab_core::experiments::{FlagKind, SimulateExperiment};
use shelab_core::lattice::kernel_matrix;
use shelab_core::model::{assumption_report, osgood_blocks, osgood_sum, osgood_time, GridSpec};
use shelab_core::output::{Header, OutputDir};
use shelab_core::{mc_drive, parse_config, Error, Experiment, ExperimentReport, ExperimentSpec, ModelSpec, RunConfig};

#[derive(Parser)]
#[command(
    name = "shelab",
    version,
    about = "Lattice stochastic heat equation: simulation and blowup experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicas; writes the first replica's trajectory and a per-replica summary.
    Simulate(RunArgs),
    /// Comparison experiment: compare_line (default), compare_boundary or j_monotonicity.
    Compare(RunArgs),
    /// Osgood criteria, ODE blowup time and growth assumptions of a model.
    Osgood(OsgoodArgs),
    /// Lattice-spacing convergence study.
    Convergence(RunArgs),
    /// Run the experiment named in the config.
    Mc(RunArgs),
    /// Write the heat-kernel matrix of the configured domain.
    KernelDump(KernelArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides noise.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides noise.replicas.
    #[arg(long)]
    replicas: Option<u32>,
    /// Overrides output.directory.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct OsgoodArgs {
    /// TOML run configuration; only the model section is read.
    #[arg(long, conflicts_with = "drift")]
    config: Option<PathBuf>,
    /// Drift catalog key or expression in x.
    #[arg(long, required_unless_present = "config")]
    drift: Option<String>,
    /// Diffusion catalog key or expression in x.
    #[arg(long, default_value = "zero")]
    diffusion: String,
    /// Start value of the ODE blowup time.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Last dyadic index of the Osgood sum.
    #[arg(long, default_value_t = 60)]
    n_max: u32,
}

#[derive(Args)]
struct KernelArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Kernel time.
    #[arg(long)]
    t: f64,
    /// Overrides output.directory.
    #[arg(long)]
    out: Option<String>,
}

/// Sections whose keys each subcommand reads.
const SECTIONS: &[(&str, &[&str])] = &[
    (
        "simulate",
        &["model", "domain", "solver", "noise", "initial", "crossing", "output"],
    ),
    (
        "compare",
        &["model", "domain", "solver", "noise", "initial", "experiment", "output"],
    ),
    ("osgood", &["model"]),
    (
        "convergence",
        &["model", "domain", "solver", "noise", "initial", "experiment", "output"],
    ),
    (
        "mc",
        &[
            "model",
            "domain",
            "solver",
            "noise",
            "initial",
            "crossing",
            "experiment",
            "output",
        ],
    ),
    ("kernel-dump", &["domain", "noise", "output"]),
];

fn keys_help(sections: &[&str]) -> String {
    let keys = keys_for(sections);
    let width = keys.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys:\n");
    for (path, default, doc) in keys {
        s.push_str(&format!("  {path:<width$}  {doc} [default: {default}]\n"));
    }
    s
}

fn command() -> clap::Command {
    SECTIONS.iter().fold(Cli::command(), |cmd, (name, sections)| {
        cmd.mut_subcommand(*name, |c| c.after_help(keys_help(sections)))
    })
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn load(path: &PathBuf) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| usage(e.to_string()))
}

fn load_run(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = load(&args.config)?;
    if let Some(s) = args.seed {
        if s > i64::MAX as u64 {
            return Err(usage("--seed must be at most 2^63 - 1, the largest TOML integer"));
        }
        cfg.noise.master_seed = s;
    }
    if let Some(r) = args.replicas {
        if r == 0 {
            return Err(usage("--replicas must be positive"));
        }
        cfg.noise.replicas = r;
    }
    if let Some(o) = &args.out {
        cfg.output.directory = o.clone();
    }
    Ok(cfg)
}

fn workers(args: &RunArgs) -> usize {
    args.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn output_dir(cfg: &RunConfig) -> Result<OutputDir, Failure> {
    let header = Header {
        config_digest: cfg.digest(),
        seed: cfg.noise.master_seed,
    };
    Ok(OutputDir::create(&cfg.output.directory, header)?)
}

/// Preflight, then every replica; a hypothesis violation stops before any run.
fn drive<E: Experiment>(exp: &E, cfg: &RunConfig, workers: usize) -> Result<ExperimentReport, Failure> {
    let flags = exp.preflight()?;
    let violations: Vec<_> = flags
        .iter()
        .filter(|f| f.kind == FlagKind::HypothesisViolation)
        .collect();
    if !violations.is_empty() {
        let msgs: Vec<_> = violations
            .iter()
            .map(|f| format!("hypothesis violation: {}", f.message))
            .collect();
        return Err(usage(msgs.join("\n")));
    }
    Ok(mc_drive(exp, cfg.replicas(), workers)?)
}

fn run_spec(spec: &ExperimentSpec, cfg: &RunConfig, workers: usize) -> Result<ExperimentReport, Failure> {
    match spec {
        ExperimentSpec::Simulate(e) => drive(e, cfg, workers),
        ExperimentSpec::Comparison(e) => drive(e, cfg, workers),
        ExperimentSpec::JMonotonicity(e) => drive(e, cfg, workers),
        ExperimentSpec::EpsilonConvergence(e) => drive(e, cfg, workers),
        ExperimentSpec::DeterministicLimit(e) => drive(e, cfg, workers),
        ExperimentSpec::PassageTime(e) => drive(e, cfg, workers),
        ExperimentSpec::BlowupProbability(e) => drive(e, cfg, workers),
    }
}

fn print_report(r: &ExperimentReport) {
    println!("experiment: {}", r.name);
    println!("replicas: {} ({} missing)", r.replicas.len(), r.missing.len());
    for (k, v) in &r.summary {
        println!("{k}: {v}");
    }
    for f in &r.flags {
        println!("flag {}: {}", f.kind.name(), f.message);
    }
}

fn finish(
    cfg: &RunConfig,
    mut out: OutputDir,
    command: &str,
    report: &ExperimentReport,
    workers: usize,
    start: Instant,
) -> Result<u8, Failure> {
    out.write_report(report)?;
    out.write_config(cfg)?;
    let mut extra = BTreeMap::new();
    extra.insert("experiment", report.name.clone());
    extra.insert("experiment_digest", report.config_digest.clone());
    extra.insert("replicas", format!("{:?}", cfg.replicas()));
    extra.insert("workers", workers.to_string());
    out.write_manifest(command, start.elapsed().as_secs_f64(), &extra)?;
    print_report(report);
    println!("output: {}", out.path().display());
    Ok(report.exit_code() as u8)
}

fn experiment_command(args: &RunArgs, command: &str) -> Result<u8, Failure> {
    let start = Instant::now();
    let mut cfg = load_run(args)?;
    let name = &mut cfg.experiment.name;
    match command {
        "simulate" => *name = ExperimentName::Simulate,
        "convergence" => *name = ExperimentName::EpsilonConvergence,
        "compare" => match *name {
            ExperimentName::CompareLine | ExperimentName::CompareBoundary | ExperimentName::JMonotonicity => {}
            ExperimentName::Simulate => *name = ExperimentName::CompareLine,
            other => return Err(usage(format!("compare cannot run experiment '{}'", other.name()))),
        },
        _ => {}
    }
    let workers = workers(args);
    let spec = cfg.experiment();
    let report = run_spec(&spec, &cfg, workers)?;
    let mut out = output_dir(&cfg)?;
    if let ExperimentSpec::Simulate(sim) = &spec {
        write_first_trajectory(sim, &cfg, &mut out)?;
    }
    finish(&cfg, out, command, &report, workers, start)
}

fn write_first_trajectory(sim: &SimulateExperiment, cfg: &RunConfig, out: &mut OutputDir) -> Result<(), Failure> {
    let traj = sim.trajectory(cfg.replicas().start)?;
    out.write_trajectory(&traj)?;
    Ok(())
}

fn osgood_command(args: &OsgoodArgs) -> Result<u8, Failure> {
    let model: ModelSpec = match (&args.config, &args.drift) {
        (Some(path), _) => load(path)?.model(),
        (None, Some(drift)) => shelab_core::config::ModelSection {
            drift: drift.clone(),
            diffusion: args.diffusion.clone(),
            drift_scale: 1.0,
            sigma_scale: 1.0,
        }
        .build()
        .map_err(usage)?,
        (None, None) => return Err(usage("need --config or --drift")),
    };
    if !(args.c > 0.0) {
        return Err(usage("--c must be positive"));
    }
    println!("model: {}", model.name);
    println!("drift: {}", model.drift.describe());
    println!("diffusion: {}", model.diffusion.describe());
    let sum = osgood_sum(&model, args.n_max)?;
    println!("osgood_sum: S_{} = {}", args.n_max, sum.last());
    println!("sum verdict: {}", sum.verdict());
    let blocks = osgood_blocks(&model, 0, args.n_max as i64, 1e-13)?;
    println!("integral verdict: {}", blocks.class.verdict);
    println!("T*({}) = {}", args.c, osgood_time(&model, args.c)?);
    let grid = GridSpec::new(1.0, 1e12, 8);
    match assumption_report(&model, 1.0, &[2.0, 4.0, 16.0, 64.0], 0.1, &grid) {
        Ok(a) => {
            println!("ratio_sup_f: {}", a.ratio_sup_f);
            match a.ratio_sup_g {
                Some(g) => println!("ratio_sup_g: {g}"),
                None => println!("ratio_sup_g: vacuous (sigma = 0)"),
            }
            println!(
                "growth_exponent_ok: {} (worst ratio {})",
                a.growth_exponent_ok, a.growth_worst_ratio
            );
            println!("d1: {}", a.d1);
            match a.d2 {
                Some(d2) => println!("d2: {d2}"),
                None => println!("d2: vacuous (sigma = 0)"),
            }
            println!("grid: {}", a.grid_used);
        }
        Err(e) => println!("assumptions: not checkable ({e})"),
    }
    Ok(0)
}

fn kernel_command(args: &KernelArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    let mut cfg = load(&args.config)?;
    if let Some(o) = &args.out {
        cfg.output.directory = o.clone();
    }
    if !(args.t >= 0.0) {
        return Err(usage("--t must be nonnegative"));
    }
    let k = kernel_matrix(args.t, &cfg.domain())?;
    let mut out = output_dir(&cfg)?;
    out.write_kernel(&k)?;
    out.write_config(&cfg)?;
    let mut extra = BTreeMap::new();
    extra.insert("t", args.t.to_string());
    extra.insert("sites", k.n().to_string());
    out.write_manifest("kernel-dump", start.elapsed().as_secs_f64(), &extra)?;
    println!("kernel: {} sites at t = {}", k.n(), args.t);
    println!("output: {}", out.path().display());
    Ok(0)
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => experiment_command(a, "simulate"),
        Command::Compare(a) => experiment_command(a, "compare"),
        Command::Convergence(a) => experiment_command(a, "convergence"),
        Command::Mc(a) => experiment_command(a, "mc"),
        Command::Osgood(a) => osgood_command(a),
        Command::KernelDump(a) => kernel_command(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
