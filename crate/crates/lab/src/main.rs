use std::path::PathBuf;
use std::process::ExitCode;

use bsdelab::config::{self, ExperimentConfig};
use bsdelab::runner::{self, RunError};
use bsdelab_core::generator::{BuiltinSchema, GENERATOR_BUILTINS, OSGOOD_BUILTINS};
use bsdelab_core::harness::{calibrate, fit_error_envelope, SolverSetup};
use bsdelab_core::regression::RegressionBasis;
use bsdelab_core::solver::Scheme;
use bsdelab_core::terminal::TERMINAL_BUILTINS;
use clap::{Args, Parser, Subcommand};

/// Numerical experiments for scalar BSDEs with psi-integrable terminal values.
#[derive(Parser)]
#[command(name = "bsdelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its report.
    Run(RunArgs),
    /// Print the built-in generators, terminal values and moduli.
    ListBuiltins,
    /// Fit the oracle error envelope `C1*dt + C2/sqrt(n)` on affine problems.
    Calibrate(CalibrateArgs),
    /// Write a config's Brownian increments as CSV.
    DumpEnsemble(DumpArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// `key.path=value`, applied in order after the flags above.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, value_delimiter = ',', default_value = "25,50")]
    steps: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "25000,100000")]
    paths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "7,9")]
    degrees: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Paths per point on which the exact field is evaluated.
    #[arg(long, default_value_t = 2000)]
    sample: usize,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

fn load(args: &ConfigArgs, out: Option<&PathBuf>) -> Result<ExperimentConfig, RunError> {
    let cfg = config::load(&args.config)?;
    let mut overrides = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(format!("ensemble.seed={s}"));
    }
    if let Some(n) = args.paths {
        overrides.push(format!("ensemble.n_paths={n}"));
    }
    if let Some(m) = args.steps {
        overrides.push(format!("grid.steps={m}"));
    }
    if let Some(dir) = out {
        overrides.push(format!("output.dir={}", serde_json::Value::String(dir.display().to_string())));
    }
    overrides.extend(args.overrides.iter().cloned());
    Ok(config::apply_overrides(&cfg, &overrides)?)
}

fn print_catalog(kind: &str, table: &[BuiltinSchema]) {
    for s in table {
        println!("{kind:<10} {:<22} {}", s.signature(), s.doc);
    }
}

fn cmd_run(args: &RunArgs) -> Result<i32, RunError> {
    let cfg = load(&args.config, args.out.as_ref())?;
    let summary = runner::run(&cfg)?;
    let rep = &summary.report;
    for v in &rep.verdicts {
        println!("{:<4} {} ({})", if v.passed { "PASS" } else { "FAIL" }, v.rule, v.detail);
    }
    if let Some(e) = &rep.error {
        eprintln!("hypothesis violated: {e}");
    }
    println!("{:?} -> {}", rep.verdict, summary.report_path.display());
    Ok(summary.exit_code())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<i32, RunError> {
    let setups: Vec<SolverSetup> = args
        .degrees
        .iter()
        .flat_map(|&d| [Scheme::BackwardEuler, Scheme::Picard].map(|s| SolverSetup::new(s, RegressionBasis::hermite(d))))
        .collect();
    let points = calibrate(args.horizon, &args.steps, &args.paths, args.seed, &setups, args.sample)?;
    let sup_mean = fit_error_envelope(&points.iter().map(|p| (p.dt, p.n, p.sup_mean)).collect::<Vec<_>>());
    let mean_sup = fit_error_envelope(&points.iter().map(|p| (p.dt, p.n, p.mean_sup)).collect::<Vec<_>>());
    let out = serde_json::json!({
        "points": points,
        "envelope_sup_mean": sup_mean,
        "envelope_mean_sup": mean_sup,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("values always serialize"));
    Ok(0)
}

fn cmd_dump(args: &DumpArgs) -> Result<i32, RunError> {
    let cfg = load(&args.config, None)?;
    let ens = runner::config_ensemble(&cfg)?;
    runner::write_ensemble_csv(&args.out, &ens)?;
    println!("{} increments ({}) -> {}", ens.n_paths() * ens.steps() * ens.dim(), ens.digest(), args.out.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = bsdelab::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::ListBuiltins => {
            print_catalog("generator", GENERATOR_BUILTINS);
            print_catalog("terminal", TERMINAL_BUILTINS);
            print_catalog("modulus", OSGOOD_BUILTINS);
            Ok(0)
        }
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::DumpEnsemble(a) => cmd_dump(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
