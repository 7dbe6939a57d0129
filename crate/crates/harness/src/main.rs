use clap::{Parser, Subcommand};
use dcatalyst_harness::config::{DataSpec, DatagenSpec, ExperimentConfig};
use dcatalyst_harness::experiment::{run_experiment, verify, write_outputs, RunOptions};
use dcatalyst_harness::{data, synth, HarnessError, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Decentralized Catalyst simulator.
#[derive(Parser)]
#[command(name = "dcatalyst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the master seed of every config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, instead of the one named in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fixed-point tolerance of the centralized reference solves.
    #[arg(long, global = true, default_value_t = 1e-12)]
    oracle_tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run every `*.toml` config in a directory, in name order.
    Sweep { dir: PathBuf },
    /// Rerun a config, compare with its trace and check the run's certificates.
    Verify { trace: PathBuf, config: PathBuf },
    /// Generate a dataset in LIBSVM format.
    Datagen { spec: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn run_one(cli: &Cli, path: &Path) -> Result<()> {
    let cfg = load(cli, path)?;
    let out = run_experiment(&cfg, RunOptions { oracle_tol: cli.oracle_tol })?;
    let files = write_outputs(&cfg, &cfg.output.dir, &out)?;
    println!(
        "{}: {} outer loops, final gap {:.3e}, trace {}",
        cfg.name,
        out.rows.len() - 1,
        out.summary.final_gap,
        files.trace.display()
    );
    Ok(())
}

fn datagen(cli: &Cli, path: &Path) -> Result<()> {
    let spec = DatagenSpec::load(path)?;
    let seed = cli.seed.unwrap_or(spec.seed);
    let d = match spec.data {
        DataSpec::Logistic { samples, dim, flip } => synth::logistic_data(samples, dim, flip, seed),
        DataSpec::HardLogistic { samples, dim, min_scale, flip } => {
            synth::hard_logistic_data(samples, dim, min_scale, flip, seed)
        }
        DataSpec::Regression { samples, dim, noise, min_scale, .. } => {
            synth::regression_data(samples, dim, noise, min_scale, seed)
        }
        _ => return Err(HarnessError::Config("datagen writes logistic, hard-logistic or regression data".into())),
    };
    let output = match &cli.out {
        Some(dir) => dir.join(spec.output.file_name().unwrap_or_default()),
        None => spec.output,
    };
    if let Some(dir) = output.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    data::write_libsvm(&d, &output)?;
    println!("wrote {} rows of dimension {} to {}", d.len(), d.dim, output.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => run_one(cli, config)?,
        Command::Sweep { dir } => {
            let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| HarnessError::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            configs.sort();
            if configs.is_empty() {
                return Err(HarnessError::Config(format!("no configs in {}", dir.display())));
            }
            for c in &configs {
                run_one(cli, c)?;
            }
        }
        Command::Verify { trace, config } => {
            let cfg = load(cli, config)?;
            let report = verify(trace, &cfg, RunOptions { oracle_tol: cli.oracle_tol })?;
            let c = &report.certificate;
            if !report.reproduced {
                println!("trace {} is not reproduced by {}", trace.display(), config.display());
            }
            println!(
                "estimating sequence: {} rows, {} violations; warm start: {} transitions, {} violations",
                c.rows.len(),
                c.violations.len(),
                report.warm_start.samples.len(),
                report.warm_start.samples.iter().filter(|s| !s.passed).count()
            );
            for v in c.violations.iter().take(10) {
                println!("  k={} agent={} {}: {:.6e} > {:.6e}", v.k, v.agent, v.check, v.lhs, v.rhs);
            }
            return Ok(report.passed());
        }
        Command::Datagen { spec } => datagen(cli, spec)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
