use clap::{Parser, Subcommand};
use shearfront::config::{Experiment, ExperimentConfig, SeedSpec};
use shearfront::runner;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "shearfront",
    about = "Front speeds of reaction-diffusion waves in random shear flows",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the experiment TOML config.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed list with a range starting here (count preserved).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent (seed, parameter) tasks.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory (overrides config and SHEARFRONT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize shear fields and compare empirical to target covariance.
    Fieldcheck(RunArgs),
    /// Sweep the growth-rate spectrum over diffusivity.
    Lyapunov(RunArgs),
    /// Tabulate the effective potential over its coupling grid.
    Gammastar(RunArgs),
    /// Variational front speeds from a tabulated effective potential.
    Speed(RunArgs),
    /// Direct 2-D front simulations with white-in-time shear.
    Direct(RunArgs),
    /// Direct simulations in frozen shears and divergence-law fits.
    Frozen(RunArgs),
    /// Running maxima of static fields against the log-law prediction.
    Extremes(RunArgs),
    /// Aggregate result CSVs in a directory into fit summaries.
    Report {
        /// Directory holding result CSVs from earlier runs.
        #[arg(long)]
        out: PathBuf,
        /// Reaction slope at zero, if results used a non-default value.
        #[arg(long, default_value_t = 1.0)]
        f_prime_0: f64,
    },
}

fn expected_experiment(command: &Command) -> Option<Experiment> {
    match command {
        Command::Fieldcheck(_) => Some(Experiment::CovarianceCheck),
        Command::Lyapunov(_) => Some(Experiment::LyapunovSweep),
        Command::Gammastar(_) => Some(Experiment::GammaStarTable),
        Command::Speed(_) => Some(Experiment::SpeedSweep),
        Command::Direct(_) => Some(Experiment::DirectRun),
        Command::Frozen(_) => Some(Experiment::FrozenDivergence),
        Command::Extremes(_) => Some(Experiment::ExtremesCheck),
        Command::Report { .. } => None,
    }
}

fn run_experiment(args: &RunArgs, expected: Experiment) -> Result<(), String> {
    let mut config = ExperimentConfig::from_path(&args.config).map_err(|e| e.to_string())?;
    if config.experiment != expected {
        return Err(format!(
            "config declares experiment '{}' but this subcommand runs '{}'",
            config.experiment, expected
        ));
    }
    if let Some(base) = args.seed {
        let count = config.seeds.resolve().len() as u32;
        config.seeds = SeedSpec::Range { base_seed: base, count };
    }
    if let Some(out) = &args.out {
        config.output_dir = Some(out.clone());
    }
    let manifest = runner::run(&config, args.workers.max(1)).map_err(|e| e.to_string())?;
    println!(
        "{}: {} output file(s), {} warning(s)",
        manifest.experiment,
        manifest.outputs.len(),
        manifest.warnings.len()
    );
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Report { out, f_prime_0 } => {
            match runner::report(out, *f_prime_0).map_err(|e| e.to_string()) {
                Ok(rows) => {
                    if rows.is_empty() {
                        println!("no result CSVs found in {}", out.display());
                    }
                    for (name, value, se) in rows {
                        println!("{name}: {value:.6} +/- {se:.6}");
                    }
                    Ok(())
                }
                Err(e) => Err(e),
            }
        }
        cmd => {
            let expected = expected_experiment(cmd).expect("run subcommands map to experiments");
            let args = match cmd {
                Command::Fieldcheck(a)
                | Command::Lyapunov(a)
                | Command::Gammastar(a)
                | Command::Speed(a)
                | Command::Direct(a)
                | Command::Frozen(a)
                | Command::Extremes(a) => a,
                Command::Report { .. } => unreachable!(),
            };
            run_experiment(args, expected)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
