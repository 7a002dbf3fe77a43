use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gkf_harness::{read_result, report, run, write_result, ExperimentConfig, HarnessError, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "gkf", version, about = "Gaussian kinematic formula experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Surface estimate of GMFs for a canonical region
    Gmf(RunArgs),
    /// Direct tube volumes against the tube series
    Tube(RunArgs),
    /// GMFs of the cylindrical functional along a grid of n
    Converge(RunArgs),
    /// Mean Euler characteristic against the kinematic formula
    Gkf(RunArgs),
    /// Mean excursion-set LKCs against the Crofton-type formula
    Crofton(RunArgs),
    /// Rebuild CSV tables and the summary from saved results
    Report {
        #[arg(long, env = OUT_DIR_ENV, default_value = "gkf-out")]
        out: PathBuf,
        results: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's root seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's worker count
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "gkf-out")]
    out: PathBuf,
}

fn execute(name: &str, args: RunArgs) -> Result<(), HarnessError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.experiment.name() != name {
        return Err(HarnessError::Validation(format!(
            "config describes a {} experiment, not {name}",
            config.experiment.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    config.validate()?;
    let result = run(&config)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let json = write_result(&result, &args.out)?;
    let rep = report(std::slice::from_ref(&result), &args.out)?;
    print!("{}", rep.summary);
    println!("result: {}", json.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gmf(a) => execute("gmf", a),
        Command::Tube(a) => execute("tube", a),
        Command::Converge(a) => execute("converge", a),
        Command::Gkf(a) => execute("gkf", a),
        Command::Crofton(a) => execute("crofton", a),
        Command::Report { out, results } => results
            .iter()
            .map(|p| read_result(p))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|rs| report(&rs, &out))
            .map(|rep| print!("{}", rep.summary)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
