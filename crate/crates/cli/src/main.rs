use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roa_forge::config::Overrides;
use roa_forge::results::Outcome;
use roa_forge::CliError;

/// Region-of-attraction estimates for polynomial systems via Takagi-Sugeno
/// models, piecewise quadratic Lyapunov functions and coordinate transforms.
#[derive(Parser)]
#[command(name = "roa-forge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify every case in a config and write the results file.
    Estimate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Monte Carlo samples for the area estimates.
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Re-check a results file against its config and by simulation.
    Validate {
        results: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Initial states to simulate.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Draw the certified boundaries of a planar run as SVG plus a CSV sidecar.
    Render { results: PathBuf, out: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Seed for sampling, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated lambda grid, overriding the config.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
}

impl Common {
    fn overrides(self) -> Overrides {
        Overrides { seed: self.seed, lambda_grid: self.lambda_grid, ..Overrides::default() }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ROA_FORGE_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("ROA_FORGE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Estimate { config, common, samples } => {
            let overrides = Overrides { area_samples: samples, ..common.overrides() };
            let summary = roa_forge::estimate(&config, &overrides)?;
            for case in &summary.results.cases {
                match &case.outcome {
                    Outcome::Ok(c) => println!(
                        "{}: certified, k = {}, margin = {:e}, area = {:.6} +/- {:.6}",
                        case.name(),
                        c.k,
                        c.margins.min_margin,
                        c.area.area,
                        c.area.half_width
                    ),
                    Outcome::Failed { stage, message } => println!("{}: failed at {stage}: {message}", case.name()),
                }
            }
            if let Some(u) = &summary.results.union {
                println!("union of {} members: area = {:.6} +/- {:.6}", u.members.len(), u.area.area, u.area.half_width);
            }
            println!("wrote {}", summary.results_path.display());
            Ok(())
        }
        Command::Validate { results, config, common, samples } => {
            let overrides = Overrides { samples, ..common.overrides() };
            let summary = roa_forge::validate(&results, &config, &overrides)?;
            for line in &summary.lines {
                println!("{line}");
            }
            if summary.passed() {
                Ok(())
            } else {
                Err(summary.into_error())
            }
        }
        Command::Render { results, out } => {
            let csv = roa_forge::render(&results, &out)?;
            println!("wrote {} and {}", out.display(), csv.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
