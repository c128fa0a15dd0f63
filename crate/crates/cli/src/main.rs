//! `winf`: command-line front end for exact ∞-Wasserstein computations.
//!
//! JSON and CSV go to standard output (or `--out`), logs to standard error.
//! Exit codes: 0 success, 1 domain or configuration error (one
//! `error[kind]: message` line on standard error), 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use winf_core::bounds::{binomial_tails, dkw_tail};
use winf_core::construction::{certify, write_cells_csv, DEFAULT_BETA};
use winf_core::density::{CdfEvaluator, DensityModel};
use winf_core::experiments::{
    persist_records, run_coverage_experiment, run_rate_experiment, ExperimentConfig, RunRecord,
};
use winf_core::sampling::{draw_samples, write_samples, SeedSpec};
use winf_core::transport::distance_report;
use winf_core::{catalog, Error, Result};

#[derive(Parser)]
#[command(
    name = "winf",
    version,
    about = "Exact ∞-Wasserstein distances of empirical measures in one dimension"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DensityArgs {
    /// Density file (TOML) or catalog name.
    #[arg(long, value_name = "PATH")]
    density: String,
    /// Evaluate models that fail validation.
    #[arg(long)]
    force_accept: bool,
}

#[derive(Args)]
struct DrawArgs {
    #[command(flatten)]
    density: DensityArgs,
    /// Sample size.
    #[arg(long)]
    n: usize,
    /// Base seed; the draw uses stream 0.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Records CSV destination; overrides the configuration.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a density and print the report.
    ValidateDensity {
        #[command(flatten)]
        density: DensityArgs,
    },
    /// Draw a seeded sample and print it as CSV.
    Sample {
        #[command(flatten)]
        draw: DrawArgs,
        /// Write the CSV here instead of standard output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Exact W∞ and W₁ between a density and a seeded sample.
    Distance {
        #[command(flatten)]
        draw: DrawArgs,
    },
    /// Tail bounds over a grid of (n, t).
    BoundTable {
        /// Sample sizes (repeatable).
        #[arg(long, num_args = 1.., default_values_t = [100u64, 500, 1000, 5000])]
        n: Vec<u64>,
        /// Deviations (repeatable).
        #[arg(long, num_args = 1.., default_values_t = [0.01, 0.02, 0.05, 0.1, 0.2])]
        t: Vec<f64>,
        /// Success probability for the binomial tails.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Write the CSV here instead of standard output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Transport certificate from the partition-and-tilt construction.
    TransportCert {
        #[command(flatten)]
        draw: DrawArgs,
        /// Layer exponent, must exceed 2.
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        /// Constant of the theoretical rate.
        #[arg(long, default_value_t = 1.0)]
        rate_constant: f64,
        /// Per-cell CSV destination.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run a rate experiment and print the fit report.
    RateExperiment(ExperimentArgs),
    /// Run a coverage experiment and print the coverage table.
    CoverageExperiment(ExperimentArgs),
}

fn load_model(args: &DensityArgs) -> Result<DensityModel> {
    let path = Path::new(&args.density);
    if !path.exists() && catalog::NAMES.contains(&args.density.as_str()) {
        return catalog::model(&args.density);
    }
    DensityModel::load(path)
}

fn evaluator(args: &DensityArgs) -> Result<CdfEvaluator> {
    let model = load_model(args)?;
    if args.force_accept {
        Ok(CdfEvaluator::force_accept(model))
    } else {
        CdfEvaluator::new(model)
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let (shown, result) = match path {
        Some(p) => (p, std::fs::write(p, bytes)),
        None => (
            Path::new("<stdout>"),
            std::io::stdout().lock().write_all(bytes),
        ),
    };
    result.map_err(|e| Error::Io {
        path: shown.to_path_buf(),
        source: e,
    })
}

fn save_records(
    config: &ExperimentConfig,
    out: Option<&Path>,
    records: &[RunRecord],
) -> Result<()> {
    let path = match (out, &config.output.records) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => config.resolve(p),
        (None, None) => return Ok(()),
    };
    persist_records(records, &path)?;
    log::info!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ValidateDensity { density } => {
            let model = load_model(&density)?;
            let report = winf_core::density::validate_model(&model);
            print_json(&report)?;
            if !report.any_theorem_holds() && !density.force_accept {
                return Err(Error::Unvalidated {
                    model: model.id().to_string(),
                    reason: report.summary(),
                });
            }
            Ok(())
        }
        Command::Sample { draw, out } => {
            let cdf = evaluator(&draw.density)?;
            let em = draw_samples(&cdf, draw.n, SeedSpec::new(draw.seed, 0))?;
            let mut buf = Vec::new();
            write_samples(&mut buf, &[(0, &em)]).expect("writing to memory");
            emit(out.as_deref(), &buf)
        }
        Command::Distance { draw } => {
            let cdf = evaluator(&draw.density)?;
            let em = draw_samples(&cdf, draw.n, SeedSpec::new(draw.seed, 0))?;
            print_json(&distance_report(&cdf, &em)?)
        }
        Command::BoundTable { n, t, p, out } => {
            let mut text = String::from("n,t,dkw,chernoff,bernstein,chebyshev\n");
            for &n in &n {
                for &t in &t {
                    let tails = binomial_tails(n, p, t)?;
                    text.push_str(&format!(
                        "{n},{t},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                        dkw_tail(n, t)?,
                        tails.chernoff,
                        tails.bernstein,
                        tails.chebyshev
                    ));
                }
            }
            emit(out.as_deref(), text.as_bytes())
        }
        Command::TransportCert {
            draw,
            beta,
            rate_constant,
            out,
        } => {
            let cdf = evaluator(&draw.density)?;
            let em = draw_samples(&cdf, draw.n, SeedSpec::new(draw.seed, 0))?;
            let cert = certify(&cdf, &em, beta, rate_constant)?;
            if let Some(p) = out {
                write_cells_csv(&p, &cert)?;
            }
            print_json(&cert)
        }
        Command::RateExperiment(args) => {
            let config = ExperimentConfig::load(&args.config)?;
            let (records, report) = run_rate_experiment(&config, args.workers)?;
            save_records(&config, args.out.as_deref(), &records)?;
            if let Some(p) = &config.output.report {
                write_json(&config.resolve(p), &report)?;
            }
            print_json(&report)
        }
        Command::CoverageExperiment(args) => {
            let config = ExperimentConfig::load(&args.config)?;
            let (records, report) = run_coverage_experiment(&config, args.workers)?;
            save_records(&config, args.out.as_deref(), &records)?;
            if let Some(p) = &config.output.report {
                write_json(&config.resolve(p), &report)?;
            }
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.kind());
            ExitCode::from(1)
        }
    }
}
