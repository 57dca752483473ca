use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddenf_core::spectral::DEFAULT_R_MAX;
use ddenf_core::ErrorKind;

mod commands;
mod model;
mod report;
mod selftest;

use commands::{FlavorArg, Mode, RankScanArgs};

/// Malformed input file or argument.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ParseError(pub String);

/// The spectral hypothesis does not hold for the model.
#[derive(Debug, thiserror::Error)]
#[error("hypothesis failed: {0}")]
pub struct HypothesisFailed(pub String);

#[derive(Debug, thiserror::Error)]
#[error("self-test failed: {0}")]
pub struct SelftestFailed(pub String);

#[derive(Parser)]
#[command(name = "ddenf", version, about = "Normal forms and realizability for delay equations with multiple Hopf points")]
struct Cli {
    /// Worker threads for the rank scan (defaults to all cores).
    #[arg(long, global = true, env = "DDENF_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Imaginary-axis roots, Delta', Psi(0) and the spectral hypothesis verdict.
    Spectrum {
        model: PathBuf,
        /// Largest height of integer relations searched among the frequencies.
        #[arg(long, default_value_t = DEFAULT_R_MAX)]
        r_max: u32,
        /// Also write the machine block to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Normal form, radial and angular equations of the model.
    Nf {
        model: PathBuf,
        #[arg(long)]
        order: Option<u32>,
        #[arg(long, value_enum, default_value_t = Mode::OdeReduction)]
        mode: Mode,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write the normal-form terms as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rank of the realization map over random delay tuples.
    RankScan {
        model: PathBuf,
        /// Highest degree scanned (from 2).
        #[arg(long)]
        order: Option<u32>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Number of delay points (defaults to p + 1).
        #[arg(long)]
        delays: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FlavorArg::Plain)]
        flavor: FlavorArg,
        /// CSV destination; printed after the summary when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Nonlinearity at the model delays realizing a target radial jet.
    Realize {
        model: PathBuf,
        target: PathBuf,
        /// Override the model delays, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tau: Option<Vec<f64>>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Built-in invariant suite and reference-value comparison.
    Selftest {
        #[arg(long, value_enum, default_value_t = selftest::Level::Fast)]
        level: selftest::Level,
        /// Compare against this reference file instead of the built-in one.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Write the computed reference values to this file.
        #[arg(long)]
        write_golden: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Design a kernel with roots 0 and +-i omega_j and write a model skeleton.
    Design {
        #[arg(long, value_delimiter = ',', required = true)]
        omegas: Vec<f64>,
        /// Kernel atom positions (2p + 1 of them), comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        atoms: Vec<f64>,
        /// Model delays (p + 1 of them); spread over the history by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tau: Option<Vec<f64>>,
        #[arg(long, default_value_t = 3)]
        order: u32,
        #[arg(long, default_value_t = 0)]
        s: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<ParseError>() {
        return 4;
    }
    if err.is::<HypothesisFailed>() {
        return 2;
    }
    if err.is::<SelftestFailed>() {
        return 3;
    }
    match err.downcast_ref::<ddenf_core::Error>().map(|e| e.kind()) {
        Some(ErrorKind::Precondition) => 2,
        Some(ErrorKind::Numerical) => 3,
        _ => 4,
    }
}

fn hint(err: &anyhow::Error) -> Option<&'static str> {
    match err.downcast_ref::<ddenf_core::Error>()? {
        ddenf_core::Error::DuplicateDelay(_) | ddenf_core::Error::RankDeficient(_) => {
            Some("the delay points are degenerate for this degree; resample them (e.g. with rank-scan) and retry")
        }
        ddenf_core::Error::SingularPlacement { .. } => Some("move the kernel atoms apart"),
        _ => None,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match cli.command {
        Command::Spectrum { model, r_max, json } => commands::spectrum(&model, r_max, json.as_deref()),
        Command::Nf { model, order, mode, json, csv } => commands::nf(&model, order, mode, json.as_deref(), csv.as_deref()),
        Command::RankScan { model, order, samples, delays, seed, flavor, csv, json } => commands::rank_scan_cmd(RankScanArgs {
            model: &model,
            order,
            samples,
            delays,
            seed,
            flavor,
            csv: csv.as_deref(),
            json: json.as_deref(),
        }),
        Command::Realize { model, target, tau, json } => commands::realize(&model, &target, tau, json.as_deref()),
        Command::Selftest { level, golden, write_golden, json } => {
            selftest::run(level, golden.as_deref(), write_golden.as_deref(), json.as_deref())
        }
        Command::Design { omegas, atoms, tau, order, s, out } => commands::design(&omegas, &atoms, tau, order, s, out.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(h) = hint(&err) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
