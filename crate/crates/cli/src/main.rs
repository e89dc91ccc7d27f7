//! `geoforms`: curvature, fundamental forms, classification and Yamabe
//! expansions for metrics read from spec files. Reports are JSON.

mod commands;
mod report;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Flags;
use report::Report;

#[derive(Debug, Parser)]
#[command(
    name = "geoforms",
    version,
    about = "Hypersurface invariants of metrics in normal form"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Highest fundamental form order, or the Yamabe series truncation.
    #[arg(long, global = true, value_name = "K")]
    max_order: Option<usize>,

    /// Residual tolerance for verdicts.
    #[arg(long, global = true, default_value_t = geoforms_core::classify::DEFAULT_TOLERANCE)]
    tol: f64,

    /// Grid points per coordinate axis, overriding the spec's counts.
    #[arg(long, global = true, value_name = "N")]
    points: Option<usize>,

    /// Write the report here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Curvature tensors of the ambient metric along Σ.
    Curvature { spec: PathBuf },
    /// Fundamental forms of orders 2 through K.
    Forms { spec: PathBuf },
    /// Test the product, fiber-like or base-like hypothesis of the spec.
    Classify { spec: PathBuf },
    /// Singular Yamabe series over the t = 0 slice.
    Yamabe { spec: PathBuf },
    /// Trace-free forms, Gauss identity and the weight law under omega.
    ConformalCheck { spec: PathBuf },
    /// Run the built-in acceptance checks.
    Selftest,
}

fn init_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var("GEOFORMS_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("GEOFORMS_WORKERS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

type Handler = fn(&spec::MetricSpec, &Flags) -> Result<Report, commands::InputError>;

fn run(cli: &Cli) -> Result<Report, (String, i32)> {
    let flags = Flags {
        max_order: cli.max_order,
        tol: cli.tol,
        points: cli.points,
    };
    if flags.points == Some(0) {
        return Err(("--points must be positive".into(), 2));
    }
    let (path, f): (_, Handler) = match &cli.command {
        Command::Selftest => return Ok(commands::selftest()),
        Command::Curvature { spec } => (spec, commands::curvature),
        Command::Forms { spec } => (spec, commands::forms),
        Command::Classify { spec } => (spec, commands::classify),
        Command::Yamabe { spec } => (spec, commands::yamabe),
        Command::ConformalCheck { spec } => (spec, commands::conformal_check),
    };
    let spec = spec::read_spec(path).map_err(|e| (e.to_string(), e.exit_code()))?;
    f(&spec, &flags).map_err(|e| (e.to_string(), 3))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(report) => {
            let text = report.render();
            match &cli.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &text) {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => print!("{text}"),
            }
            if report.exit != 0 {
                eprintln!("verdict: {}", report.verdict);
            }
            ExitCode::from(report.exit as u8)
        }
        Err((message, code)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
