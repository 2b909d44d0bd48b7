//! `apdcorr`: correlator design, exponent trade-off curves and Monte Carlo
//! validation from scenario files.
//!
//! Exit codes: 0 success, 2 usage or scenario error, 3 numeric error.
//! `APDCORR_THREADS` caps the number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub const THREADS_ENV: &str = "APDCORR_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(apdcorr::Error),
    Io(String),
}

impl From<apdcorr::Error> for CliError {
    fn from(e: apdcorr::Error) -> Self {
        CliError::Numeric(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Numeric(e) => write!(f, "numeric error: {e}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "apdcorr",
    version,
    about = "Optimal correlators for APD optical receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Detect,
    Delay,
}

#[derive(Subcommand)]
enum Command {
    /// Design the optimal detection correlator at one threshold.
    Design {
        scenario: PathBuf,
        /// Threshold density; defaults to the first [detection] theta.
        #[arg(long)]
        theta: Option<f64>,
        /// Waveform CSV (t, lambda, w_star, w_omf).
        #[arg(long, default_value = "w_star.csv")]
        out: PathBuf,
    },
    /// MD exponent versus threshold for the optimal and matched correlators.
    Tradeoff {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        theta_min: f64,
        /// Defaults to the threshold where the optimal exponent reaches 0.
        #[arg(long)]
        theta_max: Option<f64>,
        #[arg(long, default_value_t = 41)]
        points: usize,
        /// Write the curve here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo validation of the detection or delay predictions.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Thresholds for detect mode; defaults to the [detection] list.
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        /// Also write the report rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<scenario::Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    scenario::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

/// Parses `args` and runs the command, returning what goes to stdout.
fn execute<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => return Ok(e.render().to_string()),
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    match cli.command {
        Command::Design {
            scenario,
            theta,
            out,
        } => {
            let scn = load(&scenario)?;
            let theta = theta
                .or_else(|| scn.thetas.first().copied())
                .ok_or_else(|| {
                    CliError::Usage("no threshold: pass --theta or list one in [detection]".into())
                })?;
            let o = commands::design(&scn, theta)?;
            write(&out, o.csv.as_deref().unwrap_or_default())?;
            Ok(o.text)
        }
        Command::Tradeoff {
            scenario,
            theta_min,
            theta_max,
            points,
            out,
        } => {
            let scn = load(&scenario)?;
            let o = commands::tradeoff(&scn, theta_min, theta_max, points)?;
            match out {
                Some(p) => {
                    write(&p, &o.text)?;
                    Ok(String::new())
                }
                None => Ok(o.text),
            }
        }
        Command::Simulate {
            scenario,
            mode,
            theta,
            csv,
        } => {
            let scn = load(&scenario)?;
            let o = match mode {
                Mode::Detect => {
                    let thetas = if theta.is_empty() {
                        scn.thetas.clone()
                    } else {
                        theta
                    };
                    commands::simulate_detect(&scn, &thetas)?
                }
                Mode::Delay => commands::simulate_delay(&scn)?,
            };
            if let (Some(p), Some(c)) = (csv, &o.csv) {
                write(&p, c)?;
            }
            Ok(o.text)
        }
    }
}

fn main() -> ExitCode {
    match configure_threads().and_then(|()| execute(std::env::args_os())) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(m)) if m.starts_with("error:") => {
            eprint!("{m}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("apdcorr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
