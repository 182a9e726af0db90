//! `postop`: run the hydrocodone rescheduling study pipeline into a run
//! directory.

mod error;
mod rundir;
mod steps;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use postop_core::profile::Thresholds;
use postop_core::StudyCalendar;

use crate::error::{CliError, CliResult};
use crate::rundir::RunDir;
use crate::steps::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "postop",
    version,
    about = "Provider-level hydrocodone preference and post-operative opioid outcomes",
    after_help = "Examples:\n  \
      postop all --sim sim.cfg --out run1        # simulate, then every analysis step\n  \
      postop classify --input claims/ --out run2 # steps can also be run one at a time\n  \
      postop did --out run2\n\n\
      Exit status: 0 success, 1 invalid input or usage, 2 analysis failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run directory receiving every output
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Directory holding the five claim files (default: <out>/data)
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// File with the six study dates as key=value lines
    #[arg(long, global = true)]
    calendar: Option<PathBuf>,

    /// Classification thresholds as low,high,min_cases
    #[arg(long, global = true, default_value = "0.25,0.75,5")]
    thresholds: String,

    /// Simulation config (flat key = value)
    #[arg(long, global = true)]
    sim: Option<PathBuf>,

    /// Override the simulation seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write IRLS iteration logs and fitted coefficients under <out>/fits
    #[arg(long, global = true)]
    dump_fit: bool,

    /// Only each patient's first eligible procedure over the whole study
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate synthetic claims and ground truth into the input directory
    Simulate,
    /// Profile providers' hydrocodone share and classify them
    Classify,
    /// Build the study cohort, outcomes and covariates
    Cohort,
    /// Table One by exposure group
    Describe,
    /// Exposure x year models on the pre-period
    Pretrend,
    /// Difference-in-differences models
    Did,
    /// Quarterly outcome means by group
    Trends,
    /// Compare estimates with the simulation's ground truth
    Check,
    /// Every step in order
    All,
}

fn settings(cli: &Cli) -> CliResult<Settings> {
    let calendar = match &cli.calendar {
        Some(p) if !p.exists() => return Err(CliError::MissingInput(format!("calendar file {}", p.display()))),
        Some(p) => StudyCalendar::load(p)?,
        None => StudyCalendar::default(),
    };
    calendar.validate()?;
    Ok(Settings {
        input: cli.input.clone().unwrap_or_else(|| cli.out.join("data")),
        calendar,
        thresholds: Thresholds::parse(&cli.thresholds)?,
        strict: cli.strict,
        dump_fit: cli.dump_fit,
        sim: cli.sim.clone(),
        seed: cli.seed,
    })
}

fn run(cli: &Cli) -> CliResult<()> {
    let s = settings(cli)?;
    if let Some(n) = cli.threads {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut rd = RunDir::create(&cli.out)?;
    let step = match cli.command {
        Command::Simulate => steps::simulate,
        Command::Classify => steps::classify,
        Command::Cohort => steps::cohort,
        Command::Describe => steps::describe,
        Command::Pretrend => steps::pretrend,
        Command::Did => steps::did,
        Command::Trends => steps::trends,
        Command::Check => steps::check,
        Command::All => steps::all,
    };
    step(&mut rd, &s)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            if matches!(e, CliError::MissingInput(_)) {
                eprintln!("\nusage: postop <COMMAND> --out <DIR> [OPTIONS]; see `postop --help`");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
