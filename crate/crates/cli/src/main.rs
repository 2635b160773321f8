//! `stopwalk`: path counts, estimates, region checks, simulation studies and
//! trial designs from JSON inputs.
//!
//! Exit status is 0 on success, 1 when a computation or check fails (with a
//! JSON error on stderr) and 2 on usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stopwalk_core::simulation::{DEFAULT_FAILURE_LIMIT, DEFAULT_MAX_STEPS};
use stopwalk_core::{Error, LatticePoint, Rational};

mod commands;
mod render;

use render::{core_error_json, error_json, parse_rational_list};

#[derive(Parser, Debug)]
#[command(name = "stopwalk", version, about = "Unbiased estimation for boundary-stopped multinomial walks")]
struct Cli {
    /// Print rationals as decimals with this many places instead of "num/den".
    #[arg(long, global = true)]
    digits: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Path counts k, k*_i and the estimate at one point.
    Count(CountArgs),
    /// Unbiased and maximum-likelihood estimates for a stop point.
    Estimate(EstimateArgs),
    /// Check region hypotheses or unbiasedness.
    Verify {
        #[command(subcommand)]
        check: VerifyCommand,
    },
    /// Monte Carlo study comparing the estimators.
    Simulate(SimulateArgs),
    /// Multistage trial designs.
    Trial {
        #[command(subcommand)]
        action: TrialCommand,
    },
    /// Validate a region file.
    Validate {
        #[arg(long)]
        region: PathBuf,
    },
    /// Parse any input or emitted JSON file and print it normalized.
    Inspect { file: PathBuf },
}

#[derive(Args, Debug)]
struct CountArgs {
    #[arg(long)]
    region: PathBuf,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    point: LatticePoint,
    /// Write the full table, big integers as decimal strings.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormArg {
    Lattice2d,
    Nullstep,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    region: Option<PathBuf>,
    /// Table horizon; defaults to the observation's order.
    #[arg(long)]
    horizon: Option<usize>,
    /// Use a previously emitted count table instead of a region.
    #[arg(long, conflicts_with_all = ["region", "closed_form"])]
    table: Option<PathBuf>,
    #[arg(long)]
    observation: LatticePoint,
    #[arg(long, value_enum)]
    closed_form: Option<FormArg>,
    /// Threshold of the closed-form walk.
    #[arg(long, requires = "closed_form")]
    b: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum VerifyCommand {
    /// Convex-hull test of every slice up to the horizon.
    Simple {
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        horizon: usize,
        /// Include every separation certificate in the report.
        #[arg(long)]
        certificates: bool,
    },
    /// Mass propagation up to the horizon.
    Closed {
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value = "0.05", value_parser = parse_probability)]
        threshold: Rational,
        /// Include absorbed mass per order.
        #[arg(long)]
        by_order: bool,
    },
    /// Exact check of E[p̂_i] = p_i over a grid of models.
    Unbiased {
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        horizon: usize,
        /// Grid point, e.g. 1/3,2/3; repeat for more.
        #[arg(long = "p", required = true, value_parser = parse_grid_point)]
        grid: Vec<GridPoint>,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Unbiased)]
        estimator: EstimatorArg,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Unbiased,
    Ml,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EstimatorsArg {
    Both,
    Unbiased,
    Ml,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    /// Closed form when the region matches one, else path counts.
    Auto,
    Lattice2d,
    Nullstep,
    /// Always use path counts.
    Table,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    region: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EstimatorsArg::Both)]
    estimators: EstimatorsArg,
    /// Summary CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// One row per simulated path.
    #[arg(long)]
    per_path: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SourceArg::Auto)]
    source: SourceArg,
    /// Count-table horizon for table-based estimates; defaults to the region horizon.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,
    /// Largest tolerated fraction of paths that never stop.
    #[arg(long, default_value_t = DEFAULT_FAILURE_LIMIT)]
    failure_limit: f64,
}

#[derive(Subcommand, Debug)]
enum TrialCommand {
    /// Check a design and report its stop states.
    Validate {
        #[arg(long)]
        design: PathBuf,
    },
    /// Estimates at a terminal state, e.g. r=4,e=1,stage=2.
    Estimate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_parser = parse_terminal)]
        terminal: Terminal,
    },
    /// Exact expectation of the estimators under p = (response, none, progression).
    Verify {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_parser = parse_grid_point)]
        p: GridPoint,
    },
}

#[derive(Clone, Debug)]
struct GridPoint(Vec<Rational>);

#[derive(Clone, Copy, Debug)]
struct Terminal {
    r: u32,
    e: u32,
    stage: usize,
}

fn parse_grid_point(text: &str) -> Result<GridPoint, Error> {
    parse_rational_list(text).map(GridPoint)
}

fn parse_probability(text: &str) -> Result<Rational, Error> {
    stopwalk_core::scalar::parse_rational(text)
}

fn parse_terminal(text: &str) -> Result<Terminal, String> {
    let (mut r, mut e, mut stage) = (None, None, None);
    for part in text.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {part:?}"))?;
        let value: u64 = value.trim().parse().map_err(|_| format!("bad number in {part:?}"))?;
        let slot = match key.trim() {
            "r" => &mut r,
            "e" => &mut e,
            "stage" => &mut stage,
            other => return Err(format!("unknown key {other:?}; expected r, e, stage")),
        };
        *slot = Some(value);
    }
    let need = |v: Option<u64>, k: &str| v.ok_or_else(|| format!("missing {k}="));
    Ok(Terminal {
        r: need(r, "r")? as u32,
        e: need(e, "e")? as u32,
        stage: need(stage, "stage")? as usize,
    })
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    Io(String),
    /// A check ran to completion and its report (already printed) failed.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn cap_threads() -> Result<Option<usize>, Failure> {
    let Ok(raw) = std::env::var("STOPWALK_THREADS") else { return Ok(None) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("STOPWALK_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Io(e.to_string()))?;
    Ok(Some(n))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = cap_threads()?;
    let digits = cli.digits;
    match cli.command {
        Command::Count(a) => commands::count(&a.region, a.horizon, &a.point, a.emit.as_deref(), digits),
        Command::Estimate(a) => commands::estimate(
            commands::EstimateInput {
                region: a.region.as_deref(),
                horizon: a.horizon,
                table: a.table.as_deref(),
                closed_form: a.closed_form.map(FormArg::form),
                b: a.b,
            },
            &a.observation,
            digits,
        ),
        Command::Verify { check } => match check {
            VerifyCommand::Simple { region, horizon, certificates } => {
                commands::verify_simple(&region, horizon, certificates, digits)
            }
            VerifyCommand::Closed { region, model, horizon, threshold, by_order } => {
                commands::verify_closed(&region, &model, horizon, &threshold, by_order, digits)
            }
            VerifyCommand::Unbiased { region, horizon, grid, estimator } => {
                let grid: Vec<Vec<Rational>> = grid.into_iter().map(|g| g.0).collect();
                commands::verify_unbiased(&region, horizon, &grid, estimator == EstimatorArg::Ml, digits)
            }
        },
        Command::Simulate(a) => commands::simulate(
            commands::SimulateInput {
                model: &a.model,
                region: &a.region,
                paths: a.paths,
                seed: a.seed,
                ml: a.estimators != EstimatorsArg::Unbiased,
                unbiased: a.estimators != EstimatorsArg::Ml,
                out: a.out.as_deref(),
                per_path: a.per_path.as_deref(),
                source: match a.source {
                    SourceArg::Auto => commands::Source::Auto,
                    SourceArg::Lattice2d => commands::Source::Closed(FormArg::Lattice2d.form()),
                    SourceArg::Nullstep => commands::Source::Closed(FormArg::Nullstep.form()),
                    SourceArg::Table => commands::Source::Table,
                },
                horizon: a.horizon,
                max_steps: a.max_steps,
                failure_limit: a.failure_limit,
                threads,
            },
            digits,
        ),
        Command::Trial { action } => match action {
            TrialCommand::Validate { design } => commands::trial_validate(&design),
            TrialCommand::Estimate { design, terminal } => {
                commands::trial_estimate(&design, terminal.r, terminal.e, terminal.stage, digits)
            }
            TrialCommand::Verify { design, p } => commands::trial_verify(&design, &p.0, digits),
        },
        Command::Validate { region } => commands::validate(&region),
        Command::Inspect { file } => commands::inspect(&file),
    }
}

impl FormArg {
    fn form(self) -> stopwalk_core::ClosedForm {
        match self {
            FormArg::Lattice2d => stopwalk_core::ClosedForm::Lattice2d,
            FormArg::Nullstep => stopwalk_core::ClosedForm::NullStep,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code.clamp(0, 255) as u8);
        }
    };
    let (code, body) = match run(cli) {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => (2, error_json("usage", &msg)),
        Err(Failure::Core(e)) => (1, core_error_json(&e)),
        Err(Failure::Io(msg)) => (1, error_json("io", &msg)),
        Err(Failure::Check(msg)) => (1, error_json("check_failed", &msg)),
    };
    eprintln!("{body}");
    ExitCode::from(code)
}
