//! Command-line front end: `simulate`, `sweep`, `period` and `validate`.
//!
//! Every failure prints one line `error[<kind>]: <reason>` on stderr and
//! exits with the code of its kind (see [`CliError::exit_code`]).

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use predtrig::calibration::{self, CalibrationConfig, Fault, Status};
use predtrig::harness::{self, fmt_f64, MonteCarlo};
use predtrig::triggering::{period_from_steady, steady_state_posterior};
use predtrig::{CostSchedule, SelfTrigger, TriggerKind, TriggerSpec};

use config::{check_cost, load_config, load_cost_table, parse_kind, CostSetting, Scenario};

/// Shared-noise runs used by the ET / PT(M=0) identity check.
pub const REDUCTION_RUNS: u64 = 100;
pub const DEFAULT_ROLLOUTS: u64 = 100_000;
pub const DEFAULT_VALIDATE_COST: f64 = 0.5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Inconclusive(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) => 4,
            Self::Validation(_) => 5,
            Self::Inconclusive(_) => 6,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Numeric(_) => "numeric",
            Self::Io(_) => "io",
            Self::Validation(_) => "validation",
            Self::Inconclusive(_) => "inconclusive",
        }
    }
}

impl From<predtrig::Error> for CliError {
    fn from(e: predtrig::Error) -> Self {
        use predtrig::Error as E;
        match e {
            E::InvalidArgument(_)
            | E::InvalidCost(_)
            | E::CostOutOfRange { .. }
            | E::EmptyHorizon => Self::Config(e.to_string()),
            other => Self::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "predtrig",
    version,
    about = "Event, predictive and self triggers for remote state estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed loop and write its trace CSV.
    Simulate(CommonArgs),
    /// Monte Carlo trade-off sweep over triggers and costs.
    Sweep(CommonArgs),
    /// Steady-state self-trigger period for each cost.
    Period(CommonArgs),
    /// Statistical checks of the predicted error distributions.
    Validate(CommonArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    VarianceSignal,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario: example1 or example2.
    #[arg(long)]
    pub preset: Option<String>,
    /// Trigger kind; a comma list for `sweep`.
    #[arg(long)]
    pub trigger: Option<String>,
    /// Prediction horizon M for pt.
    #[arg(long = "horizon", value_name = "M")]
    pub horizon: Option<usize>,
    #[arg(
        long,
        value_name = "C",
        conflicts_with = "cost_grid",
        allow_negative_numbers = true
    )]
    pub cost: Option<f64>,
    /// Comma-separated costs.
    #[arg(long, value_name = "C1,C2,...", allow_hyphen_values = true)]
    pub cost_grid: Option<String>,
    #[arg(long, value_name = "K")]
    pub steps: Option<usize>,
    /// Monte Carlo runs; for `validate`, the number of rollouts.
    #[arg(long, value_name = "N")]
    pub runs: Option<u64>,
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Worker threads. Output does not depend on it.
    #[arg(long, value_name = "W")]
    pub workers: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true, value_enum)]
    pub inject_fault: Option<FaultArg>,
}

impl CommonArgs {
    fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = match (&self.config, &self.preset) {
            (Some(path), _) => load_config(path)?,
            (None, Some(name)) => Scenario::from_preset(name)?,
            (None, None) => return Err(CliError::Config("give --config or --preset".into())),
        };
        if let Some(k) = self.steps {
            if k == 0 {
                return Err(CliError::Config("--steps must be at least 1".into()));
            }
            s.steps = k;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if self.runs == Some(0) {
            return Err(CliError::Config("--runs must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        Ok(s)
    }

    fn horizon(&self, s: &Scenario) -> Option<usize> {
        self.horizon.or(match s.kind {
            Some(TriggerKind::Predictive { horizon }) => Some(horizon),
            _ => None,
        })
    }

    fn kinds(&self, s: &Scenario) -> Result<Vec<TriggerKind>, CliError> {
        match &self.trigger {
            Some(list) => list
                .split(',')
                .map(|t| parse_kind(t.trim(), self.horizon(s)))
                .collect(),
            None => match s.kind {
                Some(TriggerKind::Predictive { .. }) => Ok(vec![TriggerKind::Predictive {
                    horizon: self.horizon(s).unwrap_or_default(),
                }]),
                Some(k) => Ok(vec![k]),
                None => Err(CliError::Config(
                    "no trigger given (--trigger or trigger.kind)".into(),
                )),
            },
        }
        .and_then(|kinds| {
            if kinds.contains(&TriggerKind::Predictive { horizon: 0 }) {
                Err(CliError::Config("pt needs M >= 1".into()))
            } else {
                Ok(kinds)
            }
        })
    }

    fn costs(&self, s: &Scenario) -> Result<Vec<f64>, CliError> {
        if let Some(grid) = &self.cost_grid {
            let costs = grid
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| {
                            CliError::Config(format!("--cost-grid: '{}' is not a number", t.trim()))
                        })
                        .and_then(check_cost)
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(costs);
        }
        match (self.cost, &s.cost) {
            (Some(c), _) => Ok(vec![check_cost(c)?]),
            (None, Some(CostSetting::Constant(c))) => Ok(vec![*c]),
            (None, Some(CostSetting::TablePath(_))) => Err(CliError::Config(
                "this command needs constant costs, not a cost table".into(),
            )),
            (None, None) => Err(CliError::Config(
                "no cost given (--cost, --cost-grid or trigger.cost)".into(),
            )),
        }
    }

    fn cost_schedule(&self, s: &Scenario) -> Result<CostSchedule, CliError> {
        if self.cost_grid.is_some() {
            return Err(CliError::Config("simulate takes a single --cost".into()));
        }
        match (self.cost, &s.cost) {
            (Some(c), _) => Ok(CostSchedule::constant(check_cost(c)?)?),
            (None, Some(CostSetting::Constant(c))) => Ok(CostSchedule::constant(*c)?),
            (None, Some(CostSetting::TablePath(p))) => load_cost_table(p),
            (None, None) => Err(CliError::Config(
                "no cost given (--cost or trigger.cost)".into(),
            )),
        }
    }

    fn write(&self, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let io_err = |e: io::Error| CliError::Io(e.to_string());
        match &self.out {
            Some(path) => {
                let file = File::create(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let mut w = BufWriter::new(file);
                f(&mut w).and_then(|_| w.flush()).map_err(io_err)
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                f(&mut w).and_then(|_| w.flush()).map_err(io_err)
            }
        }
    }
}

fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let s = args.scenario()?;
    let kinds = args.kinds(&s)?;
    let [kind] = kinds[..] else {
        return Err(CliError::Config("simulate takes a single trigger".into()));
    };
    let spec = TriggerSpec::new(kind, args.cost_schedule(&s)?).with_max_horizon(s.max_horizon);
    let mc = MonteCarlo::new(1, s.steps, s.seed);
    let trace = harness::run_closed_loop(&s.model, &s.prior, &spec, s.steps, &mut mc.stream(0))?;
    args.write(|w| trace.write_csv(w))
}

fn sweep(args: &CommonArgs) -> Result<(), CliError> {
    let s = args.scenario()?;
    let kinds = args.kinds(&s)?;
    let costs = args.costs(&s)?;
    let runs = args.runs.or(s.runs).unwrap_or(config::DEFAULT_RUNS);
    let mut mc = MonteCarlo::new(runs, s.steps, s.seed);
    if let Some(w) = args.workers {
        mc = mc.with_workers(w);
    }
    let points = harness::sweep(&s.model, &s.prior, &kinds, &costs, s.max_horizon, &mc)?;
    args.write(|w| harness::write_sweep_csv(&points, w))
}

fn period(args: &CommonArgs) -> Result<(), CliError> {
    let s = args.scenario()?;
    let costs = args.costs(&s)?;
    let steady = steady_state_posterior(&s.model)?;
    let rows = costs
        .iter()
        .map(|&c| {
            let m = match period_from_steady(&s.model, &steady, c, s.max_horizon)? {
                SelfTrigger::After(m) => m.to_string(),
                SelfTrigger::NoFiniteTrigger => "-1".to_string(),
            };
            Ok((c, m))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    args.write(|w| {
        writeln!(w, "C,M")?;
        for (c, m) in &rows {
            writeln!(w, "{},{m}", fmt_f64(*c))?;
        }
        Ok(())
    })
}

fn validate(args: &CommonArgs) -> Result<(), CliError> {
    let s = args.scenario()?;
    let horizon = args.horizon(&s).unwrap_or(2);
    if horizon == 0 {
        return Err(CliError::Config("validate needs M >= 1".into()));
    }
    let cfg = CalibrationConfig {
        horizon,
        rollouts: args.runs.unwrap_or(DEFAULT_ROLLOUTS),
        seed: s.seed,
        fault: args
            .inject_fault
            .map(|FaultArg::VarianceSignal| Fault::CorruptVarianceSignal),
        ..CalibrationConfig::default()
    };
    let cost = match (args.cost, &s.cost) {
        (Some(c), _) => check_cost(c)?,
        (None, Some(CostSetting::Constant(c))) => *c,
        _ => DEFAULT_VALIDATE_COST,
    };
    let mut checks = calibration::error_calibration(&s.model, &s.prior, &cfg)?;
    let mc = MonteCarlo::new(REDUCTION_RUNS, s.steps, s.seed);
    checks.push(calibration::reduction_check(&s.model, &s.prior, cost, &mc)?);
    args.write(|w| {
        for c in &checks {
            writeln!(w, "{c}")?;
        }
        Ok(())
    })?;
    match calibration::overall(&checks) {
        Status::Pass => Ok(()),
        Status::Fail => {
            let failing: Vec<String> = checks
                .iter()
                .filter(|c| c.status == Status::Fail)
                .map(|c| format!("{} (z={:+.3})", c.name, c.z))
                .collect();
            Err(CliError::Validation(format!(
                "failed checks: {}",
                failing.join(", ")
            )))
        }
        Status::Inconclusive => Err(CliError::Inconclusive(format!(
            "{} rollouts is below the minimum of {}",
            cfg.rollouts,
            calibration::MIN_CONCLUSIVE_ROLLOUTS
        ))),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Period(a) => period(a),
        Command::Validate(a) => validate(a),
    }
}

fn report(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("error[{}]: {msg}", e.tag());
    ExitCode::from(e.exit_code())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return report(&CliError::Config(line.to_string()));
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
