//! Closed-loop simulation of sensor, trigger and remote estimator, and the
//! Monte Carlo machinery built on it.
//!
//! Per step `k` the protocol is: take `y_k`, run the local filter update,
//! execute the committed `gamma_k` at the remote, then commit future
//! decisions (PT) or the next transmit time (ST). The event trigger decides
//! `gamma_k` right before executing it. `gamma_1 = 1` for every trigger.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{
    kf_step, open_loop_cov, remote_step, variance_schedule, FilterState, RemoteState,
    VarianceSchedule,
};
use crate::linalg::{squared_norm, sub_vec, SymmetricPsd};
use crate::model::{simulate_trajectory, ModelProvider, Prior, Trajectory};
use crate::rng::{Purpose, RngStream};
use crate::triggering::{
    event_trigger, mean_signal, predictive_trigger, self_trigger, warm_up_decision, CostSchedule,
    DecisionLedger, SelfTrigger, TriggerKind, TriggerSignals, TriggerSpec,
};

/// Steps discarded before period and determinism detection.
pub const DEFAULT_TRANSIENT: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xhat_f: Vec<f64>,
    pub xhat: Vec<f64>,
    pub gamma: bool,
    /// Signals of the decision taken at `k` (for PT the target is `k + M`).
    pub signals: TriggerSignals,
}

impl StepRecord {
    /// `e^F_k = x_k - x^F_k`
    pub fn local_error(&self) -> Vec<f64> {
        sub_vec(&self.x, &self.xhat_f)
    }

    /// `e_k = x_k - x_k(remote)`
    pub fn remote_error(&self) -> Vec<f64> {
        sub_vec(&self.x, &self.xhat)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub kind: TriggerKind,
    pub steps: Vec<StepRecord>,
}

/// Per-run statistics averaged over the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunMetrics {
    /// Mean of `e_k^T e_k` over `k = 1..K`.
    pub mse: f64,
    /// Fraction of steps with `gamma_k = 1`.
    pub comm: f64,
}

impl SimulationTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn gammas(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.gamma).collect()
    }

    pub fn transmit_times(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.gamma).map(|s| s.k).collect()
    }

    pub fn metrics(&self) -> RunMetrics {
        let n = self.steps.len() as f64;
        let sq: f64 = self
            .steps
            .iter()
            .map(|s| squared_norm(&s.remote_error()))
            .sum();
        let tx = self.steps.iter().filter(|s| s.gamma).count() as f64;
        RunMetrics {
            mse: sq / n,
            comm: tx / n,
        }
    }

    /// Columns: `k, x0.., y0.., xhatF0.., xhat0.., gamma, Emean, Evar, E, cost`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let Some(first) = self.steps.first() else {
            return writeln!(w, "k,gamma,Emean,Evar,E,cost");
        };
        let mut header = vec!["k".to_string()];
        for (prefix, n) in [
            ("x", first.x.len()),
            ("y", first.y.len()),
            ("xhatF", first.xhat_f.len()),
            ("xhat", first.xhat.len()),
        ] {
            header.extend((0..n).map(|i| format!("{prefix}{i}")));
        }
        header.extend(["gamma", "Emean", "Evar", "E", "cost"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![s.k.to_string()];
            for v in s.x.iter().chain(&s.y).chain(&s.xhat_f).chain(&s.xhat) {
                row.push(fmt_f64(*v));
            }
            row.push(u8::from(s.gamma).to_string());
            for v in [
                s.signals.mean,
                s.signals.var,
                s.signals.total,
                s.signals.threshold,
            ] {
                row.push(fmt_f64(v));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Largest time index a trigger may look up in the schedule or cost table.
fn lookahead(kind: TriggerKind, steps: usize) -> usize {
    match kind {
        TriggerKind::Predictive { horizon } => steps + horizon,
        _ => steps,
    }
}

/// Variance schedule long enough for every spec in `specs` over `steps`.
pub fn schedule_for(
    model: &dyn ModelProvider,
    prior: &Prior,
    specs: &[TriggerSpec],
    steps: usize,
) -> Result<VarianceSchedule> {
    let horizon = specs
        .iter()
        .map(|s| lookahead(s.kind, steps))
        .max()
        .unwrap_or(steps);
    variance_schedule(model, prior, horizon.max(steps))
}

fn check_spec(spec: &TriggerSpec, steps: usize) -> Result<()> {
    spec.validate()?;
    if let Some(len) = spec.cost.covered() {
        let need = lookahead(spec.kind, steps);
        if len < need {
            return Err(Error::CostOutOfRange { k: need, len });
        }
    }
    Ok(())
}

struct Outcome {
    records: Vec<StepRecord>,
    sq_error: f64,
    transmits: usize,
}

fn closed_loop(
    model: &dyn ModelProvider,
    prior: &Prior,
    spec: &TriggerSpec,
    traj: &Trajectory,
    schedule: &VarianceSchedule,
    record: bool,
) -> Result<Outcome> {
    let steps = traj.horizon();
    if steps == 0 {
        return Err(Error::EmptyHorizon);
    }
    check_spec(spec, steps)?;
    let need = lookahead(spec.kind, steps);
    if schedule.horizon() < need {
        return Err(Error::ScheduleTooShort {
            covered: schedule.horizon(),
            requested: need,
        });
    }
    let cost: &CostSchedule = &spec.cost;
    let mut filter = FilterState::initial(prior);
    let mut remote = RemoteState::initial(prior);
    let mut ledger = DecisionLedger::new();
    // Self trigger: next transmit time, and P^F_{k|l} since the last one.
    let mut next_transmit: Option<usize> = None;
    let mut open_loop: SymmetricPsd = prior.cov.clone();

    let mut out = Outcome {
        records: Vec::with_capacity(if record { steps } else { 0 }),
        sq_error: 0.0,
        transmits: 0,
    };

    for k in 1..=steps {
        filter = kf_step(&filter, traj.measurement(k), model)?;

        let (gamma, signals) = match spec.kind {
            TriggerKind::Event => {
                let s = event_trigger(k, &filter, &remote, model, cost)?;
                (k == 1 || s.fires(), s)
            }
            TriggerKind::Predictive { horizon: 0 } => {
                let s = if k == 1 {
                    ledger.commit(1, true)?;
                    let mean = mean_signal(1, 0, &filter, &remote, model)?;
                    TriggerSignals {
                        mean,
                        var: 0.0,
                        total: mean,
                        threshold: cost.at(1)?,
                    }
                } else {
                    predictive_trigger(k, 0, &filter, &remote, &mut ledger, model, cost, schedule)?
                };
                (ledger.execute(k)?, s)
            }
            TriggerKind::Predictive { horizon } => {
                if k == 1 {
                    ledger.commit(1, true)?;
                    for t in 2..=horizon {
                        warm_up_decision(t, &mut ledger, model, cost, schedule)?;
                    }
                }
                let gamma = ledger.execute(k)?;
                let s = predictive_trigger(
                    k,
                    horizon,
                    &filter,
                    &remote,
                    &mut ledger,
                    model,
                    cost,
                    schedule,
                )?;
                (gamma, s)
            }
            TriggerKind::SelfTrigger => {
                open_loop = open_loop_cov(model, k - 1, &open_loop)?;
                let var = (open_loop.trace() - filter.cov().trace()).max(0.0);
                let gamma = k == 1 || next_transmit == Some(k);
                if gamma {
                    open_loop = filter.cov().clone();
                    let remaining = steps - k;
                    next_transmit = if remaining == 0 {
                        None
                    } else {
                        let cap = spec.max_horizon.min(remaining);
                        match self_trigger(k, model, schedule, cost, cap)? {
                            SelfTrigger::After(m) => Some(k + m),
                            SelfTrigger::NoFiniteTrigger => None,
                        }
                    };
                }
                let s = TriggerSignals {
                    mean: 0.0,
                    var,
                    total: var,
                    threshold: cost.at(k)?,
                };
                (gamma, s)
            }
        };

        remote = remote_step(&remote, gamma, gamma.then(|| filter.mean()), model)?;
        let x = traj.state(k);
        out.sq_error += squared_norm(&sub_vec(x, &remote.estimate));
        out.transmits += usize::from(gamma);
        if record {
            out.records.push(StepRecord {
                k,
                x: x.to_vec(),
                y: traj.measurement(k).to_vec(),
                xhat_f: filter.mean().to_vec(),
                xhat: remote.estimate.clone(),
                gamma,
                signals,
            });
        }
    }
    Ok(out)
}

/// Runs one trigger on a given realization.
pub fn run_on_trajectory(
    model: &dyn ModelProvider,
    prior: &Prior,
    spec: &TriggerSpec,
    traj: &Trajectory,
    schedule: &VarianceSchedule,
) -> Result<SimulationTrace> {
    let out = closed_loop(model, prior, spec, traj, schedule, true)?;
    Ok(SimulationTrace {
        kind: spec.kind,
        steps: out.records,
    })
}

/// Simulates a realization from `rng` and runs the trigger on it.
pub fn run_closed_loop(
    model: &dyn ModelProvider,
    prior: &Prior,
    spec: &TriggerSpec,
    steps: usize,
    rng: &mut RngStream,
) -> Result<SimulationTrace> {
    let traj = simulate_trajectory(model, prior, steps, rng)?;
    let schedule = schedule_for(model, prior, std::slice::from_ref(spec), steps)?;
    run_on_trajectory(model, prior, spec, &traj, &schedule)
}

/// Monte Carlo settings shared by [`monte_carlo`] and [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonteCarlo {
    pub runs: u64,
    pub steps: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the rayon default. Results do not
    /// depend on this.
    pub workers: Option<usize>,
}

impl MonteCarlo {
    pub fn new(runs: u64, steps: usize, seed: u64) -> Self {
        Self {
            runs,
            steps,
            seed,
            workers: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    /// Trajectory stream of run `run`.
    pub fn stream(&self, run: u64) -> RngStream {
        RngStream::for_run(self.seed, run, Purpose::Trajectory)
    }
}

/// Aggregated statistics of one (trigger, cost) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub kind: TriggerKind,
    /// Constant cost; `None` for a tabulated schedule.
    pub cost: Option<f64>,
    pub runs: u64,
    pub steps: usize,
    pub seed: u64,
    pub comm_mean: f64,
    pub err_mean: f64,
    /// Standard deviation of the per-run errors.
    pub err_std: f64,
}

impl TradeoffPoint {
    /// Standard error of `err_mean`.
    pub fn err_se(&self) -> f64 {
        self.err_std / (self.runs as f64).sqrt()
    }
}

fn aggregate(spec: &TriggerSpec, mc: &MonteCarlo, per_run: &[RunMetrics]) -> TradeoffPoint {
    let n = per_run.len() as f64;
    let err_mean = per_run.iter().map(|m| m.mse).sum::<f64>() / n;
    let comm_mean = per_run.iter().map(|m| m.comm).sum::<f64>() / n;
    let err_std = if per_run.len() > 1 {
        (per_run
            .iter()
            .map(|m| (m.mse - err_mean).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    TradeoffPoint {
        kind: spec.kind,
        cost: match spec.cost {
            CostSchedule::Constant(c) => Some(c),
            CostSchedule::Table(_) => None,
        },
        runs: mc.runs,
        steps: mc.steps,
        seed: mc.seed,
        comm_mean,
        err_mean,
        err_std,
    }
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every spec on the same `runs` realizations. Run `i` uses the
/// trajectory stream `(seed, i)` for all specs, so the comparison is
/// paired. Results are folded in run order.
pub fn evaluate(
    model: &dyn ModelProvider,
    prior: &Prior,
    specs: &[TriggerSpec],
    mc: &MonteCarlo,
) -> Result<Vec<TradeoffPoint>> {
    if mc.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if mc.steps == 0 {
        return Err(Error::EmptyHorizon);
    }
    for spec in specs {
        check_spec(spec, mc.steps)?;
    }
    let schedule = schedule_for(model, prior, specs, mc.steps)?;
    let run_one = |run: u64| -> Result<Vec<RunMetrics>> {
        let traj = simulate_trajectory(model, prior, mc.steps, &mut mc.stream(run))?;
        specs
            .iter()
            .map(|spec| {
                let out = closed_loop(model, prior, spec, &traj, &schedule, false)?;
                let n = mc.steps as f64;
                Ok(RunMetrics {
                    mse: out.sq_error / n,
                    comm: out.transmits as f64 / n,
                })
            })
            .collect()
    };
    let results: Vec<Result<Vec<RunMetrics>>> = in_pool(mc.workers, || {
        (0..mc.runs).into_par_iter().map(run_one).collect()
    })?;
    let mut per_run = Vec::with_capacity(results.len());
    for (run, r) in results.into_iter().enumerate() {
        per_run.push(r.map_err(|e| Error::RunFailed {
            run: run as u64,
            seed: mc.seed,
            source: Box::new(e),
        })?);
    }
    Ok(specs
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let column: Vec<RunMetrics> = per_run.iter().map(|r| r[j]).collect();
            aggregate(spec, mc, &column)
        })
        .collect())
}

pub fn monte_carlo(
    model: &dyn ModelProvider,
    prior: &Prior,
    spec: &TriggerSpec,
    mc: &MonteCarlo,
) -> Result<TradeoffPoint> {
    Ok(evaluate(model, prior, std::slice::from_ref(spec), mc)?.remove(0))
}

/// One point per `(trigger, cost)`, ordered by trigger then cost.
pub fn sweep(
    model: &dyn ModelProvider,
    prior: &Prior,
    triggers: &[TriggerKind],
    costs: &[f64],
    max_horizon: usize,
    mc: &MonteCarlo,
) -> Result<Vec<TradeoffPoint>> {
    if costs.is_empty() || triggers.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one trigger and one cost".into(),
        ));
    }
    let specs = triggers
        .iter()
        .flat_map(|kind| {
            costs.iter().map(move |c| {
                Ok(TriggerSpec::new(*kind, CostSchedule::constant(*c)?)
                    .with_max_horizon(max_horizon))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(model, prior, &specs, mc)
}

pub const SWEEP_HEADER: &str = "trigger,M,C,runs,K,seed,comm_mean,err_mean,err_std";

/// Sweep CSV. `M` is `0` for ET and empty for ST.
pub fn write_sweep_csv<W: Write>(points: &[TradeoffPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for p in points {
        let m = match p.kind {
            TriggerKind::Event => "0".to_string(),
            TriggerKind::Predictive { horizon } => horizon.to_string(),
            TriggerKind::SelfTrigger => String::new(),
        };
        let c = p.cost.map_or_else(|| "table".to_string(), fmt_f64);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.kind.name(),
            m,
            c,
            p.runs,
            p.steps,
            p.seed,
            fmt_f64(p.comm_mean),
            fmt_f64(p.err_mean),
            fmt_f64(p.err_std)
        )?;
    }
    Ok(())
}

/// Smallest `p` with `gamma[i + p] == gamma[i]` over the post-transient
/// tail. `None` if the tail is shorter than two candidate periods.
pub fn detect_period(gammas: &[bool], transient: usize) -> Option<usize> {
    let tail = gammas.get(transient..)?;
    (1..=tail.len() / 2).find(|&p| (0..tail.len() - p).all(|i| tail[i + p] == tail[i]))
}

/// Fraction of trace pairs whose post-transient decision sequences are
/// identical.
pub fn determinism_metric(traces: &[SimulationTrace], transient: usize) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::InvalidArgument(
            "determinism needs at least two traces".into(),
        ));
    }
    let len = traces[0].horizon();
    if traces.iter().any(|t| t.horizon() != len) {
        return Err(Error::InvalidArgument(
            "traces have different lengths".into(),
        ));
    }
    if len <= transient {
        return Err(Error::InvalidArgument(format!(
            "horizon {len} does not exceed transient {transient}"
        )));
    }
    let tails: Vec<Vec<bool>> = traces
        .iter()
        .map(|t| t.gammas()[transient..].to_vec())
        .collect();
    let mut same = 0usize;
    let mut pairs = 0usize;
    for i in 0..tails.len() {
        for j in (i + 1)..tails.len() {
            pairs += 1;
            same += usize::from(tails[i] == tails[j]);
        }
    }
    Ok(same as f64 / pairs as f64)
}
