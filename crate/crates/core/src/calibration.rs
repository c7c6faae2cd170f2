//! Empirical checks of the predicted error distributions.
//!
//! Given a fixed measurement history `Y_k`, futures are sampled from
//! `x_k | Y_k ~ N(x^F_k, P^F_k)` and rolled forward through the plant and
//! the filter. The sample moments of the open-loop error `e^I_{k+M}` and
//! the closed-loop error `e^II_{k+M}` are compared with
//! [`error_i_distribution`] and [`error_ii_distribution`] by z-score.

use std::fmt;

use crate::error::{Error, Result};
use crate::estimation::{kf_step, variance_schedule, FilterState, GaussianBelief, RemoteState};
use crate::harness::{run_on_trajectory, schedule_for, MonteCarlo};
use crate::linalg::{sub_vec, SymmetricPsd};
use crate::model::{propagate_mean, sample_gaussian, simulate_trajectory, ModelProvider, Prior};
use crate::rng::{Purpose, RngStream};
use crate::triggering::{
    error_i_distribution, error_ii_distribution, CostSchedule, DecisionLedger, TriggerKind,
    TriggerSpec,
};

/// Below this many rollouts the checks are reported as inconclusive.
pub const MIN_CONCLUSIVE_ROLLOUTS: u64 = 10_000;
pub const Z_LIMIT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Inflates the predicted open-loop covariance (the first term of the
    /// variance signal) by 25 %.
    CorruptVarianceSignal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "PASS",
            Self::Inconclusive => "INCONCLUSIVE",
            Self::Fail => "FAIL",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub predicted: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z: f64,
    pub status: Status,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: predicted {:.6e} empirical {:.6e} se {:.3e} z {:+.3}",
            self.status, self.name, self.predicted, self.empirical, self.std_error, self.z
        )
    }
}

/// Worst status over all checks.
pub fn overall(checks: &[Check]) -> Status {
    checks
        .iter()
        .map(|c| c.status)
        .max()
        .unwrap_or(Status::Pass)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationConfig {
    /// Conditioning time; should be well past the filter transient.
    pub k: usize,
    /// Prediction horizon `M >= 1`.
    pub horizon: usize,
    pub rollouts: u64,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            k: 60,
            horizon: 2,
            rollouts: 100_000,
            seed: 1,
            fault: None,
        }
    }
}

fn z_check(
    name: String,
    predicted: f64,
    empirical: f64,
    std_error: f64,
    conclusive: bool,
) -> Check {
    let z = if std_error > 0.0 {
        (empirical - predicted) / std_error
    } else if (empirical - predicted).abs() <= 1e-12 * predicted.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    };
    let status = if !conclusive {
        Status::Inconclusive
    } else if z.abs() <= Z_LIMIT {
        Status::Pass
    } else {
        Status::Fail
    };
    Check {
        name,
        predicted,
        empirical,
        std_error,
        z,
        status,
    }
}

/// Running first and second moments per coordinate.
struct Moments {
    n: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    fn push(&mut self, e: &[f64]) {
        self.n += 1;
        for (i, v) in e.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    fn var(&self, i: usize) -> f64 {
        let n = self.n as f64;
        let m = self.mean(i);
        (self.sum_sq[i] - n * m * m) / (n - 1.0)
    }

    fn checks(&self, label: &str, predicted: &GaussianBelief, conclusive: bool) -> Vec<Check> {
        let n = self.n as f64;
        let mut out = Vec::new();
        for i in 0..predicted.dim() {
            let var = predicted.cov.get(i, i);
            let suffix = if predicted.dim() > 1 {
                format!("[{i}]")
            } else {
                String::new()
            };
            out.push(z_check(
                format!("{label}_mean{suffix}"),
                predicted.mean[i],
                self.mean(i),
                (var / n).sqrt(),
                conclusive,
            ));
            out.push(z_check(
                format!("{label}_var{suffix}"),
                var,
                self.var(i),
                var * (2.0 / (n - 1.0)).sqrt(),
                conclusive,
            ));
        }
        out
    }
}

/// Checks both cases of the open-loop error distribution and the
/// closed-loop error distribution at `(k, M)`.
///
/// * past trigger: last transmit at `k - 3`, nothing scheduled, so the
///   error is biased by the data received since;
/// * scheduled trigger: a transmit committed at `k + M - 1`.
pub fn error_calibration(
    model: &dyn ModelProvider,
    prior: &Prior,
    cfg: &CalibrationConfig,
) -> Result<Vec<Check>> {
    let (k, m) = (cfg.k, cfg.horizon);
    if m == 0 || k < 4 {
        return Err(Error::InvalidArgument(
            "calibration needs M >= 1 and k >= 4".into(),
        ));
    }
    if cfg.rollouts < 2 {
        return Err(Error::InvalidArgument(
            "calibration needs at least two rollouts".into(),
        ));
    }
    let schedule = variance_schedule(model, prior, k + m)?;
    let traj = simulate_trajectory(
        model,
        prior,
        k,
        &mut RngStream::for_run(cfg.seed, 0, Purpose::Trajectory),
    )?;
    let mut filters = vec![FilterState::initial(prior)];
    for j in 1..=k {
        let next = kf_step(&filters[j - 1], traj.measurement(j), model)?;
        filters.push(next);
    }
    let filter_k = &filters[k];

    // Past-trigger case: transmit at l, open loop since.
    let last = k - 3;
    let remote_past = RemoteState {
        k: k - 1,
        estimate: propagate_mean(model, filters[last].mean(), last, k - 1 - last)?,
        last_transmit: last,
    };
    let mut ledger_past = DecisionLedger::new();
    for t in 1..=k + m - 1 {
        ledger_past.commit(t, t == 1 || t == last)?;
    }
    let mut predicted_past =
        error_i_distribution(k, m, filter_k, &remote_past, &ledger_past, model, &schedule)?;
    if cfg.fault == Some(Fault::CorruptVarianceSignal) {
        predicted_past.cov = SymmetricPsd::new(predicted_past.cov.as_matrix().scale(1.25))?;
    }
    let open_loop_past = propagate_mean(model, &remote_past.propagated(model)?, k, m)?;

    // Scheduled-trigger case.
    let kappa = k + m - 1;
    let mut ledger_sched = DecisionLedger::new();
    for t in 1..=k + m - 1 {
        ledger_sched.commit(t, t == 1 || t == last || t == kappa)?;
    }
    let predicted_sched = error_i_distribution(
        k,
        m,
        filter_k,
        &remote_past,
        &ledger_sched,
        model,
        &schedule,
    )?;
    let predicted_ii = error_ii_distribution(k, m, &schedule)?;

    let n = model.state_dim();
    let zero_x = vec![0.0; n];
    let zero_y = vec![0.0; model.measurement_dim()];
    let mut rng = RngStream::for_run(cfg.seed, 0, Purpose::Rollout);
    let (mut past, mut sched, mut closed) = (Moments::new(n), Moments::new(n), Moments::new(n));
    for _ in 0..cfg.rollouts {
        let mut x = sample_gaussian(filter_k.mean(), filter_k.cov(), &mut rng)?;
        let mut f = filter_k.clone();
        let mut at_kappa = Vec::new();
        for t in k + 1..=k + m {
            let v = sample_gaussian(&zero_x, &model.process_noise(t - 1), &mut rng)?;
            x = model
                .transition(t - 1)
                .mul_vec(&x)?
                .iter()
                .zip(&v)
                .map(|(a, b)| a + b)
                .collect();
            let w = sample_gaussian(&zero_y, &model.measurement_noise(t), &mut rng)?;
            let y: Vec<f64> = model
                .observation(t)
                .mul_vec(&x)?
                .iter()
                .zip(&w)
                .map(|(a, b)| a + b)
                .collect();
            f = kf_step(&f, &y, model)?;
            if t == kappa {
                at_kappa = f.mean().to_vec();
            }
        }
        if kappa == k {
            at_kappa = filter_k.mean().to_vec();
        }
        past.push(&sub_vec(&x, &open_loop_past));
        let remote_sched = propagate_mean(model, &at_kappa, kappa, k + m - kappa)?;
        sched.push(&sub_vec(&x, &remote_sched));
        closed.push(&sub_vec(&x, f.mean()));
    }
    let conclusive = cfg.rollouts >= MIN_CONCLUSIVE_ROLLOUTS;
    let mut checks = past.checks("open_loop_past", &predicted_past, conclusive);
    checks.extend(sched.checks("open_loop_scheduled", &predicted_sched, conclusive));
    checks.extend(closed.checks("closed_loop", &predicted_ii, conclusive));
    Ok(checks)
}

/// ET and PT with `M = 0` must take identical decisions on every shared
/// realization.
pub fn reduction_check(
    model: &dyn ModelProvider,
    prior: &Prior,
    cost: f64,
    mc: &MonteCarlo,
) -> Result<Check> {
    let specs = [
        TriggerSpec::new(TriggerKind::Event, CostSchedule::constant(cost)?),
        TriggerSpec::new(
            TriggerKind::Predictive { horizon: 0 },
            CostSchedule::constant(cost)?,
        ),
    ];
    let schedule = schedule_for(model, prior, &specs, mc.steps)?;
    let mut mismatches = 0u64;
    for run in 0..mc.runs {
        let traj = simulate_trajectory(model, prior, mc.steps, &mut mc.stream(run))?;
        let et = run_on_trajectory(model, prior, &specs[0], &traj, &schedule)?;
        let pt = run_on_trajectory(model, prior, &specs[1], &traj, &schedule)?;
        mismatches += u64::from(et.gammas() != pt.gammas());
    }
    Ok(Check {
        name: "et_equals_pt0".into(),
        predicted: 0.0,
        empirical: mismatches as f64,
        std_error: 0.0,
        z: if mismatches == 0 { 0.0 } else { f64::INFINITY },
        status: if mismatches == 0 {
            Status::Pass
        } else {
            Status::Fail
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LtiModel;

    #[test]
    fn statuses_order() {
        let checks = vec![
            z_check("a".into(), 0.0, 0.1, 1.0, true),
            z_check("b".into(), 0.0, 0.1, 1.0, false),
        ];
        assert_eq!(overall(&checks), Status::Inconclusive);
        let c = z_check("c".into(), 0.0, 5.0, 1.0, true);
        assert_eq!(c.status, Status::Fail);
        assert_eq!(overall(&[checks[0].clone(), c]), Status::Fail);
    }

    #[test]
    fn few_rollouts_are_inconclusive() {
        let cfg = CalibrationConfig {
            rollouts: 100,
            ..Default::default()
        };
        let checks = error_calibration(&LtiModel::example1(), &Prior::example(), &cfg).unwrap();
        assert_eq!(checks.len(), 6);
        assert!(checks.iter().all(|c| c.status == Status::Inconclusive));
    }
}
