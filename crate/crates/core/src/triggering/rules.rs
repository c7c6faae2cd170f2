//! Event, predictive and self triggers for the squared-error cost.
//!
//! Every rule fires on `statistic >= threshold`; ties trigger.

use crate::error::{Error, Result};
use crate::estimation::{open_loop_cov, FilterState, RemoteState, VarianceSchedule};
use crate::model::ModelProvider;
use crate::triggering::signals::{
    mean_signal, scheduled_variance_signal, variance_signal, TriggerSignals,
};
use crate::triggering::{CostSchedule, DecisionLedger};

/// Instantaneous trigger: `gamma_k = 1` iff `|x^F_k - A_{k-1} x_{k-1}|^2 >= C_k`.
/// `remote` is the remote state at `k - 1`.
pub fn event_trigger(
    k: usize,
    filter: &FilterState,
    remote: &RemoteState,
    model: &dyn ModelProvider,
    cost: &CostSchedule,
) -> Result<TriggerSignals> {
    let mean = mean_signal(k, 0, filter, remote, model)?;
    Ok(TriggerSignals {
        mean,
        var: 0.0,
        total: mean,
        threshold: cost.at(k)?,
    })
}

/// Decides `gamma_{k+M}` at time `k` and commits it to the ledger.
///
/// The ledger must be committed exactly through `k + M - 1`, and `remote`
/// is the remote state at `k - 1` (before `gamma_k` is executed). When the
/// last scheduled trigger `kappa` is in the past the statistic is
/// `mean + var`; otherwise it is the data-free gap
/// `trace(P^F_{kappa+D|kappa} - P^F_{kappa+D})`, `D = k + M - kappa`.
#[allow(clippy::too_many_arguments)]
pub fn predictive_trigger(
    k: usize,
    m: usize,
    filter: &FilterState,
    remote: &RemoteState,
    ledger: &mut DecisionLedger,
    model: &dyn ModelProvider,
    cost: &CostSchedule,
    schedule: &VarianceSchedule,
) -> Result<TriggerSignals> {
    let target = k + m;
    if ledger.frontier() + 1 != target {
        return Err(Error::LedgerGap {
            frontier: ledger.frontier(),
            required: target - 1,
        });
    }
    let threshold = cost.at(target)?;
    let signals = match ledger.last_scheduled(target - 1) {
        Some(kappa) if k <= kappa => {
            let var = scheduled_variance_signal(kappa, target - kappa, model, schedule)?;
            TriggerSignals {
                mean: 0.0,
                var,
                total: var,
                threshold,
            }
        }
        _ => {
            let mean = mean_signal(k, m, filter, remote, model)?;
            let var = variance_signal(k, m, model, schedule, filter.cov())?;
            TriggerSignals {
                mean,
                var,
                total: mean + var,
                threshold,
            }
        }
    };
    ledger.commit(target, signals.fires())?;
    Ok(signals)
}

/// Commits `gamma_t` for a target that has to be decided before any
/// measurement is available (`2 <= t <= M` after the forced `gamma_1 = 1`).
/// Only the data-free branch can be evaluated there; `kappa` is the last
/// committed trigger.
pub fn warm_up_decision(
    t: usize,
    ledger: &mut DecisionLedger,
    model: &dyn ModelProvider,
    cost: &CostSchedule,
    schedule: &VarianceSchedule,
) -> Result<TriggerSignals> {
    if ledger.frontier() + 1 != t {
        return Err(Error::LedgerGap {
            frontier: ledger.frontier(),
            required: t - 1,
        });
    }
    let kappa = ledger
        .last_scheduled(t - 1)
        .ok_or_else(|| Error::InvalidArgument("warm-up requires the initial trigger".into()))?;
    let var = scheduled_variance_signal(kappa, t - kappa, model, schedule)?;
    let signals = TriggerSignals {
        mean: 0.0,
        var,
        total: var,
        threshold: cost.at(t)?,
    };
    ledger.commit(t, signals.fires())?;
    Ok(signals)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelfTrigger {
    /// Next transmission `M` steps after the current one.
    After(usize),
    /// No `M <= M_max` satisfies the rule.
    NoFiniteTrigger,
}

impl SelfTrigger {
    pub fn steps(self) -> Option<usize> {
        match self {
            Self::After(m) => Some(m),
            Self::NoFiniteTrigger => None,
        }
    }
}

/// At a transmit instant `l`, the smallest `M >= 1` with
/// `trace(P^F_{l+M|l} - P^F_{l+M}) >= C_{l+M}`. Only variances enter, so
/// the result is independent of the measurements.
pub fn self_trigger(
    last_transmit: usize,
    model: &dyn ModelProvider,
    schedule: &VarianceSchedule,
    cost: &CostSchedule,
    max_horizon: usize,
) -> Result<SelfTrigger> {
    if max_horizon == 0 {
        return Err(Error::InvalidArgument("M_max must be at least 1".into()));
    }
    let mut open_loop = schedule.posterior(last_transmit)?.clone();
    for m in 1..=max_horizon {
        let t = last_transmit + m;
        open_loop = open_loop_cov(model, t - 1, &open_loop)?;
        let gap = open_loop.trace() - schedule.posterior(t)?.trace();
        if gap >= cost.at(t)? {
            return Ok(SelfTrigger::After(m));
        }
    }
    Ok(SelfTrigger::NoFiniteTrigger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{variance_schedule, GaussianBelief};
    use crate::linalg::{Matrix, SymmetricPsd};
    use crate::model::{LtiModel, Prior};

    fn filter_at(k: usize, mean: f64, var: f64) -> FilterState {
        let b = GaussianBelief::new(vec![mean], SymmetricPsd::scalar(var).unwrap()).unwrap();
        FilterState {
            k,
            posterior: b.clone(),
            prior: b,
            gain: Matrix::scalar(0.0),
        }
    }

    fn remote_at(k: usize, propagated: f64) -> RemoteState {
        RemoteState {
            k,
            estimate: vec![propagated / 0.98],
            last_transmit: 1,
        }
    }

    fn c(v: f64) -> CostSchedule {
        CostSchedule::constant(v).unwrap()
    }

    /// Scalar gap oracle: `gap(M) = (q/(1-a^2) - P)(1 - a^{2M})`.
    fn gap(m: u32) -> f64 {
        let (a2, q) = (0.9604f64, 0.1f64);
        let (qa, qb, qc) = (a2, 0.2 - 0.1 * a2, -0.01);
        let p = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        (q / (1.0 - a2) - p) * (1.0 - a2.powi(m as i32))
    }

    #[test]
    fn gap_oracle_values() {
        assert!((gap(1) - 0.097569).abs() < 1e-6);
        assert!((gap(2) - 0.191275).abs() < 1e-6);
        assert!((gap(3) - 0.281270).abs() < 1e-6);
        assert!((gap(6) - 0.5304).abs() < 1e-4);
        assert!((gap(7) - 0.6070).abs() < 1e-4);
    }

    #[test]
    fn event_trigger_cases() {
        let model = LtiModel::example1();
        let s = event_trigger(
            5,
            &filter_at(5, 1.2, 0.1),
            &remote_at(4, 1.0),
            &model,
            &c(0.03),
        )
        .unwrap();
        assert!((s.total - 0.04).abs() < 1e-12);
        assert!(s.fires());
        let s = event_trigger(
            5,
            &filter_at(5, 1.0, 0.1),
            &remote_at(4, 1.0),
            &model,
            &c(0.0),
        )
        .unwrap();
        assert!(s.total.abs() < 1e-15);
        let exact = RemoteState {
            k: 4,
            estimate: vec![1.0],
            last_transmit: 4,
        };
        let s = event_trigger(5, &filter_at(5, 0.98, 0.1), &exact, &model, &c(0.0)).unwrap();
        assert_eq!(s.total, 0.0);
        assert!(s.fires(), "ties fire");
        let s = event_trigger(
            5,
            &filter_at(5, 50.0, 0.1),
            &remote_at(4, 1.0),
            &model,
            &c(1e9),
        )
        .unwrap();
        assert!(!s.fires());
    }

    #[test]
    fn predictive_trigger_zero_horizon_matches_event_trigger() {
        let model = LtiModel::example1();
        let sched = variance_schedule(&model, &Prior::example(), 20).unwrap();
        for (xf, xr, cost) in [
            (1.2, 1.0, 0.03),
            (1.0, 1.1, 0.02),
            (0.5, 0.5, 0.0),
            (0.0, 3.0, 9.0),
        ] {
            let mut ledger = DecisionLedger::new();
            for t in 1..=9 {
                ledger.commit(t, t == 1).unwrap();
            }
            let f = filter_at(10, xf, sched.posterior(10).unwrap().get(0, 0));
            let r = remote_at(9, xr);
            let pt =
                predictive_trigger(10, 0, &f, &r, &mut ledger, &model, &c(cost), &sched).unwrap();
            let et = event_trigger(10, &f, &r, &model, &c(cost)).unwrap();
            assert_eq!(pt.fires(), et.fires());
            assert_eq!(pt.total, et.total);
            assert_eq!(ledger.decision(10), Some(et.fires()));
        }
    }

    #[test]
    fn predictive_trigger_scheduled_branch() {
        let model = LtiModel::example1();
        let sched = variance_schedule(&model, &Prior::example(), 400).unwrap();
        let k = 300;
        let mut ledger = DecisionLedger::new();
        for t in 1..=k {
            ledger.commit(t, t == 1 || t == k).unwrap();
        }
        // kappa = k = (k+1) - 1: Delta = 1.
        let f = filter_at(k - 1, 5.0, sched.posterior(k - 1).unwrap().get(0, 0));
        let s = predictive_trigger(
            k - 1,
            2,
            &f,
            &remote_at(k - 2, 0.0),
            &mut ledger,
            &model,
            &c(0.25),
            &sched,
        )
        .unwrap();
        assert_eq!(s.mean, 0.0, "data must not enter");
        assert!((s.var - gap(1)).abs() < 1e-6);
        assert_eq!(ledger.decision(k + 1), Some(false));
    }

    #[test]
    fn predictive_trigger_online_branch() {
        let model = LtiModel::example1();
        let sched = variance_schedule(&model, &Prior::example(), 400).unwrap();
        let k = 300;
        let mut ledger = DecisionLedger::new();
        for t in 1..=k + 1 {
            ledger.commit(t, t == 1).unwrap();
        }
        // mean signal 0.09: bias b with (0.9604 b)^2 = 0.09
        let b = 0.09f64.sqrt() / 0.9604;
        let f = filter_at(k, 1.0 + b, sched.posterior(k).unwrap().get(0, 0));
        let s = predictive_trigger(
            k,
            2,
            &f,
            &remote_at(k - 1, 1.0),
            &mut ledger,
            &model,
            &c(0.25),
            &sched,
        )
        .unwrap();
        assert!((s.mean - 0.09).abs() < 1e-12);
        assert!((s.var - 0.191275).abs() < 1e-6);
        assert!(s.fires());
        assert_eq!(ledger.decision(k + 2), Some(true));
    }

    #[test]
    fn predictive_trigger_rejects_gaps() {
        let model = LtiModel::example1();
        let sched = variance_schedule(&model, &Prior::example(), 20).unwrap();
        let mut ledger = DecisionLedger::new();
        ledger.commit(1, true).unwrap();
        let f = filter_at(3, 1.0, 0.1);
        assert!(matches!(
            predictive_trigger(
                3,
                2,
                &f,
                &remote_at(2, 1.0),
                &mut ledger,
                &model,
                &c(0.1),
                &sched
            ),
            Err(Error::LedgerGap { .. })
        ));
    }

    #[test]
    fn self_trigger_cases() {
        let model = LtiModel::example1();
        let sched = variance_schedule(&model, &Prior::example(), 10_300).unwrap();
        assert_eq!(
            self_trigger(200, &model, &sched, &c(0.0), 100).unwrap(),
            SelfTrigger::After(1)
        );
        assert_eq!(
            self_trigger(200, &model, &sched, &c(0.6), 100).unwrap(),
            SelfTrigger::After(7)
        );
        assert_eq!(
            self_trigger(200, &model, &sched, &c(3.0), 10_000).unwrap(),
            SelfTrigger::NoFiniteTrigger
        );
        assert!(self_trigger(200, &model, &sched, &c(0.6), 0).is_err());
        assert!(matches!(
            self_trigger(10_299, &model, &sched, &c(0.6), 100),
            Err(Error::ScheduleTooShort { .. })
        ));
    }

    #[test]
    fn warm_up_uses_running_kappa() {
        let model = LtiModel::example1();
        let sched = variance_schedule(&model, &Prior::example(), 20).unwrap();
        let mut ledger = DecisionLedger::new();
        ledger.commit(1, true).unwrap();
        let s = warm_up_decision(2, &mut ledger, &model, &c(0.0), &sched).unwrap();
        assert!(s.fires());
        let s = warm_up_decision(3, &mut ledger, &model, &c(0.0), &sched).unwrap();
        // kappa = 2 now, so Delta = 1
        let expected = scheduled_variance_signal(2, 1, &model, &sched).unwrap();
        assert_eq!(s.var, expected);
    }
}
