//! Predicted error distributions and the two trigger signals built from
//! them.
//!
//! For the squared-error cost `E = |e_I|^2 - |e_II|^2` the expected cost
//! splits into a data-dependent bias term (`mean`) and a data-free
//! covariance gap (`var`).

use crate::error::{Error, Result};
use crate::estimation::{
    open_loop_cov_steps, FilterState, GaussianBelief, RemoteState, VarianceSchedule,
};
use crate::linalg::{squared_norm, sub_vec, SymmetricPsd, PSD_TOLERANCE};
use crate::model::{propagate_mean, ModelProvider};
use crate::triggering::DecisionLedger;

/// Signals behind one triggering decision.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TriggerSignals {
    /// Squared norm of the predicted bias of the open-loop error.
    pub mean: f64,
    /// Trace gap between open-loop and closed-loop error covariances.
    pub var: f64,
    /// The statistic compared against the threshold.
    pub total: f64,
    pub threshold: f64,
}

impl TriggerSignals {
    pub fn fires(&self) -> bool {
        self.total >= self.threshold
    }
}

fn check_remote(k: usize, remote: &RemoteState) -> Result<()> {
    if k == 0 || remote.k + 1 != k {
        return Err(Error::InvalidArgument(format!(
            "signals at k = {k} need the remote state at k - 1, got {}",
            remote.k
        )));
    }
    Ok(())
}

fn check_filter(k: usize, filter: &FilterState) -> Result<()> {
    if filter.k != k {
        return Err(Error::InvalidArgument(format!(
            "signals at k = {k} need the filter at k, got {}",
            filter.k
        )));
    }
    Ok(())
}

/// `Phi_{(k+M-1):k} (x^F_k - A_{k-1} x_{k-1})`: the predicted bias of the
/// open-loop error, with `remote` the remote state at `k - 1`.
fn predicted_bias(
    k: usize,
    m: usize,
    filter: &FilterState,
    remote: &RemoteState,
    model: &dyn ModelProvider,
) -> Result<Vec<f64>> {
    check_filter(k, filter)?;
    check_remote(k, remote)?;
    let open_loop = remote.propagated(model)?;
    propagate_mean(model, &sub_vec(filter.mean(), &open_loop), k, m)
}

/// `|Phi_{(k+M-1):k} (x^F_k - A_{k-1} x_{k-1})|^2`, `remote` at `k - 1`.
/// With `M = 0` this is the event-trigger statistic.
pub fn mean_signal(
    k: usize,
    m: usize,
    filter: &FilterState,
    remote: &RemoteState,
    model: &dyn ModelProvider,
) -> Result<f64> {
    Ok(squared_norm(&predicted_bias(k, m, filter, remote, model)?))
}

fn trace_gap(open_loop: &SymmetricPsd, closed_loop: &SymmetricPsd) -> Result<f64> {
    let gap = open_loop.trace() - closed_loop.trace();
    if gap >= 0.0 {
        Ok(gap)
    } else if gap >= -PSD_TOLERANCE * open_loop.trace().abs().max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeVarianceSignal { value: gap })
    }
}

/// `trace(P^F_{k+M|k} - P^F_{k+M})`, where `P^F_{k+M|k}` is the `M`-step
/// open-loop propagation of `posterior_k = P^F_k`.
pub fn variance_signal(
    k: usize,
    m: usize,
    model: &dyn ModelProvider,
    schedule: &VarianceSchedule,
    posterior_k: &SymmetricPsd,
) -> Result<f64> {
    let future = schedule.posterior(k + m)?;
    let open_loop = open_loop_cov_steps(model, k, m, posterior_k)?;
    trace_gap(&open_loop, future)
}

/// `trace(P^F_{from+steps|from} - P^F_{from+steps})` with `P^F_from` taken
/// from the schedule. Independent of any measurement.
pub fn scheduled_variance_signal(
    from: usize,
    steps: usize,
    model: &dyn ModelProvider,
    schedule: &VarianceSchedule,
) -> Result<f64> {
    variance_signal(from, steps, model, schedule, schedule.posterior(from)?)
}

/// `f(e^I_{k+M} | Y_k)`.
///
/// `remote` is the remote state at `k - 1`; `ledger` must be committed
/// through `k + M - 1`. If the last scheduled trigger `kappa` lies in the
/// past the error is biased and has the `M`-step open-loop covariance of
/// `P^F_k`; otherwise it is zero-mean with the open-loop covariance
/// propagated from the reset at `kappa`.
#[allow(clippy::too_many_arguments)]
pub fn error_i_distribution(
    k: usize,
    m: usize,
    filter: &FilterState,
    remote: &RemoteState,
    ledger: &DecisionLedger,
    model: &dyn ModelProvider,
    schedule: &VarianceSchedule,
) -> Result<GaussianBelief> {
    let needed = k + m - 1;
    if ledger.frontier() < needed {
        return Err(Error::LedgerGap {
            frontier: ledger.frontier(),
            required: needed,
        });
    }
    match ledger.last_scheduled(needed) {
        Some(kappa) if k <= kappa => {
            let delta = k + m - kappa;
            let cov = open_loop_cov_steps(model, kappa, delta, schedule.posterior(kappa)?)?;
            Ok(GaussianBelief {
                mean: vec![0.0; model.state_dim()],
                cov,
            })
        }
        _ => Ok(GaussianBelief {
            mean: predicted_bias(k, m, filter, remote, model)?,
            cov: open_loop_cov_steps(model, k, m, filter.cov())?,
        }),
    }
}

/// `f(e^II_{k+M} | Y_k) = N(0, P^F_{k+M})`.
pub fn error_ii_distribution(
    k: usize,
    m: usize,
    schedule: &VarianceSchedule,
) -> Result<GaussianBelief> {
    let cov = schedule.posterior(k + m)?.clone();
    Ok(GaussianBelief {
        mean: vec![0.0; cov.dim()],
        cov,
    })
}
