//! Steady-state analysis for time-invariant models.

use crate::error::{Error, Result};
use crate::estimation::{open_loop_cov, FilterState, GaussianBelief};
use crate::linalg::SymmetricPsd;
use crate::model::{LtiModel, ModelProvider};
use crate::triggering::rules::SelfTrigger;

pub const RICCATI_TOLERANCE: f64 = 1e-12;
pub const RICCATI_MAX_ITERATIONS: usize = 1_000_000;

/// Fixed point of the predict+update covariance map, by iteration from
/// `P = 0` until the Frobenius step falls below [`RICCATI_TOLERANCE`].
pub fn steady_state_posterior(model: &LtiModel) -> Result<SymmetricPsd> {
    let n = model.state_dim();
    let ny = model.measurement_dim();
    let mut state = FilterState {
        k: 0,
        posterior: GaussianBelief::new(vec![0.0; n], SymmetricPsd::zeros(n))?,
        prior: GaussianBelief::new(vec![0.0; n], SymmetricPsd::zeros(n))?,
        gain: crate::linalg::Matrix::zeros(n, ny),
    };
    let y = vec![0.0; ny];
    let mut last_step = f64::INFINITY;
    for _ in 0..RICCATI_MAX_ITERATIONS {
        let next = crate::estimation::kf_step(&state, &y, model)?;
        last_step = next
            .cov()
            .as_matrix()
            .sub(state.cov().as_matrix())?
            .frobenius_norm();
        // Keep k at 0: the model is time-invariant.
        state = FilterState { k: 0, ..next };
        if last_step < RICCATI_TOLERANCE {
            return Ok(state.posterior.cov);
        }
    }
    Err(Error::NoConvergence {
        iterations: RICCATI_MAX_ITERATIONS,
        last_step,
    })
}

/// `trace(V_o^M(P) - P)` for `M = 1, 2, ...`, starting from the steady
/// posterior `P`.
pub fn steady_state_gaps<'a>(
    model: &'a LtiModel,
    steady: &SymmetricPsd,
) -> impl Iterator<Item = Result<f64>> + 'a {
    let base = steady.trace();
    let mut cov = Some(steady.clone());
    std::iter::from_fn(move || {
        let cur = cov.take()?;
        match open_loop_cov(model, 0, &cur) {
            Ok(next) => {
                let gap = next.trace() - base;
                cov = Some(next);
                Some(Ok(gap))
            }
            Err(e) => Some(Err(e)),
        }
    })
}

/// Asymptotic self-trigger period: the smallest `M <= M_max` with
/// `trace(V_o^M(P) - P) >= C` at the steady posterior `P`.
pub fn steady_state_period(model: &LtiModel, cost: f64, max_horizon: usize) -> Result<SelfTrigger> {
    let steady = steady_state_posterior(model)?;
    period_from_steady(model, &steady, cost, max_horizon)
}

/// [`steady_state_period`] with a precomputed steady posterior.
pub fn period_from_steady(
    model: &LtiModel,
    steady: &SymmetricPsd,
    cost: f64,
    max_horizon: usize,
) -> Result<SelfTrigger> {
    if max_horizon == 0 {
        return Err(Error::InvalidArgument("M_max must be at least 1".into()));
    }
    if !(cost.is_finite() && cost >= 0.0) {
        return Err(Error::InvalidCost(cost));
    }
    for (i, gap) in steady_state_gaps(model, steady)
        .take(max_horizon)
        .enumerate()
    {
        if gap? >= cost {
            return Ok(SelfTrigger::After(i + 1));
        }
    }
    Ok(SelfTrigger::NoFiniteTrigger)
}
