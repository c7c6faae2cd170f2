//! Local full-information Kalman filter and the remote estimator it feeds.

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix, SymmetricPsd};
use crate::model::{propagate_mean, ModelProvider, Prior};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub cov: SymmetricPsd,
}

impl GaussianBelief {
    pub fn new(mean: Vec<f64>, cov: SymmetricPsd) -> Result<Self> {
        if cov.dim() != mean.len() {
            return Err(Error::DimensionMismatch {
                op: "belief",
                lhs: (mean.len(), 1),
                rhs: (cov.dim(), cov.dim()),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Filter state after the measurement update at time `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub k: usize,
    /// `(x^F_k, P^F_k)`
    pub posterior: GaussianBelief,
    /// `(x^F_{k|k-1}, P^F_{k|k-1})`; equals the posterior at `k = 0`.
    pub prior: GaussianBelief,
    /// `L_k`; empty at `k = 0`.
    pub gain: Matrix,
}

impl FilterState {
    pub fn initial(prior: &Prior) -> Self {
        let belief = GaussianBelief {
            mean: prior.mean.clone(),
            cov: prior.cov.clone(),
        };
        Self {
            k: 0,
            posterior: belief.clone(),
            prior: belief,
            gain: Matrix::zeros(prior.dim(), 0),
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.posterior.mean
    }

    pub fn cov(&self) -> &SymmetricPsd {
        &self.posterior.cov
    }
}

/// `V_o^k(P) = A_k P A_k^T + Q_k`
pub fn open_loop_cov(
    model: &dyn ModelProvider,
    k: usize,
    p: &SymmetricPsd,
) -> Result<SymmetricPsd> {
    let a = model.transition(k);
    let q = model.process_noise(k);
    if p.dim() == 1 {
        let a = a.get(0, 0);
        return SymmetricPsd::scalar(a * p.get(0, 0) * a + q.get(0, 0));
    }
    a.multiply(p.as_matrix())?
        .multiply(&a.transpose())?
        .add(q.as_matrix())?
        .symmetrize()
}

/// `V_o^{from+steps-1} o ... o V_o^{from} (P)`; `steps = 0` returns `P`.
pub fn open_loop_cov_steps(
    model: &dyn ModelProvider,
    from: usize,
    steps: usize,
    p: &SymmetricPsd,
) -> Result<SymmetricPsd> {
    let mut cov = p.clone();
    for k in from..from + steps {
        cov = open_loop_cov(model, k, &cov)?;
    }
    Ok(cov)
}

/// Time update from `k-1` to `k`.
pub fn kf_predict(state: &FilterState, model: &dyn ModelProvider) -> Result<GaussianBelief> {
    let k = state.k;
    let mean = model.transition(k).mul_vec(state.mean())?;
    let cov = open_loop_cov(model, k, state.cov())?;
    Ok(GaussianBelief { mean, cov })
}

struct Update {
    mean: Vec<f64>,
    cov: SymmetricPsd,
    gain: Matrix,
}

fn measurement_update(
    prior: &GaussianBelief,
    y: Option<&[f64]>,
    model: &dyn ModelProvider,
    k: usize,
) -> Result<Update> {
    let h = model.observation(k);
    let r = model.measurement_noise(k);
    let n = prior.dim();
    if let Some(y) = y {
        if y.len() != h.rows() {
            return Err(Error::DimensionMismatch {
                op: "kf_update",
                lhs: (y.len(), 1),
                rhs: (h.rows(), 1),
            });
        }
    }
    let p = prior.cov.as_matrix();
    if p.as_slice().iter().all(|v| *v == 0.0) {
        // A known state gains nothing from a measurement, even when the
        // innovation covariance is singular.
        return Ok(Update {
            mean: prior.mean.clone(),
            cov: prior.cov.clone(),
            gain: Matrix::zeros(n, h.rows()),
        });
    }
    if n == 1 && h.rows() == 1 {
        let (hh, pp, rr) = (h.get(0, 0), p.get(0, 0), r.get(0, 0));
        let s = hh * pp * hh + rr;
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::SingularInnovation { rcond: 0.0 });
        }
        let l = pp * hh / s;
        let mean = match y {
            Some(y) => vec![prior.mean[0] + l * (y[0] - hh * prior.mean[0])],
            None => prior.mean.clone(),
        };
        let cov = SymmetricPsd::scalar((1.0 - l * hh) * pp)?;
        return Ok(Update {
            mean,
            cov,
            gain: Matrix::scalar(l),
        });
    }
    let ph_t = p.multiply(&h.transpose())?;
    let s = h.multiply(&ph_t)?.add(r.as_matrix())?;
    // S L^T = H P (P symmetric), so L = (S^{-1} H P)^T.
    let gain = solve_spd(&s, &ph_t.transpose())?.transpose();
    let mean = match y {
        Some(y) => {
            let hx = h.mul_vec(&prior.mean)?;
            let innovation: Vec<f64> = y.iter().zip(&hx).map(|(a, b)| a - b).collect();
            let correction = gain.mul_vec(&innovation)?;
            prior
                .mean
                .iter()
                .zip(correction)
                .map(|(a, b)| a + b)
                .collect()
        }
        None => prior.mean.clone(),
    };
    let cov = Matrix::identity(n)
        .sub(&gain.multiply(&h)?)?
        .multiply(p)?
        .symmetrize()?;
    Ok(Update { mean, cov, gain })
}

/// Measurement update at time `k` of a prior produced by [`kf_predict`].
pub fn kf_update(
    prior: &GaussianBelief,
    y: &[f64],
    model: &dyn ModelProvider,
    k: usize,
) -> Result<FilterState> {
    let u = measurement_update(prior, Some(y), model, k)?;
    Ok(FilterState {
        k,
        posterior: GaussianBelief {
            mean: u.mean,
            cov: u.cov,
        },
        prior: prior.clone(),
        gain: u.gain,
    })
}

/// Predict and update in one step.
pub fn kf_step(state: &FilterState, y: &[f64], model: &dyn ModelProvider) -> Result<FilterState> {
    let prior = kf_predict(state, model)?;
    kf_update(&prior, y, model, state.k + 1)
}

/// `f(x_{k+M} | Y_k)` by open-loop iteration.
pub fn predict_m_steps(
    state: &FilterState,
    model: &dyn ModelProvider,
    m: usize,
) -> Result<GaussianBelief> {
    Ok(GaussianBelief {
        mean: propagate_mean(model, state.mean(), state.k, m)?,
        cov: open_loop_cov_steps(model, state.k, m, state.cov())?,
    })
}

/// Measurement-free covariance recursion of the filter.
///
/// The KF covariances do not depend on the measurements, so this table is
/// shared by every run of a scenario and by the offline parts of the
/// triggers.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceSchedule {
    /// `P^F_{k|k-1}`, index `k` (entry 0 holds `X_0`).
    priors: Vec<SymmetricPsd>,
    /// `P^F_k`, index `k` (entry 0 holds `X_0`).
    posteriors: Vec<SymmetricPsd>,
}

impl VarianceSchedule {
    pub fn horizon(&self) -> usize {
        self.posteriors.len() - 1
    }

    fn check(&self, k: usize) -> Result<()> {
        if k > self.horizon() {
            Err(Error::ScheduleTooShort {
                covered: self.horizon(),
                requested: k,
            })
        } else {
            Ok(())
        }
    }

    /// `P^F_k`
    pub fn posterior(&self, k: usize) -> Result<&SymmetricPsd> {
        self.check(k)?;
        Ok(&self.posteriors[k])
    }

    /// `P^F_{k|k-1}`
    pub fn prior(&self, k: usize) -> Result<&SymmetricPsd> {
        self.check(k)?;
        Ok(&self.priors[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SymmetricPsd, &SymmetricPsd)> {
        self.priors.iter().zip(&self.posteriors).skip(1)
    }
}

pub fn variance_schedule(
    model: &dyn ModelProvider,
    prior: &Prior,
    steps: usize,
) -> Result<VarianceSchedule> {
    if steps == 0 {
        return Err(Error::EmptyHorizon);
    }
    let mut priors = Vec::with_capacity(steps + 1);
    let mut posteriors = Vec::with_capacity(steps + 1);
    priors.push(prior.cov.clone());
    posteriors.push(prior.cov.clone());
    let mut belief = GaussianBelief {
        mean: prior.mean.clone(),
        cov: prior.cov.clone(),
    };
    for k in 1..=steps {
        let predicted = GaussianBelief {
            mean: belief.mean.clone(),
            cov: open_loop_cov(model, k - 1, &belief.cov)?,
        };
        let u = measurement_update(&predicted, None, model, k)?;
        priors.push(predicted.cov);
        posteriors.push(u.cov.clone());
        belief.cov = u.cov;
    }
    Ok(VarianceSchedule { priors, posteriors })
}

/// Remote estimator at time `k`: `x_k` and the last time `l_k` it received
/// the sensor's estimate (`0` before any transmission, meaning the prior).
#[derive(Clone, Debug, PartialEq)]
pub struct RemoteState {
    pub k: usize,
    pub estimate: Vec<f64>,
    pub last_transmit: usize,
}

impl RemoteState {
    pub fn initial(prior: &Prior) -> Self {
        Self {
            k: 0,
            estimate: prior.mean.clone(),
            last_transmit: 0,
        }
    }

    /// `A_k x_k`, the estimate the remote would hold at `k + 1` without an
    /// update.
    pub fn propagated(&self, model: &dyn ModelProvider) -> Result<Vec<f64>> {
        model.transition(self.k).mul_vec(&self.estimate)
    }
}

/// Advances the remote from `k-1` to `k`. With `gamma = false` the estimate
/// is propagated open loop; with `gamma = true` it is replaced by the
/// transmitted local posterior mean.
pub fn remote_step(
    state: &RemoteState,
    gamma: bool,
    payload: Option<&[f64]>,
    model: &dyn ModelProvider,
) -> Result<RemoteState> {
    let k = state.k + 1;
    match (gamma, payload) {
        (false, None) => Ok(RemoteState {
            k,
            estimate: state.propagated(model)?,
            last_transmit: state.last_transmit,
        }),
        (true, Some(x)) => {
            if x.len() != state.estimate.len() {
                return Err(Error::DimensionMismatch {
                    op: "remote_step",
                    lhs: (x.len(), 1),
                    rhs: (state.estimate.len(), 1),
                });
            }
            Ok(RemoteState {
                k,
                estimate: x.to_vec(),
                last_transmit: k,
            })
        }
        (gamma, payload) => Err(Error::PayloadMismatch {
            gamma,
            payload_present: payload.is_some(),
        }),
    }
}
