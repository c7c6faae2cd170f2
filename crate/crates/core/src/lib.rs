//! Event-based remote state estimation of linear-Gaussian systems.
//!
//! A sensor runs a Kalman filter on every measurement and decides, through
//! a trigger, when to send its estimate to a remote estimator that
//! otherwise predicts open loop. This crate provides the filter, the remote
//! estimator, event / predictive / self triggers derived from an expected
//! squared-error cost, and a deterministic parallel Monte Carlo harness for
//! estimation-versus-communication studies.

pub mod calibration;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod triggering;

pub use error::{Error, Result};
pub use estimation::{FilterState, GaussianBelief, RemoteState, VarianceSchedule};
pub use harness::{MonteCarlo, RunMetrics, SimulationTrace, StepRecord, TradeoffPoint};
pub use linalg::{Matrix, SymmetricPsd};
pub use model::{FnModel, LtiModel, ModelProvider, Prior, Trajectory};
pub use rng::{Purpose, RngStream};
pub use triggering::{
    CostSchedule, DecisionLedger, SelfTrigger, TriggerKind, TriggerSignals, TriggerSpec,
};
