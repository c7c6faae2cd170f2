//! Triggering decisions for remote estimation.
//!
//! A trigger decides whether the sensor transmits its local estimate:
//!
//! * event trigger (ET): decides at `k` about `k`, from current data;
//! * predictive trigger (PT): decides at `k` about `k + M` for fixed `M`;
//! * self trigger (ST): at a transmit instant computes the gap to the next.
//!
//! All three compare an expected estimation cost against the
//! communication cost `C`.

mod cost;
mod ledger;
mod rules;
mod signals;
mod steady;

pub use cost::CostSchedule;
pub use ledger::DecisionLedger;
pub use rules::{event_trigger, predictive_trigger, self_trigger, warm_up_decision, SelfTrigger};
pub use signals::{
    error_i_distribution, error_ii_distribution, mean_signal, scheduled_variance_signal,
    variance_signal, TriggerSignals,
};
pub use steady::{
    period_from_steady, steady_state_gaps, steady_state_period, steady_state_posterior,
    RICCATI_MAX_ITERATIONS, RICCATI_TOLERANCE,
};

use std::fmt;

/// Default cap on the self-trigger search.
pub const DEFAULT_MAX_HORIZON: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TriggerKind {
    Event,
    Predictive { horizon: usize },
    SelfTrigger,
}

impl TriggerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Event => "et",
            Self::Predictive { .. } => "pt",
            Self::SelfTrigger => "st",
        }
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Predictive { horizon } => write!(f, "pt(M={horizon})"),
            other => f.write_str(other.name()),
        }
    }
}

/// How the first steps are handled before triggers have data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WarmUp {
    /// `gamma_1 = 1` for every trigger; PT targets `2..=M` are decided
    /// with the data-free branch.
    #[default]
    ForcedInitialTransmit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriggerSpec {
    pub kind: TriggerKind,
    pub cost: CostSchedule,
    /// Self-trigger search cap `M_max`.
    pub max_horizon: usize,
    pub warm_up: WarmUp,
}

impl TriggerSpec {
    pub fn new(kind: TriggerKind, cost: CostSchedule) -> Self {
        Self {
            kind,
            cost,
            max_horizon: DEFAULT_MAX_HORIZON,
            warm_up: WarmUp::default(),
        }
    }

    pub fn with_max_horizon(mut self, max_horizon: usize) -> Self {
        self.max_horizon = max_horizon;
        self
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.max_horizon == 0 {
            return Err(crate::Error::InvalidArgument(
                "M_max must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
