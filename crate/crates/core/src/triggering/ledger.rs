use crate::error::{Error, Result};

/// Committed triggering decisions `Gamma` for PT/ST bookkeeping.
///
/// Decisions are committed strictly in time order; the frontier is the
/// last time index with a committed decision. Execution trails the
/// frontier and tracks `l_k`, the last executed transmit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecisionLedger {
    /// `decisions[t - 1]` is `gamma_t`.
    decisions: Vec<bool>,
    last_transmit: usize,
    executed: usize,
}

impl DecisionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Last committed time index (`0` when empty).
    pub fn frontier(&self) -> usize {
        self.decisions.len()
    }

    pub fn commit(&mut self, t: usize, gamma: bool) -> Result<()> {
        if t != self.frontier() + 1 {
            return Err(Error::LedgerGap {
                frontier: self.frontier(),
                required: t.saturating_sub(1),
            });
        }
        self.decisions.push(gamma);
        Ok(())
    }

    pub fn decision(&self, t: usize) -> Option<bool> {
        t.checked_sub(1)
            .and_then(|i| self.decisions.get(i))
            .copied()
    }

    /// `kappa(Gamma, t) = max { s <= t : gamma_s = 1 }`.
    pub fn last_scheduled(&self, t: usize) -> Option<usize> {
        let upto = t.min(self.frontier());
        self.decisions[..upto]
            .iter()
            .rposition(|g| *g)
            .map(|i| i + 1)
    }

    /// Executes the committed decision for `k`, which must follow the
    /// previously executed step.
    pub fn execute(&mut self, k: usize) -> Result<bool> {
        if k != self.executed + 1 {
            return Err(Error::InvalidArgument(format!(
                "ledger executed through {}, cannot execute {k}",
                self.executed
            )));
        }
        let gamma = self.decision(k).ok_or(Error::LedgerGap {
            frontier: self.frontier(),
            required: k,
        })?;
        self.executed = k;
        if gamma {
            self.last_transmit = k;
        }
        Ok(gamma)
    }

    /// `l_k` for the last executed step (`0` before any transmit).
    pub fn last_transmit(&self) -> usize {
        self.last_transmit
    }

    pub fn executed(&self) -> usize {
        self.executed
    }

    pub fn decisions(&self) -> &[bool] {
        &self.decisions
    }
}
