use crate::error::{Error, Result};

/// Communication cost `C_k`, the threshold every trigger compares against.
#[derive(Clone, Debug, PartialEq)]
pub enum CostSchedule {
    Constant(f64),
    /// `table[k - 1]` is `C_k`.
    Table(Vec<f64>),
}

impl CostSchedule {
    pub fn constant(c: f64) -> Result<Self> {
        check(c)?;
        Ok(Self::Constant(c))
    }

    pub fn table(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidArgument("empty cost table".into()));
        }
        for c in &costs {
            check(*c)?;
        }
        Ok(Self::Table(costs))
    }

    pub fn at(&self, k: usize) -> Result<f64> {
        match self {
            Self::Constant(c) => Ok(*c),
            Self::Table(t) => k
                .checked_sub(1)
                .and_then(|i| t.get(i))
                .copied()
                .ok_or(Error::CostOutOfRange { k, len: t.len() }),
        }
    }

    /// Last time index with a defined cost, if bounded.
    pub fn covered(&self) -> Option<usize> {
        match self {
            Self::Constant(_) => None,
            Self::Table(t) => Some(t.len()),
        }
    }
}

fn check(c: f64) -> Result<()> {
    if c.is_finite() && c >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidCost(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        let t = CostSchedule::table(vec![0.1, 0.2]).unwrap();
        assert_eq!(t.at(1).unwrap(), 0.1);
        assert_eq!(t.at(2).unwrap(), 0.2);
        assert!(matches!(
            t.at(3),
            Err(Error::CostOutOfRange { k: 3, len: 2 })
        ));
        assert!(t.at(0).is_err());
        assert_eq!(
            CostSchedule::constant(0.6).unwrap().at(1_000_000).unwrap(),
            0.6
        );
    }

    #[test]
    fn rejects_bad_costs() {
        assert!(CostSchedule::constant(-0.1).is_err());
        assert!(CostSchedule::constant(f64::NAN).is_err());
        assert!(CostSchedule::table(vec![0.1, f64::INFINITY]).is_err());
        assert!(CostSchedule::table(vec![]).is_err());
    }
}
