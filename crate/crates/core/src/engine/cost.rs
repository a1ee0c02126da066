use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    /// One charge per scheduler step, however many tokens it carries.
    ConstantStep,
    /// `ceil(active_tokens / capacity)` charges per step.
    BatchCapacity { capacity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(flatten)]
    pub kind: CostKind,
    /// Abstract time units per charge.
    pub step_latency: f64,
}

impl CostModel {
    pub const CONSTANT: CostModel = CostModel {
        kind: CostKind::ConstantStep,
        step_latency: 1.0,
    };

    pub fn capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "batch capacity must be positive");
        CostModel {
            kind: CostKind::BatchCapacity { capacity },
            step_latency: 1.0,
        }
    }

    /// Units charged for a step in which `active_tokens` tokens were
    /// processed. Idle steps cost nothing.
    pub fn charge(&self, active_tokens: usize) -> f64 {
        if active_tokens == 0 {
            return 0.0;
        }
        let units = match self.kind {
            CostKind::ConstantStep => 1,
            CostKind::BatchCapacity { capacity } => active_tokens.div_ceil(capacity),
        };
        units as f64 * self.step_latency
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::CONSTANT
    }
}

impl FromStr for CostModel {
    type Err = String;

    /// `constant` or `capacity:C`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("constant") {
            return Ok(CostModel::CONSTANT);
        }
        if let Some(c) = s.strip_prefix("capacity:") {
            return match c.parse::<usize>() {
                Ok(c) if c > 0 => Ok(CostModel::capacity(c)),
                _ => Err(format!("invalid capacity {c:?}: expected a positive integer")),
            };
        }
        Err(format!("unknown cost model {s:?} (expected constant or capacity:C)"))
    }
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CostKind::ConstantStep => f.write_str("constant"),
            CostKind::BatchCapacity { capacity } => write!(f, "capacity:{capacity}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_charge() {
        assert_eq!("constant".parse::<CostModel>().unwrap(), CostModel::CONSTANT);
        let c: CostModel = "capacity:4".parse().unwrap();
        assert_eq!(c.charge(0), 0.0);
        assert_eq!(c.charge(4), 1.0);
        assert_eq!(c.charge(5), 2.0);
        assert_eq!(CostModel::CONSTANT.charge(100), 1.0);
        assert!("capacity:0".parse::<CostModel>().is_err());
        assert!("linear".parse::<CostModel>().is_err());
        assert_eq!(c.to_string(), "capacity:4");
    }
}
