//! SCC activation policies: tabular Q-learning (full or partial state) and
//! the All-CCs, Single-CC, and Reactive baselines, plus the reward.

mod qtable;

pub use qtable::QTable;
pub(crate) use qtable::check_shape;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::traffic::Buffer;

/// Joint activation decision over the SCCs. Bit `i` set means SCC `i` is
/// active; the PCC is always on and never encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    mask: u32,
    n_scc: u32,
}

impl Action {
    pub fn from_mask(mask: u32, n_scc: u32) -> Self {
        debug_assert!(n_scc < 32 && mask < (1 << n_scc));
        Self { mask, n_scc }
    }

    pub fn none(n_scc: u32) -> Self {
        Self::from_mask(0, n_scc)
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn n_scc(&self) -> u32 {
        self.n_scc
    }

    pub fn is_active(&self, scc: usize) -> bool {
        self.mask & (1 << scc) != 0
    }

    pub fn active_sccs(&self) -> u32 {
        self.mask.count_ones()
    }

    /// PCC plus active SCCs.
    pub fn active_ccs(&self) -> u32 {
        1 + self.active_sccs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ALL_CC")]
    AllCc,
    #[serde(rename = "SINGLE_CC")]
    SingleCc,
    #[serde(rename = "REACTIVE")]
    Reactive,
    #[serde(rename = "QL_FULL")]
    QlFull,
    #[serde(rename = "QL_PARTIAL")]
    QlPartial,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::AllCc,
        Method::SingleCc,
        Method::Reactive,
        Method::QlFull,
        Method::QlPartial,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::AllCc => "ALL_CC",
            Method::SingleCc => "SINGLE_CC",
            Method::Reactive => "REACTIVE",
            Method::QlFull => "QL_FULL",
            Method::QlPartial => "QL_PARTIAL",
        }
    }

    pub fn is_learning(&self) -> bool {
        matches!(self, Method::QlFull | Method::QlPartial)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    /// Multiplicative decay applied once per decision epoch.
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9,
            epsilon0: 0.3,
            epsilon_decay: 0.99,
            epsilon_min: 0.01,
        }
    }
}

impl LearningParams {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let err = |k: &str, m: &str| Err(ConfigError::new(format!("{prefix}{k}"), m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return err("alpha", "must lie in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return err("gamma", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return err("epsilon0", "must lie in [0, 1]");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return err("epsilon_decay", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_min) {
            return err("epsilon_min", "must lie in [0, 1]");
        }
        if self.epsilon_min > self.epsilon0 {
            return err("epsilon_min", "must not exceed epsilon0");
        }
        Ok(())
    }

    /// Exploration rate in force at decision epoch `epoch`.
    pub fn epsilon_at(&self, epoch: u64) -> f64 {
        let e = self.epsilon0 * self.epsilon_decay.powf(epoch as f64);
        e.max(self.epsilon_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub credit_per_useful_scc: f64,
    pub penalty_per_wasted_scc: f64,
    /// Fraction of an SCC's allocated capacity that must carry data for the
    /// activation to earn credit.
    pub utilization_threshold: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            credit_per_useful_scc: 1.0,
            penalty_per_wasted_scc: 1.0,
            utilization_threshold: 0.5,
        }
    }
}

impl RewardParams {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        for (k, v) in [
            ("credit_per_useful_scc", self.credit_per_useful_scc),
            ("penalty_per_wasted_scc", self.penalty_per_wasted_scc),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::new(format!("{prefix}{k}"), "must be finite and > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.utilization_threshold) {
            return Err(ConfigError::new(
                format!("{prefix}utilization_threshold"),
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Credits each active SCC whose allocated capacity was used at or above the
/// threshold and penalizes each one that was not.
pub fn compute_reward(
    action: Action,
    per_scc_served_bits: &[u64],
    per_scc_capacity_bits: &[u64],
    rp: &RewardParams,
) -> Result<f64> {
    let n = action.n_scc() as usize;
    if per_scc_served_bits.len() != n || per_scc_capacity_bits.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} per-SCC entries, got {} served and {} capacity",
            per_scc_served_bits.len(),
            per_scc_capacity_bits.len()
        )));
    }
    let mut reward = 0.0;
    for i in (0..n).filter(|&i| action.is_active(i)) {
        let served = per_scc_served_bits[i] as f64;
        let cap = per_scc_capacity_bits[i] as f64;
        if cap > 0.0 && served >= rp.utilization_threshold * cap {
            reward += rp.credit_per_useful_scc;
        } else {
            reward -= rp.penalty_per_wasted_scc;
        }
    }
    Ok(reward)
}

pub fn policy_all_cc(n_scc: u32) -> Action {
    Action::from_mask((1 << n_scc) - 1, n_scc)
}

pub fn policy_single_cc(n_scc: u32) -> Action {
    Action::none(n_scc)
}

/// Requests one SCC per extra PCC-period's worth of backlog, lowest indices
/// first. `pcc_capacity_bits` is what the PCC can carry in one slot.
pub fn policy_reactive(
    buffer: &Buffer,
    pcc_capacity_bits: u64,
    decision_period_slots: u64,
    n_scc: u32,
) -> Action {
    let per_period = pcc_capacity_bits.saturating_mul(decision_period_slots);
    let excess = buffer.pending_bits.saturating_sub(per_period);
    let wanted = if excess == 0 {
        0
    } else if per_period == 0 {
        u64::from(n_scc)
    } else {
        excess.div_ceil(per_period)
    };
    let k = wanted.min(u64::from(n_scc)) as u32;
    Action::from_mask((1u32 << k) - 1, n_scc)
}
