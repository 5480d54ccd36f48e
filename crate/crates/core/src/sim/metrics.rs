//! Per-slot and per-epoch records of a run, the derived summary, and the
//! convergence and energy measures.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::Method;
use crate::error::{Error, Result};
use crate::traffic::TrafficClass;

/// One class's aggregate for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub slot: u64,
    pub class: TrafficClass,
    pub served_bits: u64,
    /// Sum of active CC counts over the class's UEs.
    pub active_ccs: u64,
    pub n_ues: u64,
    /// Active CC-slots accumulated by this class up to and including `slot`.
    pub active_cc_slots_cum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: u64,
    pub ue_id: usize,
    pub state_index: usize,
    pub action_mask: u32,
    pub reward: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub method: Method,
    pub seed: u64,
    pub n_ccs: usize,
    pub slot_duration_s: f64,
    pub decision_period_slots: u64,
    pub activation_delay_slots: u64,
    pub energy_per_active_cc_per_slot: f64,
    pub slot_rows: Vec<SlotRow>,
    pub epoch_rows: Vec<EpochRow>,
    /// Mean reward over UEs for each decision epoch whose evaluation window
    /// completed, indexed by epoch.
    pub epoch_rewards: Vec<f64>,
    pub ue_totals: Vec<UeTotals>,
}

/// Whole-run counters for one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeTotals {
    pub class: TrafficClass,
    pub served_bits: u64,
    /// Slots in which the UE had data waiting when the scheduler ran.
    pub busy_slots: u64,
}

impl UeTotals {
    /// Throughput while the UE had data to receive.
    pub fn user_throughput_bps(&self, slot_duration_s: f64) -> f64 {
        if self.busy_slots == 0 {
            0.0
        } else {
            self.served_bits as f64 / (self.busy_slots as f64 * slot_duration_s)
        }
    }
}

impl MetricsLog {
    fn rows_for(&self, class: TrafficClass) -> impl Iterator<Item = &SlotRow> {
        self.slot_rows.iter().filter(move |r| r.class == class)
    }

    pub fn mean_throughput_bps(&self, class: TrafficClass) -> f64 {
        let (sum, n) = self
            .rows_for(class)
            .fold((0u128, 0u64), |(s, n), r| (s + r.served_bits as u128, n + 1));
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64 / self.slot_duration_s
        }
    }

    /// Sum over the class's UEs of each UE's throughput while backlogged.
    pub fn sum_user_throughput_bps(&self, class: TrafficClass) -> f64 {
        self.ue_totals
            .iter()
            .filter(|u| u.class == class)
            .map(|u| u.user_throughput_bps(self.slot_duration_s))
            .sum()
    }

    pub fn total_throughput_bps(&self) -> f64 {
        TrafficClass::ALL.iter().map(|c| self.mean_throughput_bps(*c)).sum()
    }

    /// Mean active CCs per UE of `class` over slots `>= from_slot`.
    pub fn mean_active_ccs_from(&self, class: TrafficClass, from_slot: u64) -> Option<f64> {
        let (ccs, ues) = self
            .rows_for(class)
            .filter(|r| r.slot >= from_slot)
            .fold((0u64, 0u64), |(c, u), r| (c + r.active_ccs, u + r.n_ues));
        (ues > 0).then(|| ccs as f64 / ues as f64)
    }

    pub fn mean_active_ccs(&self, class: TrafficClass) -> Option<f64> {
        self.mean_active_ccs_from(class, 0)
    }

    /// Mean active CCs per UE over every UE in the cell.
    pub fn mean_active_ccs_all(&self) -> Option<f64> {
        let (ccs, ues) = self
            .slot_rows
            .iter()
            .fold((0u64, 0u64), |(c, u), r| (c + r.active_ccs, u + r.n_ues));
        (ues > 0).then(|| ccs as f64 / ues as f64)
    }

    pub fn active_cc_slots(&self) -> u64 {
        self.slot_rows.iter().map(|r| r.active_ccs).sum()
    }

    /// Reward averaged over the last tenth of the evaluated epochs.
    pub fn final_window_reward(&self) -> Option<f64> {
        let n = self.epoch_rewards.len();
        if n == 0 {
            return None;
        }
        let tail = (n / 10).max(1);
        Some(mean(&self.epoch_rewards[n - tail..]))
    }

    pub fn mean_epoch_reward(&self) -> Option<f64> {
        (!self.epoch_rewards.is_empty()).then(|| mean(&self.epoch_rewards))
    }

    /// Writes `slot,class,sum_throughput_bps,mean_active_ccs,energy_cum`.
    pub fn write_slot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "class", "sum_throughput_bps", "mean_active_ccs", "energy_cum"])?;
        for r in &self.slot_rows {
            let tput = r.served_bits as f64 / self.slot_duration_s;
            let mean_ccs = r.active_ccs as f64 / r.n_ues as f64;
            let energy = self.energy_per_active_cc_per_slot * r.active_cc_slots_cum as f64;
            w.write_record(&[
                r.slot.to_string(),
                r.class.as_str().to_string(),
                format!("{tput:?}"),
                format!("{mean_ccs:?}"),
                format!("{energy:?}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<metrics>", e))?;
        Ok(())
    }

    /// Writes `epoch,ue_id,state_index,action_mask,reward,epsilon`.
    pub fn write_epoch_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "ue_id", "state_index", "action_mask", "reward", "epsilon"])?;
        for r in &self.epoch_rows {
            w.write_record(&[
                r.epoch.to_string(),
                r.ue_id.to_string(),
                r.state_index.to_string(),
                r.action_mask.to_string(),
                format!("{:?}", r.reward),
                format!("{:?}", r.epsilon),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<epochs>", e))?;
        Ok(())
    }

    pub fn summary(&self, window_epochs: usize, band: f64) -> RunSummary {
        let per_class = |f: &dyn Fn(TrafficClass) -> Option<f64>| ClassValues {
            ftp: f(TrafficClass::Ftp),
            cbr: f(TrafficClass::Cbr),
        };
        let has = |c: TrafficClass| self.rows_for(c).next().is_some();
        RunSummary {
            method: self.method,
            seed: self.seed,
            mean_throughput_bps: per_class(&|c| has(c).then(|| self.mean_throughput_bps(c))),
            sum_user_throughput_bps: per_class(&|c| {
                has(c).then(|| self.sum_user_throughput_bps(c))
            }),
            mean_active_ccs: per_class(&|c| self.mean_active_ccs(c)),
            mean_active_ccs_after_delay: per_class(&|c| {
                self.mean_active_ccs_from(c, self.activation_delay_slots)
            }),
            mean_active_ccs_all: self.mean_active_ccs_all(),
            total_throughput_bps: self.total_throughput_bps(),
            energy_total: energy_total(self),
            convergence_slot: convergence_slot(self, window_epochs, band),
            mean_epoch_reward: self.mean_epoch_reward(),
            final_window_reward: self.final_window_reward(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassValues {
    #[serde(rename = "FTP")]
    pub ftp: Option<f64>,
    #[serde(rename = "CBR")]
    pub cbr: Option<f64>,
}

impl ClassValues {
    pub fn get(&self, class: TrafficClass) -> Option<f64> {
        match class {
            TrafficClass::Ftp => self.ftp,
            TrafficClass::Cbr => self.cbr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    /// Served bits per second, averaged over slots.
    pub mean_throughput_bps: ClassValues,
    /// Sum over UEs of throughput while backlogged.
    pub sum_user_throughput_bps: ClassValues,
    pub mean_active_ccs: ClassValues,
    pub mean_active_ccs_after_delay: ClassValues,
    pub mean_active_ccs_all: Option<f64>,
    pub total_throughput_bps: f64,
    pub energy_total: f64,
    pub convergence_slot: Option<u64>,
    pub mean_epoch_reward: Option<f64>,
    pub final_window_reward: Option<f64>,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Earliest epoch from which the trailing moving average of `rewards` stays
/// within `band * |terminal|` of the terminal mean, the terminal mean being
/// the average over the last tenth of the sequence. Before a full window is
/// available the average runs over the epochs seen so far.
pub fn convergence_epoch(rewards: &[f64], window: usize, band: f64) -> Option<usize> {
    let n = rewards.len();
    if n == 0 || window == 0 {
        return None;
    }
    let tail = (n / 10).max(1);
    let terminal = mean(&rewards[n - tail..]);
    let tol = band * terminal.abs();

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for r in rewards {
        prefix.push(prefix.last().unwrap() + r);
    }
    let moving = |t: usize| {
        let lo = (t + 1).saturating_sub(window);
        (prefix[t + 1] - prefix[lo]) / (t + 1 - lo) as f64
    };
    // relative slack absorbs prefix-sum rounding on flat sequences
    let slack = 1e-9 * terminal.abs().max(1e-12);
    let mut start = 0;
    for t in 0..n {
        if (moving(t) - terminal).abs() > tol + slack {
            start = t + 1;
        }
    }
    (start < n).then_some(start)
}

/// Convergence point of the run in slots: the decision slot of the epoch
/// returned by [`convergence_epoch`].
pub fn convergence_slot(log: &MetricsLog, window: usize, band: f64) -> Option<u64> {
    convergence_epoch(&log.epoch_rewards, window, band)
        .map(|e| e as u64 * log.decision_period_slots)
}

/// Energy proxy: cost per active CC per slot times the active CC-slots of
/// every UE.
pub fn energy_total(log: &MetricsLog) -> f64 {
    log.energy_per_active_cc_per_slot * log.active_cc_slots() as f64
}
