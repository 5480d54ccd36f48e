//! The agent's three-feature view of a UE (inter-arrival time, data size,
//! average throughput) and its discretization into Q-table states.
//!
//! Under partial observability the first two features come from EMA
//! estimators fed only by what the manager sees at the buffer. Under full
//! observability they are the generator's true means. The throughput
//! feature is always the measured EMA, so it depends on the carriers the
//! agent activated earlier.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::traffic::TrafficSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub est_interarrival_slots: f64,
    pub est_size_bits: f64,
    pub avg_throughput_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorParams {
    pub interarrival_beta: f64,
    pub size_beta: f64,
    pub throughput_beta: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            interarrival_beta: 0.1,
            size_beta: 0.1,
            throughput_beta: 0.05,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        for (k, v) in [
            ("interarrival_beta", self.interarrival_beta),
            ("size_beta", self.size_beta),
            ("throughput_beta", self.throughput_beta),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError::new(format!("{prefix}{k}"), "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

pub fn ema_update(prev: f64, sample: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("ema beta must lie in (0, 1], got {beta}")));
    }
    Ok((1.0 - beta) * prev + beta * sample)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub ema_interarrival: f64,
    pub ema_size: f64,
    pub ema_throughput: f64,
    pub last_arrival_slot: Option<u64>,
}

impl EstimatorState {
    /// Before any arrival the inter-arrival estimate is one decision period.
    pub fn new(decision_period_slots: u64) -> Self {
        Self {
            ema_interarrival: decision_period_slots as f64,
            ema_size: 0.0,
            ema_throughput: 0.0,
            last_arrival_slot: None,
        }
    }

    /// Feeds an arrival that entered the buffer. Betas are validated at
    /// config load.
    pub fn on_arrival(&mut self, slot: u64, size_bits: u64, p: &EstimatorParams) {
        if let Some(last) = self.last_arrival_slot {
            let gap = slot.saturating_sub(last) as f64;
            self.ema_interarrival = blend(self.ema_interarrival, gap, p.interarrival_beta);
        }
        self.ema_size = blend(self.ema_size, size_bits as f64, p.size_beta);
        self.last_arrival_slot = Some(slot);
    }

    pub fn on_service(&mut self, served_bits: u64, slot_duration_s: f64, p: &EstimatorParams) {
        let rate = served_bits as f64 / slot_duration_s;
        self.ema_throughput = blend(self.ema_throughput, rate, p.throughput_beta);
    }
}

#[inline]
fn blend(prev: f64, sample: f64, beta: f64) -> f64 {
    (1.0 - beta) * prev + beta * sample
}

pub fn observe_partial(est: &EstimatorState) -> Observation {
    Observation {
        est_interarrival_slots: est.ema_interarrival,
        est_size_bits: est.ema_size,
        avg_throughput_bps: est.ema_throughput,
    }
}

pub fn observe_full(truth: &TrafficSpec, est: &EstimatorState) -> Observation {
    Observation {
        est_interarrival_slots: truth.mean_interarrival_slots(),
        est_size_bits: truth.mean_size_bits(),
        avg_throughput_bps: est.ema_throughput,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateIndex(pub usize);

/// Bin edges for the three observation features. `k` edges make `k + 1`
/// bins per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub interarrival_edges: Vec<f64>,
    pub size_edges: Vec<f64>,
    pub throughput_edges: Vec<f64>,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            interarrival_edges: vec![5.0, 30.0],
            size_edges: vec![1.0e5, 4.5e5],
            throughput_edges: vec![2.0e6, 1.5e7],
        }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        for (k, edges) in self.dims() {
            if edges.iter().any(|e| !e.is_finite()) {
                return Err(ConfigError::new(format!("{prefix}{k}"), "edges must be finite"));
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::new(
                    format!("{prefix}{k}"),
                    "edges must be strictly increasing",
                ));
            }
        }
        Ok(())
    }

    fn dims(&self) -> [(&'static str, &[f64]); 3] {
        [
            ("interarrival_edges", &self.interarrival_edges),
            ("size_edges", &self.size_edges),
            ("throughput_edges", &self.throughput_edges),
        ]
    }

    pub fn bin_counts(&self) -> [usize; 3] {
        self.dims().map(|(_, e)| e.len() + 1)
    }

    pub fn n_states(&self) -> usize {
        self.bin_counts().iter().product()
    }
}

fn bin_of(value: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e <= value)
}

/// Row-major index over (inter-arrival, size, throughput) bins.
pub fn discretize(obs: &Observation, cfg: &DiscretizationConfig) -> StateIndex {
    let [_, n_size, n_tput] = cfg.bin_counts();
    let b0 = bin_of(obs.est_interarrival_slots, &cfg.interarrival_edges);
    let b1 = bin_of(obs.est_size_bits, &cfg.size_edges);
    let b2 = bin_of(obs.avg_throughput_bps, &cfg.throughput_edges);
    StateIndex((b0 * n_size + b1) * n_tput + b2)
}
