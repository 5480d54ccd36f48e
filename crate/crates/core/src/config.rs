//! Experiment configuration: a single JSON document with a
//! `schema_version` field. Every key has a default, and unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{LearningParams, Method, RewardParams};
use crate::error::{ConfigError, Error, Result};
use crate::observation::{DiscretizationConfig, EstimatorParams};
use crate::radio::CellConfig;
use crate::traffic::{CbrParams, FtpParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceParams {
    pub window_epochs: usize,
    /// Relative half-width of the band around the terminal mean.
    pub band: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            window_epochs: 20,
            band: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    pub n_ues: usize,
    /// Share of UEs carrying FTP traffic; the rest are CBR.
    pub ftp_fraction: f64,
    pub n_ccs: usize,
    pub cc_bandwidth_hz: f64,
    pub slot_duration_s: f64,
    pub cell: CellConfig,
    pub ftp: FtpParams,
    pub cbr: CbrParams,
    pub decision_period_slots: u64,
    pub activation_delay_slots: u64,
    pub total_slots: u64,
    pub seed: u64,
    pub method: Method,
    pub learning: LearningParams,
    pub reward: RewardParams,
    pub estimator: EstimatorParams,
    pub discretization: DiscretizationConfig,
    pub energy_per_active_cc_per_slot: f64,
    /// One Q-table for every UE instead of one per UE.
    pub shared_q_table: bool,
    pub convergence: ConvergenceParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_ues: 10,
            ftp_fraction: 0.5,
            n_ccs: 3,
            cc_bandwidth_hz: 5e6,
            slot_duration_s: 1e-3,
            cell: CellConfig::default(),
            ftp: FtpParams::default(),
            cbr: CbrParams::default(),
            decision_period_slots: 10,
            activation_delay_slots: 10,
            total_slots: 20_000,
            seed: 1,
            method: Method::QlPartial,
            learning: LearningParams::default(),
            reward: RewardParams::default(),
            estimator: EstimatorParams::default(),
            discretization: DiscretizationConfig::default(),
            energy_per_active_cc_per_slot: 1.0,
            shared_q_table: false,
            convergence: ConvergenceParams::default(),
        }
    }
}

impl SimConfig {
    pub fn n_scc(&self) -> u32 {
        (self.n_ccs - 1) as u32
    }

    pub fn n_ftp_ues(&self) -> usize {
        ((self.n_ues as f64) * self.ftp_fraction).round() as usize
    }

    pub fn n_epochs(&self) -> u64 {
        self.total_slots / self.decision_period_slots
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |k: &str, m: String| Err(ConfigError::new(k, m));
        if self.schema_version != SCHEMA_VERSION {
            return err(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            );
        }
        if self.n_ues == 0 {
            return err("n_ues", "must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.ftp_fraction) {
            return err("ftp_fraction", "must lie in [0, 1]".into());
        }
        if self.n_ccs == 0 {
            return err("n_ccs", "must be >= 1".into());
        }
        if self.n_ccs > 16 {
            return err("n_ccs", "at most 16 carriers are supported".into());
        }
        if !(self.cc_bandwidth_hz.is_finite() && self.cc_bandwidth_hz > 0.0) {
            return err("cc_bandwidth_hz", "must be finite and > 0".into());
        }
        if !(self.slot_duration_s.is_finite() && self.slot_duration_s > 0.0) {
            return err("slot_duration_s", "must be finite and > 0".into());
        }
        self.cell.validate("cell.")?;
        self.ftp.validate("ftp.")?;
        self.cbr.validate("cbr.")?;
        if self.decision_period_slots == 0 {
            return err("decision_period_slots", "must be >= 1".into());
        }
        if self.total_slots == 0 {
            return err("total_slots", "must be > 0".into());
        }
        if self.total_slots % self.decision_period_slots != 0 {
            return err(
                "total_slots",
                format!(
                    "must be divisible by decision_period_slots ({})",
                    self.decision_period_slots
                ),
            );
        }
        self.learning.validate("learning.")?;
        self.reward.validate("reward.")?;
        self.estimator.validate("estimator.")?;
        self.discretization.validate("discretization.")?;
        if !(self.energy_per_active_cc_per_slot.is_finite() && self.energy_per_active_cc_per_slot >= 0.0)
        {
            return err("energy_per_active_cc_per_slot", "must be finite and >= 0".into());
        }
        if self.convergence.window_epochs == 0 {
            return err("convergence.window_epochs", "must be >= 1".into());
        }
        if !(self.convergence.band.is_finite() && self.convergence.band > 0.0) {
            return err("convergence.band", "must be finite and > 0".into());
        }
        Ok(())
    }

    /// Parses a JSON document, applies `key=value` overrides, and validates.
    pub fn from_json_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text)?;
        for (k, v) in overrides {
            apply_override(&mut doc, k, v)?;
        }
        Self::from_value(doc)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, overrides)
    }

    fn from_value(doc: Value) -> Result<Self> {
        if let Some(key) = first_unknown_key(&doc, &serde_json::to_value(SimConfig::default())?, "")
        {
            return Err(ConfigError::new(key, "unknown key").into());
        }
        let cfg: SimConfig = serde_json::from_value(doc).map_err(|e| {
            // serde does not report the path, so fall back to its message
            Error::Config(ConfigError::new(guess_key(&e.to_string()), e.to_string()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Sets a dotted-path key in a JSON document. The value is parsed as JSON
/// when possible, otherwise taken as a string.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let defaults = serde_json::to_value(SimConfig::default())?;
    let mut shape = &defaults;
    for part in key.split('.') {
        shape = shape
            .get(part)
            .ok_or_else(|| ConfigError::new(key, "unknown key"))?;
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));

    if !doc.is_object() {
        *doc = Value::Object(Default::default());
    }
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().expect("object");
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if !node.is_object() {
            return Err(ConfigError::new(key, "parent is not an object").into());
        }
    }
    node.as_object_mut()
        .expect("object")
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn first_unknown_key(doc: &Value, shape: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(d), Value::Object(s)) = (doc, shape) else {
        return None;
    };
    for (k, v) in d {
        let path = format!("{prefix}{k}");
        match s.get(k) {
            None => return Some(path),
            Some(sv) => {
                if let Some(bad) = first_unknown_key(v, sv, &format!("{path}.")) {
                    return Some(bad);
                }
            }
        }
    }
    None
}

fn guess_key(msg: &str) -> String {
    // messages look like "invalid type: ..., expected ..." or "unknown variant `X`"
    let fields = [
        "method",
        "n_ccs",
        "n_ues",
        "total_slots",
        "decision_period_slots",
        "activation_delay_slots",
        "seed",
    ];
    fields
        .iter()
        .find(|f| msg.contains(*f))
        .map(|s| s.to_string())
        .unwrap_or_else(|| {
            if msg.contains("variant") {
                "method".into()
            } else {
                "<document>".into()
            }
        })
}
