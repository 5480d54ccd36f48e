//! Link budget for a single gNB: log-distance path loss, SNR, and Shannon
//! capacity per component carrier.
//!
//! The channel is deterministic (no fading, no shadowing) and every carrier
//! shares the same propagation, so a UE's per-carrier capacity is fixed by
//! its distance for the whole run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CarrierRole {
    Pcc,
    Scc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentCarrier {
    pub id: usize,
    pub bandwidth_hz: f64,
    pub role: CarrierRole,
}

impl ComponentCarrier {
    /// Builds the carrier set of a cell: carrier 0 is the PCC, the rest SCCs.
    pub fn cell_carriers(n_ccs: usize, bandwidth_hz: f64) -> Result<Vec<ComponentCarrier>> {
        if n_ccs == 0 {
            return Err(Error::invalid("a cell needs at least one carrier"));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::invalid(format!(
                "carrier bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        Ok((0..n_ccs)
            .map(|id| ComponentCarrier {
                id,
                bandwidth_hz,
                role: if id == 0 {
                    CarrierRole::Pcc
                } else {
                    CarrierRole::Scc
                },
            })
            .collect())
    }

    pub fn is_pcc(&self) -> bool {
        self.role == CarrierRole::Pcc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub radius_m: f64,
    /// Transmit power per carrier.
    pub tx_power_dbm: f64,
    /// Noise power over one carrier bandwidth, noise figure included.
    pub noise_power_dbm: f64,
    pub pl_exponent: f64,
    pub pl_ref_db: f64,
    pub ref_distance_m: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            radius_m: 250.0,
            tx_power_dbm: 30.0,
            noise_power_dbm: -104.0,
            pl_exponent: 3.5,
            pl_ref_db: 40.0,
            ref_distance_m: 1.0,
        }
    }
}

impl CellConfig {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let key = |k: &str| format!("{prefix}{k}");
        let positive = |k: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(key(k), format!("must be finite and > 0, got {v}")))
            }
        };
        let finite = |k: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(key(k), "must be finite"))
            }
        };
        positive("radius_m", self.radius_m)?;
        positive("pl_exponent", self.pl_exponent)?;
        positive("ref_distance_m", self.ref_distance_m)?;
        finite("tx_power_dbm", self.tx_power_dbm)?;
        finite("noise_power_dbm", self.noise_power_dbm)?;
        finite("pl_ref_db", self.pl_ref_db)?;
        if self.radius_m < self.ref_distance_m {
            return Err(ConfigError::new(
                key("radius_m"),
                "must be at least ref_distance_m",
            ));
        }
        Ok(())
    }

    /// SNR of a UE at `distance_m`, identical on every carrier.
    pub fn snr_at(&self, distance_m: f64) -> Result<f64> {
        let pl = path_loss_db(distance_m, self)?;
        snr_linear(self.tx_power_dbm, pl, self.noise_power_dbm)
    }
}

/// UE position in meters; the gNB sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Uniform placement over the disk of radius `radius_m`.
    pub fn sample_uniform<R: Rng + ?Sized>(radius_m: f64, rng: &mut R) -> Self {
        let r = radius_m * rng.gen::<f64>().sqrt();
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        // cos/sin rounding can push r a hair past the edge
        let r = r.min(radius_m);
        Position {
            x: r * theta.cos(),
            y: r * theta.sin(),
        }
    }
}

/// Log-distance path loss. Distances below the reference distance are
/// clamped to it.
pub fn path_loss_db(distance_m: f64, cfg: &CellConfig) -> Result<f64> {
    if !distance_m.is_finite() || distance_m <= 0.0 {
        return Err(Error::invalid(format!(
            "distance must be finite and positive, got {distance_m}"
        )));
    }
    let d = distance_m.max(cfg.ref_distance_m);
    Ok(cfg.pl_ref_db + 10.0 * cfg.pl_exponent * (d / cfg.ref_distance_m).log10())
}

pub fn snr_linear(tx_power_dbm: f64, pl_db: f64, noise_dbm: f64) -> Result<f64> {
    if !(tx_power_dbm.is_finite() && pl_db.is_finite() && noise_dbm.is_finite()) {
        return Err(Error::invalid("link budget terms must be finite"));
    }
    Ok(10f64.powf((tx_power_dbm - pl_db - noise_dbm) / 10.0))
}

/// Shannon capacity of one carrier in bits per second.
pub fn cc_capacity_bps(cc: &ComponentCarrier, snr: f64) -> Result<f64> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(Error::invalid(format!("snr must be positive, got {snr}")));
    }
    Ok(cc.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cc5() -> ComponentCarrier {
        ComponentCarrier {
            id: 1,
            bandwidth_hz: 5e6,
            role: CarrierRole::Scc,
        }
    }

    #[test]
    fn path_loss_at_reference_distance_is_reference_loss() {
        let cfg = CellConfig::default();
        assert_eq!(path_loss_db(1.0, &cfg).unwrap(), 40.0);
        // clamped below d0
        assert_eq!(path_loss_db(0.3, &cfg).unwrap(), 40.0);
    }

    #[test]
    fn path_loss_examples() {
        let cfg = CellConfig::default();
        assert_relative_eq!(path_loss_db(10.0, &cfg).unwrap(), 75.0, epsilon = 1e-12);
        // 40 + 35 log10(250), computed at 30 digits
        assert_relative_eq!(
            path_loss_db(250.0, &cfg).unwrap(),
            123.927_900_303_521_3,
            epsilon = 1e-9
        );
    }

    #[test]
    fn path_loss_rejects_bad_distance() {
        let cfg = CellConfig::default();
        assert!(path_loss_db(0.0, &cfg).is_err());
        assert!(path_loss_db(-5.0, &cfg).is_err());
        assert!(path_loss_db(f64::NAN, &cfg).is_err());
        assert!(path_loss_db(f64::INFINITY, &cfg).is_err());
    }

    #[test]
    fn snr_examples() {
        assert_relative_eq!(snr_linear(30.0, 100.0, -100.0).unwrap(), 1000.0, max_relative = 1e-12);
        assert_eq!(snr_linear(0.0, 0.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            snr_linear(30.0, 123.9, -104.0).unwrap(),
            10.232_929_922_807_54,
            max_relative = 1e-9
        );
        assert!(snr_linear(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn capacity_examples() {
        assert_relative_eq!(cc_capacity_bps(&cc5(), 1.0).unwrap(), 5e6, max_relative = 1e-12);
        assert_relative_eq!(cc_capacity_bps(&cc5(), 3.0).unwrap(), 10e6, max_relative = 1e-12);
        assert_relative_eq!(
            cc_capacity_bps(&cc5(), 1000.0).unwrap(),
            49_836_131.294_179_97,
            max_relative = 1e-9
        );
        assert!(cc_capacity_bps(&cc5(), 0.0).is_err());
        assert!(cc_capacity_bps(&cc5(), -1.0).is_err());
    }

    #[test]
    fn cell_edge_capacity_is_finite_and_positive() {
        let cfg = CellConfig::default();
        for cc in ComponentCarrier::cell_carriers(3, 5e6).unwrap() {
            let c = cc_capacity_bps(&cc, cfg.snr_at(cfg.radius_m).unwrap()).unwrap();
            assert!(c.is_finite() && c > 0.0);
        }
    }

    #[test]
    fn exactly_one_pcc() {
        let ccs = ComponentCarrier::cell_carriers(3, 5e6).unwrap();
        assert_eq!(ccs.iter().filter(|c| c.is_pcc()).count(), 1);
        assert!(ComponentCarrier::cell_carriers(0, 5e6).is_err());
        assert!(ComponentCarrier::cell_carriers(2, 0.0).is_err());
    }

    #[test]
    fn radius_below_reference_rejected() {
        let cfg = CellConfig {
            radius_m: 0.5,
            ..CellConfig::default()
        };
        assert_eq!(cfg.validate("cell.").unwrap_err().key, "cell.radius_m");
    }

    proptest! {
        #[test]
        fn path_loss_monotone(
            exp in 1.5f64..6.0,
            pl0 in 0.0f64..80.0,
            d0 in 0.1f64..20.0,
            a in 0.01f64..5000.0,
            b in 0.01f64..5000.0,
        ) {
            let cfg = CellConfig { pl_exponent: exp, pl_ref_db: pl0, ref_distance_m: d0, ..CellConfig::default() };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(path_loss_db(lo, &cfg).unwrap() <= path_loss_db(hi, &cfg).unwrap());
        }

        #[test]
        fn capacity_strictly_increasing(a in 1e-6f64..1e6, k in 1.0001f64..10.0) {
            let b = a * k;
            prop_assert!(cc_capacity_bps(&cc5(), a).unwrap() < cc_capacity_bps(&cc5(), b).unwrap());
        }

        #[test]
        fn sampled_positions_inside_cell(seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = Position::sample_uniform(250.0, &mut rng);
            prop_assert!(p.distance() <= 250.0 + 1e-9);
        }
    }
}
