//! Downlink traffic: FTP-style bursty file arrivals and ON/OFF constant bit
//! rate flows, plus the per-UE transmit buffer.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrafficClass {
    #[serde(rename = "FTP")]
    Ftp,
    #[serde(rename = "CBR")]
    Cbr,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 2] = [TrafficClass::Ftp, TrafficClass::Cbr];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrafficClass::Ftp => "FTP",
            TrafficClass::Cbr => "CBR",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            TrafficClass::Ftp => 0,
            TrafficClass::Cbr => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtpParams {
    /// Mean of the geometric inter-arrival distribution, in slots.
    pub mean_interarrival_slots: f64,
    pub file_size_bits: u64,
}

impl Default for FtpParams {
    fn default() -> Self {
        Self {
            mean_interarrival_slots: 60.0,
            file_size_bits: 1_000_000,
        }
    }
}

impl FtpParams {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        if !(self.mean_interarrival_slots.is_finite() && self.mean_interarrival_slots >= 1.0) {
            return Err(ConfigError::new(
                format!("{prefix}mean_interarrival_slots"),
                "must be finite and >= 1 (one arrival per slot at most)",
            ));
        }
        if self.file_size_bits == 0 {
            return Err(ConfigError::new(format!("{prefix}file_size_bits"), "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbrParams {
    pub bits_per_slot: u64,
    pub on_period_slots: u64,
    pub off_period_slots: u64,
}

impl Default for CbrParams {
    fn default() -> Self {
        Self {
            bits_per_slot: 15_000,
            on_period_slots: 100,
            off_period_slots: 100,
        }
    }
}

impl CbrParams {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        if self.on_period_slots == 0 {
            return Err(ConfigError::new(format!("{prefix}on_period_slots"), "must be > 0"));
        }
        Ok(())
    }

    pub fn is_on(&self, slot: u64) -> bool {
        slot % (self.on_period_slots + self.off_period_slots) < self.on_period_slots
    }
}

/// Ground-truth parameters of one UE's traffic source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrafficSpec {
    Ftp(FtpParams),
    Cbr(CbrParams),
}

impl TrafficSpec {
    pub fn class(&self) -> TrafficClass {
        match self {
            TrafficSpec::Ftp(_) => TrafficClass::Ftp,
            TrafficSpec::Cbr(_) => TrafficClass::Cbr,
        }
    }

    /// True mean inter-arrival time between consecutive arrivals, in slots.
    pub fn mean_interarrival_slots(&self) -> f64 {
        match self {
            TrafficSpec::Ftp(p) => p.mean_interarrival_slots,
            TrafficSpec::Cbr(p) => {
                (p.on_period_slots + p.off_period_slots) as f64 / p.on_period_slots as f64
            }
        }
    }

    pub fn mean_size_bits(&self) -> f64 {
        match self {
            TrafficSpec::Ftp(p) => p.file_size_bits as f64,
            TrafficSpec::Cbr(p) => p.bits_per_slot as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowArrival {
    pub slot: u64,
    pub size_bits: u64,
}

/// One Bernoulli trial per slot with success probability `1 / mean`, which
/// yields geometric inter-arrival times with the requested mean.
pub fn generate_ftp<R: Rng + ?Sized>(
    params: &FtpParams,
    rng: &mut R,
    slot: u64,
) -> Option<FlowArrival> {
    let p = 1.0 / params.mean_interarrival_slots;
    // always draw so the stream position depends only on the slot count
    let u: f64 = rng.gen();
    (u < p).then_some(FlowArrival {
        slot,
        size_bits: params.file_size_bits,
    })
}

pub fn generate_cbr(params: &CbrParams, slot: u64) -> Option<FlowArrival> {
    (params.bits_per_slot > 0 && params.is_on(slot)).then_some(FlowArrival {
        slot,
        size_bits: params.bits_per_slot,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buffer {
    pub pending_bits: u64,
    pub cumulative_arrived_bits: u64,
    pub cumulative_served_bits: u64,
}

impl Buffer {
    pub fn enqueue(&mut self, arrival: &FlowArrival) {
        self.pending_bits += arrival.size_bits;
        self.cumulative_arrived_bits += arrival.size_bits;
    }

    /// Serves up to `capacity_bits`, returning the bits actually served.
    pub fn serve(&mut self, capacity_bits: u64) -> u64 {
        let served = self.pending_bits.min(capacity_bits);
        self.pending_bits -= served;
        self.cumulative_served_bits += served;
        served
    }

    pub fn is_conserved(&self) -> bool {
        self.cumulative_arrived_bits == self.cumulative_served_bits + self.pending_bits
    }

    pub fn is_empty(&self) -> bool {
        self.pending_bits == 0
    }
}

/// Writes arrivals as `ue_id,slot,size_bits` rows.
pub fn write_trace_csv<W: Write>(out: W, arrivals: &[(usize, FlowArrival)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ue_id", "slot", "size_bits"])?;
    for (ue, a) in arrivals {
        w.write_record(&[ue.to_string(), a.slot.to_string(), a.size_bits.to_string()])?;
    }
    w.flush().map_err(|e| crate::error::Error::io("<trace>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ftp(mean: f64, size: u64) -> FtpParams {
        FtpParams {
            mean_interarrival_slots: mean,
            file_size_bits: size,
        }
    }

    fn ftp_trace(p: &FtpParams, seed: u64, slots: u64) -> Vec<FlowArrival> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..slots).filter_map(|s| generate_ftp(p, &mut rng, s)).collect()
    }

    #[test]
    fn ftp_mean_one_arrives_every_slot() {
        assert_eq!(ftp_trace(&ftp(1.0, 10), 3, 500).len(), 500);
    }

    #[test]
    fn ftp_empirical_interarrival_near_mean() {
        let trace = ftp_trace(&ftp(50.0, 1), 2024, 100_000);
        let gaps: Vec<u64> = trace.windows(2).map(|w| w[1].slot - w[0].slot).collect();
        let mean = gaps.iter().sum::<u64>() as f64 / gaps.len() as f64;
        assert!((mean - 50.0).abs() <= 5.0, "mean inter-arrival {mean}");
    }

    #[test]
    fn ftp_files_have_fixed_size() {
        let trace = ftp_trace(&ftp(5.0, 2_000_000), 9, 10_000);
        assert!(!trace.is_empty());
        assert!(trace.iter().all(|a| a.size_bits == 2_000_000));
    }

    #[test]
    fn cbr_phases() {
        let always = CbrParams {
            bits_per_slot: 7,
            on_period_slots: 3,
            off_period_slots: 0,
        };
        assert!((0..100).all(|s| generate_cbr(&always, s).map(|a| a.size_bits) == Some(7)));

        let half = CbrParams {
            bits_per_slot: 7,
            on_period_slots: 10,
            off_period_slots: 10,
        };
        assert!(generate_cbr(&half, 5).is_some());
        assert!(generate_cbr(&half, 15).is_none());
        assert!(generate_cbr(&half, 25).is_some());

        let silent = CbrParams {
            bits_per_slot: 0,
            ..half
        };
        let mut b = Buffer::default();
        for s in 0..100 {
            if let Some(a) = generate_cbr(&silent, s) {
                b.enqueue(&a);
            }
        }
        assert_eq!(b, Buffer::default());
    }

    #[test]
    fn buffer_examples() {
        let mut b = Buffer::default();
        b.enqueue(&FlowArrival { slot: 0, size_bits: 100 });
        assert_eq!(b.pending_bits, 100);

        let mut b = Buffer {
            pending_bits: 50,
            cumulative_arrived_bits: 50,
            cumulative_served_bits: 0,
        };
        b.enqueue(&FlowArrival { slot: 1, size_bits: 100 });
        assert_eq!((b.pending_bits, b.cumulative_arrived_bits), (150, 150));

        let mut b = Buffer::default();
        b.enqueue(&FlowArrival { slot: 0, size_bits: 100 });
        b.enqueue(&FlowArrival { slot: 1, size_bits: 100 });
        assert_eq!(b.serve(150), 150);
        assert_eq!(b.pending_bits, 50);
        assert!(b.is_conserved());
    }

    #[test]
    fn serve_examples() {
        let mut b = Buffer::default();
        b.enqueue(&FlowArrival { slot: 0, size_bits: 100 });
        assert_eq!(b.serve(1000), 100);
        assert_eq!(b.pending_bits, 0);

        let mut b = Buffer::default();
        b.enqueue(&FlowArrival { slot: 0, size_bits: 1000 });
        assert_eq!(b.serve(100), 100);
        assert_eq!(b.pending_bits, 900);

        let mut b = Buffer::default();
        assert_eq!(b.serve(12345), 0);
    }

    #[test]
    fn true_means() {
        let cbr = TrafficSpec::Cbr(CbrParams {
            bits_per_slot: 15_000,
            on_period_slots: 100,
            off_period_slots: 100,
        });
        assert_eq!(cbr.mean_interarrival_slots(), 2.0);
        assert_eq!(cbr.mean_size_bits(), 15_000.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ftp(0.5, 10).validate("ftp.").is_err());
        assert!(ftp(10.0, 0).validate("ftp.").is_err());
        let cbr = CbrParams {
            bits_per_slot: 1,
            on_period_slots: 0,
            off_period_slots: 1,
        };
        assert_eq!(cbr.validate("cbr.").unwrap_err().key, "cbr.on_period_slots");
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let mut out = Vec::new();
        write_trace_csv(&mut out, &[(3, FlowArrival { slot: 12, size_bits: 99 })]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "ue_id,slot,size_bits\n3,12,99\n");
    }

    proptest! {
        #[test]
        fn ftp_trace_reproducible(seed in any::<u64>(), mean in 1.0f64..100.0) {
            let p = ftp(mean, 1000);
            prop_assert_eq!(ftp_trace(&p, seed, 2000), ftp_trace(&p, seed, 2000));
        }

        #[test]
        fn buffer_conserves(ops in proptest::collection::vec((any::<bool>(), 1u64..1_000_000), 0..200)) {
            let mut b = Buffer::default();
            for (slot, (is_arrival, bits)) in ops.into_iter().enumerate() {
                if is_arrival {
                    b.enqueue(&FlowArrival { slot: slot as u64, size_bits: bits });
                } else {
                    let before = b.pending_bits;
                    let served = b.serve(bits);
                    prop_assert_eq!(served, before.min(bits));
                }
                prop_assert!(b.is_conserved());
            }
        }
    }
}
