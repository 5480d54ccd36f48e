use crate::error::Result;
use crate::radio::{cc_capacity_bps, ComponentCarrier};

/// Equal share of one carrier among its eligible UEs for one slot. Each
/// entry of `eligible` is `(ue_id, snr)`; the result pairs each UE with
/// `floor(capacity * slot_duration / n_eligible)` bits.
pub fn scheduler_equal_share(
    cc: &ComponentCarrier,
    eligible: &[(usize, f64)],
    slot_duration_s: f64,
) -> Result<Vec<(usize, u64)>> {
    let n = eligible.len();
    eligible
        .iter()
        .map(|&(ue, snr)| {
            let bits = cc_capacity_bps(cc, snr)? * slot_duration_s;
            Ok((ue, share_bits(bits, n)))
        })
        .collect()
}

/// `floor(bits_per_slot / n)`, or zero when nobody shares the carrier.
#[inline]
pub(crate) fn share_bits(bits_per_slot: f64, n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        (bits_per_slot / n as f64).floor() as u64
    }
}

/// One UE's claim on a carrier for a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    /// Bits the UE could move if it had the whole carrier for the slot.
    pub bits_per_slot: f64,
    /// Bits still waiting for this carrier.
    pub backlog_bits: u64,
}

/// Max-min fair split of one carrier's slot time. UEs whose backlog fits
/// in less than an equal share get just what they need, and the time they
/// leave is split equally among the rest. When every UE can use its equal
/// share the result equals [`scheduler_equal_share`].
pub fn water_fill(demands: &[Demand]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    let need = |d: &Demand| {
        if d.bits_per_slot > 0.0 {
            d.backlog_bits as f64 / d.bits_per_slot
        } else {
            f64::INFINITY
        }
    };
    order.sort_by(|&a, &b| need(&demands[a]).total_cmp(&need(&demands[b])).then(a.cmp(&b)));

    let mut grants = vec![0u64; demands.len()];
    let mut time_left = 1.0f64;
    let mut k = demands.len();
    for i in order {
        let d = &demands[i];
        let fair = time_left / k as f64;
        let t = need(d).min(fair);
        let bits = if t == fair {
            (d.bits_per_slot * time_left / k as f64).floor() as u64
        } else {
            d.backlog_bits
        };
        grants[i] = bits.min(d.backlog_bits);
        time_left = (time_left - t).max(0.0);
        k -= 1;
    }
    grants
}
