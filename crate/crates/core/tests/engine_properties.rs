use std::collections::BTreeMap;

mod common;

use ca_sim::experiment::{run_grid, ExperimentSpec};
use ca_sim::{run, run_with, Action, Method, RunOptions, SimConfig, TrafficClass, World};

fn short(method: Method, seed: u64) -> SimConfig {
    SimConfig {
        method,
        seed,
        total_slots: 3_000,
        ..SimConfig::default()
    }
}

fn csv_bytes(cfg: &SimConfig) -> (Vec<u8>, Vec<u8>) {
    let log = run(cfg).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    log.write_slot_csv(&mut a).unwrap();
    log.write_epoch_csv(&mut b).unwrap();
    (a, b)
}

#[test]
fn repeated_runs_are_byte_identical() {
    for m in Method::ALL {
        let cfg = short(m, 7);
        assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg), "{m}");
    }
}

#[test]
fn seeds_change_the_outcome() {
    assert_ne!(csv_bytes(&short(Method::QlPartial, 1)), csv_bytes(&short(Method::QlPartial, 2)));
}

#[test]
fn thread_count_does_not_change_results() {
    let spec = ExperimentSpec::new(
        SimConfig {
            total_slots: 2_000,
            ..SimConfig::default()
        },
        Method::ALL.to_vec(),
        vec![1, 2, 3],
        std::env::temp_dir(),
    )
    .unwrap();
    let one = run_grid(&spec, Some(1)).unwrap();
    let four = run_grid(&spec, Some(4)).unwrap();
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&four).unwrap());
    assert_eq!(common::grid_csv_bytes(1), common::grid_csv_bytes(4));
}

#[test]
fn conservation_holds_on_every_slot_of_random_runs() {
    common::fuzz_conservation(100_000, 2024).unwrap();
}

#[test]
fn masks_take_effect_exactly_after_the_delay() {
    for (delay, method) in [(10, Method::QlPartial), (25, Method::QlFull), (7, Method::Reactive)] {
        let cfg = SimConfig {
            activation_delay_slots: delay,
            total_slots: 3_000,
            method,
            ..SimConfig::default()
        };
        let mut w = World::new(&cfg, RunOptions::default()).unwrap();
        let mut scheduled: Vec<BTreeMap<u64, Action>> = vec![BTreeMap::new(); cfg.n_ues];
        let mut prev: Vec<Action> = w.ues().iter().map(|u| u.active_mask).collect();
        for t in 0..cfg.total_slots {
            w.step(t).unwrap();
            for (i, ue) in w.ues().iter().enumerate() {
                let expected = scheduled[i].remove(&t).unwrap_or(prev[i]);
                assert_eq!(ue.active_mask, expected, "delay {delay} slot {t} ue {i}");
                for (eff, a) in ue.pending_changes() {
                    assert!(eff > t);
                    if let Some(old) = scheduled[i].insert(eff, a) {
                        assert_eq!(old, a);
                    } else {
                        assert_eq!(t % cfg.decision_period_slots, 0);
                        assert_eq!(eff, t + delay, "decision at {t} lands at {eff}");
                    }
                }
                prev[i] = ue.active_mask;
            }
        }
    }
}

#[test]
fn zero_delay_applies_immediately() {
    let cfg = SimConfig {
        activation_delay_slots: 0,
        method: Method::AllCc,
        total_slots: 100,
        ..SimConfig::default()
    };
    let mut w = World::new(&cfg, RunOptions::default()).unwrap();
    w.step(0).unwrap();
    assert!(w.ues().iter().all(|u| u.active_ccs() == 3));
}

#[test]
fn mean_active_cc_bounds() {
    for seed in [1, 2] {
        let single = run(&short(Method::SingleCc, seed)).unwrap();
        assert_eq!(single.mean_active_ccs_all(), Some(1.0));
        for c in TrafficClass::ALL {
            assert_eq!(single.mean_active_ccs(c), Some(1.0));
        }

        let all = run(&short(Method::AllCc, seed)).unwrap();
        for c in TrafficClass::ALL {
            assert_eq!(all.mean_active_ccs_from(c, 10), Some(3.0));
        }
        let out = run_with(&short(Method::AllCc, seed), RunOptions::default()).unwrap();
        assert!(out.log.slot_rows.iter().filter(|r| r.slot >= 10).all(|r| r.active_ccs == 3 * r.n_ues));

        for m in [Method::Reactive, Method::QlFull, Method::QlPartial] {
            let x = run(&short(m, seed)).unwrap().mean_active_ccs_all().unwrap();
            assert!(x > 1.0 && x < 3.0, "{m}: {x}");
        }
    }
}

#[test]
fn null_traffic_moves_nothing_and_only_penalizes() {
    for m in Method::ALL {
        let mut cfg = short(m, 3);
        cfg.ftp_fraction = 0.0;
        cfg.cbr.bits_per_slot = 0;
        let log = run(&cfg).unwrap();
        assert_eq!(log.total_throughput_bps(), 0.0);
        assert!(log.slot_rows.iter().all(|r| r.served_bits == 0));
        assert!(log.epoch_rows.iter().all(|r| r.reward <= 0.0));
        for r in &log.epoch_rows {
            // every active SCC is wasted
            let n = f64::from(r.action_mask.count_ones());
            assert_eq!(r.reward, -n);
        }
    }
}

#[test]
fn energy_counts_active_cc_slots() {
    let mut cfg = short(Method::SingleCc, 1);
    cfg.n_ues = 1;
    cfg.total_slots = 100;
    cfg.ftp_fraction = 1.0;
    assert_eq!(ca_sim::sim::energy_total(&run(&cfg).unwrap()), 100.0);
    cfg.method = Method::AllCc;
    cfg.activation_delay_slots = 0;
    assert_eq!(ca_sim::sim::energy_total(&run(&cfg).unwrap()), 300.0);
}
