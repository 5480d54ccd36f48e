#![allow(dead_code)]

use ca_sim::experiment::{aggregate, run_grid, CompareReport, ExperimentSpec};
use ca_sim::{run, Action, Method, QTable, RunOptions, SimConfig, StateIndex, World};
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Three states, two actions, stochastic transitions, fixed rewards.
pub struct ToyMdp {
    pub reward: [[f64; 2]; 3],
    pub next: [[[f64; 3]; 2]; 3],
    pub gamma: f64,
}

pub fn toy_mdp() -> ToyMdp {
    ToyMdp {
        reward: [[0.0, 0.5], [1.0, 0.0], [0.2, 1.5]],
        next: [
            [[0.1, 0.8, 0.1], [0.7, 0.2, 0.1]],
            [[0.6, 0.3, 0.1], [0.1, 0.2, 0.7]],
            [[0.3, 0.3, 0.4], [0.5, 0.4, 0.1]],
        ],
        gamma: 0.5,
    }
}

impl ToyMdp {
    /// Optimal Q by value iteration, iterated to a fixed point.
    pub fn value_iteration(&self) -> [[f64; 2]; 3] {
        let mut q = [[0.0f64; 2]; 3];
        loop {
            let v: Vec<f64> = q.iter().map(|r| r[0].max(r[1])).collect();
            let mut next = [[0.0; 2]; 3];
            let mut delta = 0.0f64;
            for s in 0..3 {
                for a in 0..2 {
                    let ev: f64 = (0..3).map(|t| self.next[s][a][t] * v[t]).sum();
                    next[s][a] = self.reward[s][a] + self.gamma * ev;
                    delta = delta.max((next[s][a] - q[s][a]).abs());
                }
            }
            q = next;
            if delta < 1e-13 {
                return q;
            }
        }
    }

    pub fn sample_next<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for t in 0..3 {
            acc += self.next[s][a][t];
            if u < acc {
                return t;
            }
        }
        2
    }

    /// Epsilon-greedy Q-learning with step size 1 / visit count.
    pub fn q_learning(&self, steps: usize, epsilon: f64, seed: u64) -> QTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = QTable::new(3, 1);
        let mut s = 0usize;
        for _ in 0..steps {
            let a = q.select_action(StateIndex(s), epsilon, &mut rng);
            let ai = a.mask() as usize;
            let s2 = self.sample_next(s, ai, &mut rng);
            let alpha = 1.0 / (q.visits(StateIndex(s), a) + 1) as f64;
            q.update_with_rate(StateIndex(s), a, self.reward[s][ai], StateIndex(s2), alpha, self.gamma)
                .unwrap();
            s = s2;
        }
        q
    }
}

pub fn greedy_of(q: &[[f64; 2]; 3]) -> [u32; 3] {
    // ties go to the lower action, as in the Q-table
    let mut p = [0; 3];
    for s in 0..3 {
        p[s] = if q[s][1] > q[s][0] { 1 } else { 0 };
    }
    p
}

pub fn max_abs_error(learned: &QTable, oracle: &[[f64; 2]; 3]) -> f64 {
    let mut err = 0.0f64;
    for s in 0..3 {
        for a in 0..2u32 {
            err = err.max((learned.value(StateIndex(s), Action::from_mask(a, 1)) - oracle[s][a as usize]).abs());
        }
    }
    err
}

/// All five methods over the standard seeds on the default workload.
pub fn default_grid() -> CompareReport {
    let spec = ExperimentSpec::new(
        SimConfig::default(),
        Method::ALL.to_vec(),
        SEEDS.to_vec(),
        std::env::temp_dir(),
    )
    .unwrap();
    let runs = run_grid(&spec, None).unwrap();
    aggregate(&spec.seeds, &spec.methods, runs)
}

pub fn random_config(rng: &mut ChaCha8Rng) -> SimConfig {
    let period = rng.gen_range(1..=20u64);
    let mut cfg = SimConfig {
        n_ues: rng.gen_range(1..=12),
        ftp_fraction: rng.gen_range(0.0..=1.0),
        n_ccs: rng.gen_range(1..=5),
        decision_period_slots: period,
        activation_delay_slots: rng.gen_range(0..=3 * period),
        total_slots: period * (10_000 / period),
        seed: rng.gen(),
        method: Method::ALL[rng.gen_range(0..5)],
        shared_q_table: rng.gen_bool(0.3),
        ..SimConfig::default()
    };
    cfg.ftp.mean_interarrival_slots = rng.gen_range(1.0..200.0);
    cfg.ftp.file_size_bits = rng.gen_range(1..3_000_000);
    cfg.cbr.bits_per_slot = rng.gen_range(0..60_000);
    cfg.cbr.on_period_slots = rng.gen_range(1..300);
    cfg.cbr.off_period_slots = rng.gen_range(0..300);
    cfg.cell.radius_m = rng.gen_range(10.0..600.0);
    cfg
}

/// Steps random configs for at least `min_slots` slots in total, checking
/// buffer conservation and service bounds after every slot.
pub fn fuzz_conservation(min_slots: u64, seed: u64) -> Result<u64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots = 0u64;
    while slots < min_slots {
        let cfg = random_config(&mut rng);
        let mut w = World::new(&cfg, RunOptions::default()).map_err(|e| e.to_string())?;
        for t in 0..cfg.total_slots {
            w.step(t).map_err(|e| e.to_string())?;
            for ue in w.ues() {
                if !ue.buffer.is_conserved() {
                    return Err(format!("buffer not conserved at slot {t}, ue {}", ue.id));
                }
                if ue.last_served_bits > ue.last_allocated_bits {
                    return Err(format!("served above allocation at slot {t}, ue {}", ue.id));
                }
                if ue.active_mask.active_ccs() as usize > cfg.n_ccs {
                    return Err(format!("too many carriers at slot {t}, ue {}", ue.id));
                }
            }
        }
        slots += cfg.total_slots;
    }
    Ok(slots)
}

/// Slot and epoch CSVs of a small grid, produced on a pool of `threads`.
pub fn grid_csv_bytes(threads: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
    let cfgs: Vec<SimConfig> = Method::ALL
        .iter()
        .flat_map(|&m| {
            [11u64, 12].map(|seed| SimConfig {
                method: m,
                seed,
                total_slots: 2_000,
                ..SimConfig::default()
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        cfgs.par_iter()
            .map(|cfg| {
                let log = run(cfg).unwrap();
                let (mut a, mut b) = (Vec::new(), Vec::new());
                log.write_slot_csv(&mut a).unwrap();
                log.write_epoch_csv(&mut b).unwrap();
                (a, b)
            })
            .collect()
    })
}
