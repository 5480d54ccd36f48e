//! Slotted-time simulation of one cell. Every slot runs in a fixed order:
//!
//! 1. apply activation changes due this slot;
//! 2. generate traffic, enqueue, update arrival estimators;
//! 3. at decision epochs, observe, choose an SCC mask, and schedule it to
//!    take effect `activation_delay_slots` later;
//! 4. split each active carrier max-min fairly among its backlogged UEs
//!    and serve buffers, then update throughput estimators;
//! 5. close reward windows that have run a full decision period and apply
//!    the Q-learning update;
//! 6. record per-class metrics.
//!
//! A decision is judged over the decision period that starts when its mask
//! takes effect.

mod metrics;
mod scheduler;

pub use metrics::{
    convergence_epoch, convergence_slot, energy_total, ClassValues, EpochRow, MetricsLog,
    RunSummary, SlotRow, UeTotals,
};
pub use scheduler::scheduler_equal_share;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    check_shape, compute_reward, policy_all_cc, policy_reactive, policy_single_cc, Action,
    Method, QTable,
};
use crate::config::SimConfig;
use crate::error::Result;
use crate::observation::{
    discretize, observe_full, observe_partial, EstimatorState, Observation, StateIndex,
};
use crate::radio::{cc_capacity_bps, ComponentCarrier, Position};
use crate::traffic::{generate_cbr, generate_ftp, Buffer, TrafficClass, TrafficSpec};
use scheduler::share_bits;
pub use scheduler::{water_fill, Demand};

const MAX_CCS: usize = 16;

const PLACEMENT_STREAM: u64 = 0;
const TRAFFIC_STREAM_BASE: u64 = 1 << 20;
const AGENT_STREAM_BASE: u64 = 2 << 20;

/// A decision whose reward window is open or pending.
#[derive(Debug, Clone)]
struct Decision {
    epoch: u64,
    state: StateIndex,
    action: Action,
    epsilon: f64,
    slots: u64,
    served: Vec<u64>,
    capacity: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct UeContext {
    pub id: usize,
    pub position: Position,
    pub traffic: TrafficSpec,
    pub buffer: Buffer,
    pub estimator: EstimatorState,
    pub active_mask: Action,
    /// Per-slot capacity of one carrier for this UE if it had it alone, bits.
    pub cc_bits_per_slot: f64,
    pub snr: f64,
    /// Service opportunity and bits served in the most recent slot.
    pub last_allocated_bits: u64,
    pub last_served_bits: u64,
    pending: VecDeque<(u64, Decision)>,
    window: Option<Decision>,
    traffic_rng: ChaCha8Rng,
    agent_rng: ChaCha8Rng,
}

impl UeContext {
    pub fn class(&self) -> TrafficClass {
        self.traffic.class()
    }

    pub fn active_ccs(&self) -> u32 {
        self.active_mask.active_ccs()
    }

    /// `(effective_slot, mask)` of scheduled but not yet applied changes.
    pub fn pending_changes(&self) -> impl Iterator<Item = (u64, Action)> + '_ {
        self.pending.iter().map(|(s, d)| (*s, d.action))
    }
}

/// Options that distinguish training from frozen evaluation.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Start from these tables instead of zeros: one per UE, or one when
    /// the config shares a table.
    pub initial_tables: Option<Vec<QTable>>,
    /// Greedy actions and no table updates.
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub tables: Vec<QTable>,
}

pub struct World {
    cfg: SimConfig,
    carriers: Vec<ComponentCarrier>,
    ues: Vec<UeContext>,
    tables: Vec<QTable>,
    frozen: bool,
    n_scc: u32,
    log: MetricsLog,
    epoch_reward_sums: Vec<(f64, u32)>,
    class_cc_slots: [u64; 2],
    class_sizes: [u64; 2],
}

impl World {
    pub fn new(cfg: &SimConfig, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        let carriers = ComponentCarrier::cell_carriers(cfg.n_ccs, cfg.cc_bandwidth_hz)?;
        let n_scc = cfg.n_scc();
        let n_ftp = cfg.n_ftp_ues();

        let mut placement = ChaCha8Rng::seed_from_u64(cfg.seed);
        placement.set_stream(PLACEMENT_STREAM);
        let mut ues = Vec::with_capacity(cfg.n_ues);
        for id in 0..cfg.n_ues {
            let position = Position::sample_uniform(cfg.cell.radius_m, &mut placement);
            // UEs on top of the gNB sit at the reference distance
            let distance = position.distance().max(cfg.cell.ref_distance_m);
            let snr = cfg.cell.snr_at(distance)?;
            let cc_bits_per_slot = cc_capacity_bps(&carriers[0], snr)? * cfg.slot_duration_s;
            let traffic = if id < n_ftp {
                TrafficSpec::Ftp(cfg.ftp)
            } else {
                TrafficSpec::Cbr(cfg.cbr)
            };
            let mut traffic_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            traffic_rng.set_stream(TRAFFIC_STREAM_BASE + id as u64);
            let mut agent_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            agent_rng.set_stream(AGENT_STREAM_BASE + id as u64);
            ues.push(UeContext {
                id,
                position,
                traffic,
                buffer: Buffer::default(),
                estimator: EstimatorState::new(cfg.decision_period_slots),
                active_mask: Action::none(n_scc),
                cc_bits_per_slot,
                snr,
                last_allocated_bits: 0,
                last_served_bits: 0,
                pending: VecDeque::new(),
                window: None,
                traffic_rng,
                agent_rng,
            });
        }

        let n_states = cfg.discretization.n_states();
        let n_tables = if cfg.shared_q_table { 1 } else { cfg.n_ues };
        let tables = match opts.initial_tables {
            Some(tables) => {
                if tables.len() != n_tables {
                    return Err(crate::error::ConfigError::new(
                        "shared_q_table",
                        format!("expected {n_tables} q-tables, got {}", tables.len()),
                    )
                    .into());
                }
                for t in &tables {
                    check_shape(t, n_states, n_scc)?;
                }
                tables
            }
            None => vec![QTable::new(n_states, n_scc); n_tables],
        };

        let mut class_sizes = [0u64; 2];
        for ue in &ues {
            class_sizes[ue.class().index()] += 1;
        }

        let log = MetricsLog {
            method: cfg.method,
            seed: cfg.seed,
            n_ccs: cfg.n_ccs,
            slot_duration_s: cfg.slot_duration_s,
            decision_period_slots: cfg.decision_period_slots,
            activation_delay_slots: cfg.activation_delay_slots,
            energy_per_active_cc_per_slot: cfg.energy_per_active_cc_per_slot,
            slot_rows: Vec::with_capacity(2 * cfg.total_slots as usize),
            epoch_rows: Vec::new(),
            epoch_rewards: Vec::new(),
            ue_totals: ues
                .iter()
                .map(|u| UeTotals {
                    class: u.class(),
                    served_bits: 0,
                    busy_slots: 0,
                })
                .collect(),
        };

        Ok(Self {
            cfg: cfg.clone(),
            carriers,
            ues,
            tables,
            frozen: opts.frozen,
            n_scc,
            log,
            epoch_reward_sums: vec![(0.0, 0); cfg.n_epochs() as usize],
            class_cc_slots: [0; 2],
            class_sizes,
        })
    }

    pub fn ues(&self) -> &[UeContext] {
        &self.ues
    }

    pub fn tables(&self) -> &[QTable] {
        &self.tables
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn carriers(&self) -> &[ComponentCarrier] {
        &self.carriers
    }

    fn table_index(&self, ue: usize) -> usize {
        if self.cfg.shared_q_table {
            0
        } else {
            ue
        }
    }

    fn observe(&self, ue: &UeContext) -> Observation {
        match self.cfg.method {
            Method::QlFull => observe_full(&ue.traffic, &ue.estimator),
            _ => observe_partial(&ue.estimator),
        }
    }

    pub fn step(&mut self, slot: u64) -> Result<()> {
        let period = self.cfg.decision_period_slots;
        let n_scc = self.n_scc as usize;

        // (1) activation changes due now
        for ue in &mut self.ues {
            while ue.pending.front().is_some_and(|(s, _)| *s <= slot) {
                let (_, d) = ue.pending.pop_front().expect("front exists");
                ue.active_mask = d.action;
                ue.window = Some(d);
            }
        }

        // (2) traffic
        for ue in &mut self.ues {
            let arrival = match &ue.traffic {
                TrafficSpec::Ftp(p) => generate_ftp(p, &mut ue.traffic_rng, slot),
                TrafficSpec::Cbr(p) => generate_cbr(p, slot),
            };
            if let Some(a) = arrival {
                ue.buffer.enqueue(&a);
                ue.estimator.on_arrival(a.slot, a.size_bits, &self.cfg.estimator);
            }
        }

        // (3) decisions
        if slot % period == 0 {
            let epoch = slot / period;
            let epsilon = if self.cfg.method.is_learning() && !self.frozen {
                self.cfg.learning.epsilon_at(epoch)
            } else {
                0.0
            };
            for i in 0..self.ues.len() {
                let state = discretize(&self.observe(&self.ues[i]), &self.cfg.discretization);
                let t = self.table_index(i);
                let ue = &mut self.ues[i];
                let action = match self.cfg.method {
                    Method::AllCc => policy_all_cc(self.n_scc),
                    Method::SingleCc => policy_single_cc(self.n_scc),
                    Method::Reactive => policy_reactive(
                        &ue.buffer,
                        ue.cc_bits_per_slot.floor() as u64,
                        period,
                        self.n_scc,
                    ),
                    Method::QlFull | Method::QlPartial => {
                        self.tables[t].select_action(state, epsilon, &mut ue.agent_rng)
                    }
                };
                let decision = Decision {
                    epoch,
                    state,
                    action,
                    epsilon,
                    slots: 0,
                    served: vec![0; n_scc],
                    capacity: vec![0; n_scc],
                };
                let effective = slot + self.cfg.activation_delay_slots;
                if effective == slot {
                    ue.active_mask = action;
                    ue.window = Some(decision);
                } else {
                    ue.pending.push_back((effective, decision));
                }
            }
        }

        // (4) scheduling: carriers are filled PCC first, then SCCs in index
        // order, each split max-min fairly among UEs with data left for it
        let n_ccs = self.carriers.len();
        let n_ues = self.ues.len();
        let mut eligible = vec![0usize; n_ccs];
        for ue in &self.ues {
            if ue.buffer.pending_bits > 0 {
                eligible[0] += 1;
                for (c, e) in eligible.iter_mut().enumerate().skip(1) {
                    if ue.active_mask.is_active(c - 1) {
                        *e += 1;
                    }
                }
            }
        }
        let mut residual: Vec<u64> = self.ues.iter().map(|u| u.buffer.pending_bits).collect();
        let mut grants = vec![[0u64; MAX_CCS]; n_ues];
        let mut members = Vec::with_capacity(n_ues);
        let mut demands = Vec::with_capacity(n_ues);
        for c in 0..n_ccs {
            members.clear();
            demands.clear();
            for (i, ue) in self.ues.iter().enumerate() {
                let on = c == 0 || ue.active_mask.is_active(c - 1);
                if on && residual[i] > 0 {
                    members.push(i);
                    demands.push(Demand {
                        bits_per_slot: ue.cc_bits_per_slot,
                        backlog_bits: residual[i],
                    });
                }
            }
            for (&i, g) in members.iter().zip(water_fill(&demands)) {
                grants[i][c] = g;
                residual[i] -= g;
            }
        }

        let slot_s = self.cfg.slot_duration_s;
        let beta = &self.cfg.estimator;
        for (ue, grant) in self.ues.iter_mut().zip(&grants) {
            let backlogged = ue.buffer.pending_bits > 0;
            let allocated: u64 = grant[..n_ccs].iter().sum();
            let served = ue.buffer.serve(allocated);
            ue.last_allocated_bits = allocated;
            ue.last_served_bits = served;
            let totals = &mut self.log.ue_totals[ue.id];
            totals.served_bits += served;
            totals.busy_slots += u64::from(backlogged);
            ue.estimator.on_service(served, slot_s, beta);

            if let Some(w) = ue.window.as_mut() {
                for i in 0..n_scc {
                    let c = i + 1;
                    if ue.active_mask.is_active(i) {
                        // measured against the plain equal share; an idle UE
                        // still holds a share it cannot use
                        let n = eligible[c] + usize::from(!backlogged);
                        w.served[i] += grant[c];
                        w.capacity[i] += share_bits(ue.cc_bits_per_slot, n);
                    }
                }
                w.slots += 1;
            }
        }

        // (5) rewards
        for i in 0..self.ues.len() {
            let done = self.ues[i].window.as_ref().is_some_and(|w| w.slots >= period);
            if !done {
                continue;
            }
            let w = self.ues[i].window.take().expect("window present");
            let reward = compute_reward(w.action, &w.served, &w.capacity, &self.cfg.reward)?;
            if self.cfg.method.is_learning() && !self.frozen {
                let s_next = discretize(&self.observe(&self.ues[i]), &self.cfg.discretization);
                let t = self.table_index(i);
                self.tables[t].update(w.state, w.action, reward, s_next, &self.cfg.learning)?;
            }
            self.log.epoch_rows.push(EpochRow {
                epoch: w.epoch,
                ue_id: i,
                state_index: w.state.0,
                action_mask: w.action.mask(),
                reward,
                epsilon: w.epsilon,
            });
            let acc = &mut self.epoch_reward_sums[w.epoch as usize];
            acc.0 += reward;
            acc.1 += 1;
        }

        // (6) metrics
        let mut served = [0u64; 2];
        let mut active = [0u64; 2];
        for ue in &self.ues {
            let c = ue.class().index();
            served[c] += ue.last_served_bits;
            active[c] += u64::from(ue.active_ccs());
        }
        for class in TrafficClass::ALL {
            let c = class.index();
            if self.class_sizes[c] == 0 {
                continue;
            }
            self.class_cc_slots[c] += active[c];
            self.log.slot_rows.push(SlotRow {
                slot,
                class,
                served_bits: served[c],
                active_ccs: active[c],
                n_ues: self.class_sizes[c],
                active_cc_slots_cum: self.class_cc_slots[c],
            });
        }
        Ok(())
    }

    /// Closes the log: per-epoch mean rewards for every epoch whose window
    /// completed for all UEs.
    pub fn finish(mut self) -> RunOutput {
        let n_ues = self.ues.len() as u32;
        self.log.epoch_rewards = self
            .epoch_reward_sums
            .iter()
            .take_while(|(_, n)| *n == n_ues)
            .map(|(s, n)| s / f64::from(*n))
            .collect();
        RunOutput {
            log: self.log,
            tables: self.tables,
        }
    }
}

pub fn run_with(cfg: &SimConfig, opts: RunOptions) -> Result<RunOutput> {
    let mut world = World::new(cfg, opts)?;
    for slot in 0..cfg.total_slots {
        world.step(slot)?;
    }
    Ok(world.finish())
}

/// Runs a full simulation from a fresh state.
pub fn run(cfg: &SimConfig) -> Result<MetricsLog> {
    Ok(run_with(cfg, RunOptions::default())?.log)
}
