use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, LearningParams};
use crate::error::{ConfigError, Error, Result};
use crate::observation::StateIndex;

/// Dense state-action value table. Unvisited entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_scc: u32,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn new(n_states: usize, n_scc: u32) -> Self {
        let n = n_states * (1usize << n_scc);
        Self {
            n_states,
            n_scc,
            values: vec![0.0; n],
            visits: vec![0; n],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_scc(&self) -> u32 {
        self.n_scc
    }

    pub fn n_actions(&self) -> usize {
        1 << self.n_scc
    }

    fn idx(&self, s: StateIndex, a: Action) -> usize {
        debug_assert!(s.0 < self.n_states && (a.mask() as usize) < self.n_actions());
        s.0 * self.n_actions() + a.mask() as usize
    }

    pub fn value(&self, s: StateIndex, a: Action) -> f64 {
        self.values[self.idx(s, a)]
    }

    pub fn visits(&self, s: StateIndex, a: Action) -> u64 {
        self.visits[self.idx(s, a)]
    }

    pub fn set_value(&mut self, s: StateIndex, a: Action, v: f64) {
        let i = self.idx(s, a);
        self.values[i] = v;
    }

    pub fn row(&self, s: StateIndex) -> &[f64] {
        let n = self.n_actions();
        &self.values[s.0 * n..(s.0 + 1) * n]
    }

    pub fn max_value(&self, s: StateIndex) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax over the row. Ties go to the mask with fewer active SCCs, then
    /// to the lower mask value.
    pub fn greedy(&self, s: StateIndex) -> Action {
        let row = self.row(s);
        let mut best = 0u32;
        for m in 1..row.len() as u32 {
            let (v, bv) = (row[m as usize], row[best as usize]);
            if v > bv || (v == bv && m.count_ones() < best.count_ones()) {
                best = m;
            }
        }
        Action::from_mask(best, self.n_scc)
    }

    pub fn select_action<R: Rng + ?Sized>(&self, s: StateIndex, epsilon: f64, rng: &mut R) -> Action {
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            Action::from_mask(rng.gen_range(0..self.n_actions() as u32), self.n_scc)
        } else {
            self.greedy(s)
        }
    }

    /// One-step Q-learning update with the configured learning rate.
    pub fn update(
        &mut self,
        s: StateIndex,
        a: Action,
        reward: f64,
        s_next: StateIndex,
        p: &LearningParams,
    ) -> Result<()> {
        self.update_with_rate(s, a, reward, s_next, p.alpha, p.gamma)
    }

    pub fn update_with_rate(
        &mut self,
        s: StateIndex,
        a: Action,
        reward: f64,
        s_next: StateIndex,
        alpha: f64,
        gamma: f64,
    ) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::invalid(format!("reward must be finite, got {reward}")));
        }
        let target = reward + gamma * self.max_value(s_next);
        let i = self.idx(s, a);
        self.values[i] += alpha * (target - self.values[i]);
        self.visits[i] += 1;
        Ok(())
    }

    /// Writes `state_index,action_mask,value,visits`, one row per entry.
    /// Values use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state_index", "action_mask", "value", "visits"])?;
        for s in 0..self.n_states {
            for m in 0..self.n_actions() {
                let i = s * self.n_actions() + m;
                w.write_record(&[
                    s.to_string(),
                    m.to_string(),
                    format!("{:?}", self.values[i]),
                    self.visits[i].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<qtable>", e))?;
        Ok(())
    }

    /// Reads a dump produced by [`QTable::write_csv`], checking it against
    /// the expected table shape.
    pub fn read_csv<R: Read>(input: R, n_states: usize, n_scc: u32, origin: &Path) -> Result<Self> {
        let bad = |message: String| Error::QTable {
            path: origin.to_path_buf(),
            message,
        };
        let mut table = QTable::new(n_states, n_scc);
        let mut seen = vec![false; table.values.len()];
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers != vec!["state_index", "action_mask", "value", "visits"] {
            return Err(bad(format!("unexpected header {headers:?}")));
        }
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let row = line + 2;
            let s: usize = field(0).parse().map_err(|_| bad(format!("row {row}: bad state_index")))?;
            let m: u32 = field(1).parse().map_err(|_| bad(format!("row {row}: bad action_mask")))?;
            let v: f64 = field(2).parse().map_err(|_| bad(format!("row {row}: bad value")))?;
            let n: u64 = field(3).parse().map_err(|_| bad(format!("row {row}: bad visits")))?;
            if s >= n_states || m as usize >= table.n_actions() {
                return Err(bad(format!("row {row}: entry ({s}, {m}) out of range")));
            }
            if !v.is_finite() {
                return Err(bad(format!("row {row}: value not finite")));
            }
            let i = s * table.n_actions() + m as usize;
            if std::mem::replace(&mut seen[i], true) {
                return Err(bad(format!("row {row}: duplicate entry ({s}, {m})")));
            }
            table.values[i] = v;
            table.visits[i] = n;
        }
        if let Some(missing) = seen.iter().position(|&x| !x) {
            return Err(bad(format!(
                "missing entry ({}, {})",
                missing / table.n_actions(),
                missing % table.n_actions()
            )));
        }
        Ok(table)
    }
}

pub(crate) fn check_shape(q: &QTable, n_states: usize, n_scc: u32) -> Result<(), ConfigError> {
    if q.n_states != n_states || q.n_scc != n_scc {
        return Err(ConfigError::new(
            "discretization",
            format!(
                "q-table shape {}x{} does not match config {}x{}",
                q.n_states,
                q.n_actions(),
                n_states,
                1 << n_scc
            ),
        ));
    }
    Ok(())
}
