//! File-producing experiment commands: single runs, multi-seed comparisons,
//! and offline training followed by frozen evaluation. Every file is written
//! to a temporary sibling and renamed into place, so readers see either the
//! complete file or nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::agents::{Method, QTable};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::sim::{run_with, RunOptions, RunOutput, RunSummary};
use crate::traffic::TrafficClass;

/// Environment variable capping the number of worker threads for `compare`.
pub const THREADS_ENV: &str = "CA_SIM_THREADS";

pub const METRICS_FILE: &str = "metrics.csv";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Writes `path` atomically: the content goes to a temporary file in the
/// same directory which is renamed over the target once complete.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w).map_err(|e| Error::io(path, e))
    })
}

/// Methods, seeds and output directory for a batch of runs.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(base: SimConfig, methods: Vec<Method>, seeds: Vec<u64>, out_dir: PathBuf) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::invalid("seed list is empty"));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(Error::invalid("seed list contains duplicates"));
        }
        if methods.is_empty() {
            return Err(Error::invalid("method list is empty"));
        }
        if methods.iter().collect::<BTreeSet<_>>().len() != methods.len() {
            return Err(Error::invalid("method list contains duplicates"));
        }
        base.validate()?;
        Ok(Self {
            base,
            methods,
            seeds,
            out_dir,
        })
    }

    /// Config for one (method, seed) cell of the grid.
    pub fn config_for(&self, method: Method, seed: u64) -> SimConfig {
        let mut cfg = self.base.clone();
        cfg.method = method;
        cfg.seed = seed;
        cfg
    }
}

/// Runs one simulation and writes the slot metrics, the decision-epoch log
/// and the summary into `out_dir`.
pub fn run_and_write(cfg: &SimConfig, out_dir: &Path) -> Result<RunSummary> {
    let out = run_with(cfg, RunOptions::default())?;
    write_run(cfg, &out, out_dir)
}

fn write_run(cfg: &SimConfig, out: &RunOutput, out_dir: &Path) -> Result<RunSummary> {
    write_atomic(&out_dir.join(METRICS_FILE), |w| out.log.write_slot_csv(w))?;
    write_atomic(&out_dir.join(EPOCHS_FILE), |w| out.log.write_epoch_csv(w))?;
    let summary = out
        .log
        .summary(cfg.convergence.window_epochs, cfg.convergence.band);
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Worker count from `CA_SIM_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::invalid(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        },
    }
}

/// Runs every (method, seed) pair. Results come back in grid order
/// whatever the thread count, and each run depends only on its own config.
pub fn run_grid(spec: &ExperimentSpec, threads: Option<usize>) -> Result<Vec<RunSummary>> {
    let cells: Vec<(Method, u64)> = spec
        .methods
        .iter()
        .flat_map(|&m| spec.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let conv = spec.base.convergence;
    let job = || {
        cells
            .par_iter()
            .map(|&(m, s)| {
                let out = run_with(&spec.config_for(m, s), RunOptions::default())?;
                Ok(out.log.summary(conv.window_epochs, conv.band))
            })
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(job),
    }
}

/// Mean and 95% confidence half-width (normal approximation) of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
    /// Seeds that contributed a value.
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let ci95 = if n < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Some(Self { mean, ci95, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub metrics: BTreeMap<String, Estimate>,
    /// Per-seed convergence slot; `None` when the run never settled.
    pub convergence_slot: BTreeMap<u64, Option<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodAggregate>,
    pub runs: Vec<RunSummary>,
}

impl CompareReport {
    pub fn method(&self, m: Method) -> Option<&MethodAggregate> {
        self.methods.iter().find(|a| a.method == m)
    }

    pub fn runs_for(&self, m: Method) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(move |r| r.method == m)
    }

    pub fn write_aggregate_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "metric", "mean", "ci95"])?;
        for agg in &self.methods {
            for (name, est) in &agg.metrics {
                w.write_record([
                    agg.method.as_str(),
                    name,
                    &format!("{:?}", est.mean),
                    &format!("{:?}", est.ci95),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<aggregate>", e))?;
        Ok(())
    }
}

fn metric_samples(r: &RunSummary) -> Vec<(String, Option<f64>)> {
    let mut v = Vec::new();
    for c in TrafficClass::ALL {
        let tag = c.as_str().to_ascii_lowercase();
        v.push((format!("sum_throughput_bps_{tag}"), r.sum_user_throughput_bps.get(c)));
        v.push((format!("served_throughput_bps_{tag}"), r.mean_throughput_bps.get(c)));
        v.push((format!("mean_active_ccs_{tag}"), r.mean_active_ccs.get(c)));
        v.push((
            format!("mean_active_ccs_after_delay_{tag}"),
            r.mean_active_ccs_after_delay.get(c),
        ));
    }
    v.push(("mean_active_ccs_all".into(), r.mean_active_ccs_all));
    v.push(("energy_total".into(), Some(r.energy_total)));
    v.push(("convergence_slot".into(), r.convergence_slot.map(|s| s as f64)));
    v.push(("final_window_reward".into(), r.final_window_reward));
    v
}

pub fn aggregate(seeds: &[u64], methods: &[Method], runs: Vec<RunSummary>) -> CompareReport {
    let methods = methods
        .iter()
        .map(|&m| {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.method == m).collect();
            let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in &mine {
                for (name, x) in metric_samples(r) {
                    let e = samples.entry(name).or_default();
                    if let Some(x) = x {
                        e.push(x);
                    }
                }
            }
            MethodAggregate {
                method: m,
                metrics: samples
                    .into_iter()
                    .filter_map(|(k, xs)| Estimate::from_samples(&xs).map(|e| (k, e)))
                    .collect(),
                convergence_slot: mine.iter().map(|r| (r.seed, r.convergence_slot)).collect(),
            }
        })
        .collect();
    CompareReport {
        seeds: seeds.to_vec(),
        methods,
        runs,
    }
}

/// Runs the method × seed grid and writes `aggregate.csv` and `summary.json`.
pub fn compare(spec: &ExperimentSpec, threads: Option<usize>) -> Result<CompareReport> {
    let runs = run_grid(spec, threads)?;
    let report = aggregate(&spec.seeds, &spec.methods, runs);
    write_atomic(&spec.out_dir.join(AGGREGATE_FILE), |w| report.write_aggregate_csv(w))?;
    write_json(&spec.out_dir.join(SUMMARY_FILE), &report)?;
    Ok(report)
}

/// File holding the table of `ue`, or the single shared table.
pub fn table_path(dir: &Path, ue: usize, shared: bool) -> PathBuf {
    if shared {
        dir.join("shared.csv")
    } else {
        dir.join(format!("ue_{ue}.csv"))
    }
}

fn require_learning(cfg: &SimConfig) -> Result<()> {
    if cfg.method.is_learning() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "method {} has no Q-table; use QL_FULL or QL_PARTIAL",
            cfg.method
        )))
    }
}

/// Learns from a fresh table, then dumps every table into `table_dir` and
/// the run outputs into `out_dir`.
pub fn train(cfg: &SimConfig, table_dir: &Path, out_dir: &Path) -> Result<(RunSummary, Vec<QTable>)> {
    require_learning(cfg)?;
    cfg.validate()?;
    let out = run_with(cfg, RunOptions::default())?;
    for (i, t) in out.tables.iter().enumerate() {
        write_atomic(&table_path(table_dir, i, cfg.shared_q_table), |w| t.write_csv(w))?;
    }
    let summary = write_run(cfg, &out, out_dir)?;
    Ok((summary, out.tables))
}

/// Loads the tables written by [`train`] for this config's shape.
pub fn load_tables(cfg: &SimConfig, table_dir: &Path) -> Result<Vec<QTable>> {
    cfg.validate()?;
    let n = if cfg.shared_q_table { 1 } else { cfg.n_ues };
    let n_states = cfg.discretization.n_states();
    (0..n)
        .map(|i| {
            let path = table_path(table_dir, i, cfg.shared_q_table);
            let file = File::open(&path).map_err(|e| Error::QTable {
                path: path.clone(),
                message: e.to_string(),
            })?;
            QTable::read_csv(file, n_states, cfg.n_scc(), &path)
        })
        .collect()
}

/// Runs with the loaded tables frozen: no exploration and no updates. The
/// table files are only read.
pub fn eval(cfg: &SimConfig, table_dir: &Path, out_dir: &Path) -> Result<RunSummary> {
    require_learning(cfg)?;
    let tables = load_tables(cfg, table_dir)?;
    let out = run_with(
        cfg,
        RunOptions {
            initial_tables: Some(tables),
            frozen: true,
        },
    )?;
    write_run(cfg, &out, out_dir)
}
