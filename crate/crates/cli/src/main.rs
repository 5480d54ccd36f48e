use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ca_sim::config::parse_override;
use ca_sim::experiment::{self, ExperimentSpec};
use ca_sim::{Error, Method, SimConfig};
use clap::{Args, Parser, Subcommand};

/// Carrier-aggregation SCC activation simulator.
#[derive(Debug, Parser)]
#[command(name = "ca-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write metrics, epoch log and summary.
    Run(Common),
    /// Run every method over every seed and write aggregate statistics.
    Compare(Common),
    /// Train Q-tables and dump them into the table directory.
    Train(TableArgs),
    /// Run with frozen Q-tables loaded from the table directory.
    Eval(TableArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config; defaults are used for missing keys or when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; repeatable for compare.
    #[arg(long)]
    seed: Vec<u64>,
    /// Method name; repeatable for compare.
    #[arg(long)]
    method: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-path override, e.g. `--set cell.radius_m=300`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct TableArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of per-UE Q-table CSV files.
    #[arg(long)]
    qtable: PathBuf,
}

fn load_config(c: &Common) -> Result<SimConfig, Error> {
    let overrides = c
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    match &c.config {
        Some(p) => SimConfig::load(p, &overrides),
        None => SimConfig::from_json_str("{}", &overrides),
    }
}

fn methods(c: &Common) -> Result<Vec<Method>, Error> {
    c.method
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Config(ca_sim::ConfigError::new("method", e.to_string())))
}

/// Applies at most one `--seed` and `--method` to a single-run config.
fn single(c: &Common) -> Result<SimConfig, Error> {
    let mut cfg = load_config(c)?;
    if c.seed.len() > 1 || c.method.len() > 1 {
        return Err(Error::InvalidInput(
            "this command takes at most one --seed and one --method".into(),
        ));
    }
    if let Some(&s) = c.seed.first() {
        cfg.seed = s;
    }
    if let Some(&m) = methods(c)?.first() {
        cfg.method = m;
    }
    Ok(cfg)
}

fn report(out: &Path, what: &str) {
    eprintln!("{what} written to {}", out.display());
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(c) => {
            let cfg = single(&c)?;
            let s = experiment::run_and_write(&cfg, &c.out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            report(&c.out, "run");
        }
        Command::Compare(c) => {
            let base = load_config(&c)?;
            let mut ms = methods(&c)?;
            if ms.is_empty() {
                ms = Method::ALL.to_vec();
            }
            let seeds = if c.seed.is_empty() { vec![1, 2, 3, 4, 5] } else { c.seed.clone() };
            let spec = ExperimentSpec::new(base, ms, seeds, c.out.clone())?;
            let threads = experiment::threads_from_env()?;
            let r = experiment::compare(&spec, threads)?;
            for agg in &r.methods {
                let get = |k: &str| agg.metrics.get(k).map(|e| e.mean);
                println!(
                    "{:<11} ftp_tput_mbps={:>7.2} mean_ccs={:.3} energy={:.0}",
                    agg.method.as_str(),
                    get("sum_throughput_bps_ftp").unwrap_or(f64::NAN) / 1e6,
                    get("mean_active_ccs_all").unwrap_or(f64::NAN),
                    get("energy_total").unwrap_or(f64::NAN),
                );
            }
            report(&c.out, "comparison");
        }
        Command::Train(t) => {
            let cfg = single(&t.common)?;
            let (s, _) = experiment::train(&cfg, &t.qtable, &t.common.out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            report(&t.qtable, "q-tables");
        }
        Command::Eval(t) => {
            let cfg = single(&t.common)?;
            let s = experiment::eval(&cfg, &t.qtable, &t.common.out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            report(&t.common.out, "evaluation");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
