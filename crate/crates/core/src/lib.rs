//! Single-cell carrier-aggregation simulator with tabular Q-learning for
//! secondary carrier activation under full and partial observability.
//!
//! The crate is organized bottom-up: [`radio`] turns UE positions into
//! per-carrier capacity, [`traffic`] produces FTP and CBR arrivals,
//! [`observation`] builds and discretizes what an agent sees, [`agents`]
//! holds the policies and the Q-table, [`sim`] runs the slotted loop, and
//! [`experiment`] wraps runs, comparisons, and offline training into
//! file-producing commands.

pub mod agents;
pub mod config;
pub mod error;
pub mod experiment;
pub mod observation;
pub mod radio;
pub mod sim;
pub mod traffic;

pub use agents::{Action, LearningParams, Method, QTable, RewardParams};
pub use config::{ConvergenceParams, SimConfig};
pub use error::{ConfigError, Error, Result};
pub use observation::{DiscretizationConfig, EstimatorParams, Observation, StateIndex};
pub use radio::{CellConfig, ComponentCarrier, Position};
pub use sim::{run, run_with, MetricsLog, RunOptions, RunOutput, RunSummary, World};
pub use traffic::{Buffer, CbrParams, FtpParams, TrafficClass, TrafficSpec};
