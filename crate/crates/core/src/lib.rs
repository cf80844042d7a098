//! Discrete-event simulator of an LTE small cell and WLAN access points
//! sharing one unlicensed channel. LTE leaves mute subframes to WLAN, senses
//! how many of them WLAN actually seizes, and re-sizes its mute pattern
//! every reallocation cycle.
//!
//! Module map:
//! - [`topology`]: dual-stripe floor, node placement, pathloss.
//! - [`phy`]: link budget, SINR, CCA, MCS selection, HARQ.
//! - [`lte_mac`]: subframe patterns and the downlink scheduler.
//! - [`wlan_mac`]: DCF contention state machine.
//! - [`coexistence`]: sensing ledger and the mute-pattern controller.
//! - [`traffic`]: Poisson sources.
//! - [`engine`]: event loop, drops, aggregation.
//! - [`metrics`], [`output`], [`experiment`], [`config`]: reporting and runs.

pub mod coexistence;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod lte_mac;
pub mod metrics;
pub mod output;
pub mod phy;
pub mod topology;
pub mod traffic;
pub mod wlan_mac;

/// Simulation time in integer microseconds.
pub type Micros = u64;

pub use config::{parse_config, RunConfig, RunKind};
pub use engine::{aggregate_drops, run_drop, run_drops, DropResult, Summary};
pub use experiment::{run_experiment, Experiment};
