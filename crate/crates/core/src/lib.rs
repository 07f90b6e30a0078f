//! Monte Carlo link-level simulator for the uplink of a single-cell in-band
//! full-duplex cooperative OFDMA network.
//!
//! Far users reach the base station either through an amplify-and-forward
//! relay (one of the near users) over a pair of subcarriers spanning two time
//! slots, or near users transmit directly in both slots. Each trial runs the
//! pipeline
//!
//! ```text
//! place users -> draw channels -> select relays -> build pair matrix
//!             -> Munkres assignment -> barrier power allocation -> score
//! ```
//!
//! and [`simulation::run_sweep`] aggregates trials with common random numbers
//! so that configurations can be compared pairwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod link_budget;
pub mod oracle;
pub mod power_allocation;
pub mod relay_selection;
pub mod selftest;
pub mod simulation;
pub mod units;

pub use assignment::{munkres, Assignment, CellWinner, PairValueMatrix};
pub use channel::{ChannelRealization, SiConfig};
pub use error::{Error, Result};
pub use geometry::{CellGeometry, PolarPoint, Topology};
pub use link_budget::{BsPowerPolicy, NormalizedGains, SinrMode};
pub use power_allocation::{Budgets, PowerProfile, SolverReport};
pub use relay_selection::{SelectionResult, SelectionScheme};
pub use simulation::{
    run_sweep, run_trial, ScenarioConfig, SeriesSpec, SweepAxis, SweepPoint, SweepResult,
    TrialResult,
};
