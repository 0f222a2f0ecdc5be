//! Quasi-steady-state phasor streams from a feeder under time-varying load.

use alloc::string::String;
use alloc::vec::Vec;

use crate::feeder::FeederError;
use crate::loads::LoadError;
use crate::numerics::{NumericsError, C64};

mod noise;
mod powerflow;
mod scenario;
mod window;

pub use noise::NoiseModel;
pub use powerflow::{solve_powerflow, PowerFlowSettings, PowerFlowSolver};
pub use scenario::{
    balanced_slack, EventKind, FixedSlack, RandomDemand, RandomSlack, ScenarioEvent,
    ScenarioRunner,
};
pub use window::{window, PhasorWindow};

/// Nominal AC frequency, Hz; one slot is half a cycle.
pub const NOMINAL_FREQUENCY: f64 = 60.0;

/// Wall-clock slot length, seconds (metadata only).
pub const SLOT_SECONDS: f64 = 0.5 / NOMINAL_FREQUENCY;

/// Voltages and injected currents of every node/phase in one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasorSnapshot {
    pub slot: u64,
    /// Volts, referenced to the substation phase angles.
    pub v: Vec<C64>,
    /// Amperes, injection positive.
    pub i: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge (max mismatch {max_mismatch:.3e} p.u.)")]
    NoConvergence { max_mismatch: f64 },
    #[error("voltage collapse at node {node} (|V| = {magnitude:.3} p.u.)")]
    Divergence { node: usize, magnitude: f64 },
    #[error("demand vector has length {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("slot {slot}: {source}")]
    PowerFlow { slot: u64, source: PowerFlowError },
    #[error("slot {slot}: event failed: {source}")]
    Event { slot: u64, source: FeederError },
    #[error("events must be sorted by slot and start at slot 1 or later")]
    BadEvents,
    #[error("window needs {needed} snapshots from slot {first}, only {available} available")]
    InsufficientSnapshots {
        first: u64,
        needed: usize,
        available: usize,
    },
    #[error("window snapshots are not consecutive at slot {0}")]
    Gap(u64),
    #[error("invalid noise model: {0}")]
    BadNoise(&'static str),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Load(#[from] LoadError),
}
