//! Online detection of admittance changes and sparse localization of the
//! change `ΔY = Y¹ − Y⁰`.
//!
//! A [`DetectorState`] holds the believed admittance `Y⁰` and flags slot `k`
//! when `‖I(k) − Y⁰·V(k)‖₂` exceeds `γ`. [`localize`] then recovers a sparse
//! symmetric `ΔY` from a few post-event snapshots and [`classify`] reads the
//! event type off its block pattern.

use alloc::string::String;

use crate::numerics::NumericsError;

mod detect;
mod localize;
mod whiteness;

pub use detect::{
    calibrate_default, calibrate_threshold, residual, resolution_floor, Alarm, DetectorState,
    ResidualSample,
};
pub use localize::{
    classify, localize, observable_nodes, verify_holdout, Classification, EventRecord,
    LocalizeSettings,
};
pub use whiteness::{normal_quantile, turning_point_test, WhitenessReport};

/// Default multiplier on the calibrated residual quantile.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.5;

/// Default per-unit residual floor (the power-flow tolerance).
pub const DEFAULT_FLOOR_PU: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EventError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("localization infeasible at slot {slot}: {advice}")]
    Infeasible { slot: u64, advice: String },
    #[error("localization rejected at slot {slot}: {advice}")]
    Rejected { slot: u64, advice: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
