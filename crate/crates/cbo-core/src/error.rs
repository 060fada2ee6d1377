//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Failure classes surfaced by the particle system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A caller-supplied value is malformed (wrong dimension, empty input,
    /// non-finite objective value, nonpositive count, ...).
    Input(String),
    /// A parameter combination violates a documented constraint
    /// (kappa outside (0,1], dt*lambda >= 1, undersized reference system, ...).
    Config(String),
    /// The integration produced a non-finite position or objective value.
    /// `step` is the last step that completed with finite state.
    SimulationAbort { step: u64, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::SimulationAbort { step, message } => {
                write!(f, "simulation aborted after step {step}: {message}")
            }
        }
    }
}

impl core::error::Error for Error {}
