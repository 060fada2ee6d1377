//! Rescaled consensus-based optimization (CBO) particle system.
//!
//! The interacting system of N particles follows
//!
//! ```text
//! dX_i = -lambda (X_i - kappa m_alpha) dt
//!        + sigma (delta I + D(X_i - kappa m_alpha)) dB_i
//! ```
//!
//! where `m_alpha` is the weighted consensus point of the ensemble under
//! Gibbs weights `exp(-alpha f)`, `D(v) = diag(|v_1|, ..., |v_d|)` is the
//! anisotropic diffusion, and `kappa` in (0,1] rescales the consensus
//! attractor. The minimizer estimate is recovered from the long-time
//! ensemble mean divided by `kappa`.
//!
//! The crate is `no_std`-compatible (requires `alloc`); disable the default
//! `std` feature for embedded use. All transcendental functions go through
//! [`math`] so results are bit-identical across platforms and worker counts.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod consensus;
pub mod dynamics;
pub mod error;
pub mod math;
pub mod objectives;
pub mod randomness;

pub use dynamics::{CBOParams, Ensemble};
pub use error::Error;
pub use objectives::ObjectiveSpec;
pub use randomness::{NoisePlan, PurposeTag};
