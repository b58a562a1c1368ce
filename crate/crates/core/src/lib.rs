//! Shared-control laboratory for entropy-regularized LQ-game virtual
//! fixtures.
//!
//! The robot assist is the best response of a one-step LQ game whose cost
//! pulls the robot action toward a scaled copy of the operator's command
//! with strength τ. τ = 0 is the hard Nash (LQR) fixture; τ → ∞ passes
//! the operator's command through.
//!
//! Module map:
//!
//! * [`model`]: mass–damper plant, state and reference types
//! * [`riccati`]: DARE solver and spectral radius
//! * [`controller`]: Soft-Nash gains, stage policies, classic fixture, modes
//! * [`human`]: synthetic operator and seeded target trajectory
//! * [`trial`]: closed-loop trial simulation and stability report
//! * [`metrics`]: RMS error, conflict energy, assist effort, NFI
//! * [`harness`]: mode × seed sweeps, BalancedScore, CSV/JSON output

pub mod config;
pub mod controller;
pub mod error;
pub mod harness;
pub mod human;
pub mod metrics;
pub mod model;
pub mod riccati;
pub mod rng;
pub mod trial;

pub use error::{Error, Result};
