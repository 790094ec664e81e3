//! # mracsim
//!
//! Simulation library for model reference adaptive control with an
//! exponentially stable, normalized adaptive law that needs only finite (not
//! persistent) excitation, works without knowing the sign of the plant gain,
//! and never reads the tracking-error states.
//!
//! The crate provides:
//!
//! - [`numerics`]: small dense matrix helpers (determinant, adjugate,
//!   Lyapunov solve) and the fixed-step Euler integrator conventions;
//! - [`filters`]: the first-order, bank, forgetting, extension and
//!   observer-state filter primitives;
//! - [`state_feedback`] / [`output_feedback`]: the regression pipelines that
//!   turn measurable signals into a scalar-regressor equation
//!   `Y(t) = Delta(t) * theta` for the controller parameters;
//! - [`adaptation`]: the normalized adaptive law, classical gradient
//!   baselines, excitation diagnostics and ideal-gain oracles;
//! - [`simulation`]: plants, reference models and the closed-loop run loops;
//! - [`harness`]: JSON scenarios, batch experiments, parameter sweeps, CSV
//!   traces, SVG plots and the acceptance report.
//!
//! Start from the runnable examples (`cargo run --release --example
//! sf_tracking`) or the `mracsim` CLI (`run`, `sweep`, `check` subcommands).

pub mod adaptation;
pub mod error;
pub mod filters;
pub mod harness;
pub mod numerics;
pub mod output_feedback;
pub mod polynomial;
pub mod signal;
pub mod simulation;
pub mod state_feedback;

pub use adaptation::{AdaptiveLaw, NormalizedRegression, RegressionPair};
pub use error::{Error, Result};
pub use numerics::{IntegratorConfig, Matrix, Vector};
pub use polynomial::Polynomial;
pub use signal::ReferenceSignal;
pub use simulation::{run_of, run_sf, OfExperiment, RunOutcome, SfExperiment, SimulationTrace};
