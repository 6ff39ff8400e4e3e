//! Spin-½ quantum feedback control under homodyne QND measurement.
//!
//! The conditional qubit state lives in the disc `D² = {(λ, ν): λ² + ν(ν − 1) ≤ 0}`
//! and follows a two-dimensional Itô equation driven by a single innovations
//! process. This crate provides:
//!
//! * [`state_space`]: the disc, its polar chart and the pure-state circle,
//! * [`dynamics`]: the feedback controller, SDE coefficients and generators,
//! * [`lyapunov`]: the Lyapunov function and a grid certificate for `ℒV < 0`,
//! * [`simulator`]: seeded Euler–Maruyama paths and Monte Carlo ensembles,
//! * [`pure_state`]: the one-dimensional pure-state chart, exit-time Monte Carlo
//!   and the power-series eigenvalue recursion,
//! * [`cli`] and [`export`]: the `qfc` command-line front end and its file formats.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod lyapunov;
pub mod pure_state;
pub mod rng;
pub mod simulator;
pub mod state_space;
mod stats;

pub use dynamics::{DriftDiffusion, ExperimentParams};
pub use error::{Error, Result};
pub use lyapunov::{CertificateParams, CertificateResult, LyapunovConstants};
pub use pure_state::{PureParams, SpectrumResult};
pub use simulator::{EnsembleSummary, SimConfig, Trajectory};
pub use state_space::{PolarState, PureAngle, QubitState};
