//! Motion by curvature of triple-junction networks.
//!
//! A triod is three regular curves `γ¹, γ², γ³ : [0,1] → Rⁿ` that meet at a
//! common junction `γⁱ(0)` and are pinned at far endpoints `γⁱ(1) = Pⁱ`. The
//! crate evolves a triod by the Special Flow `γ_t = γ_xx / |γ_x|²` with the
//! concurrency and 120° angle conditions at the junction, using a backward
//! Euler step of the system linearised around the current state and a
//! fixed-point correction of the nonlinear remainder.
//!
//! Module map:
//!
//! - [`geometry`]: finite-difference tangents, curvature, lengths, junction residuals.
//! - [`linearized`]: assembly and banded solve of one implicit linear step,
//!   compatibility checks and the Lopatinskii–Shapiro check.
//! - [`solver`]: the fixed-point time step, run loop and singularity monitors.
//! - [`reparam`]: constant-speed resampling and Hausdorff comparison of networks.
//! - [`oracles`]: exact and brute-force reference solutions, test fixtures.
//! - [`io`]: network JSON files, trajectories, configuration files.
//! - [`cli`]: the `netflow` command-line driver.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linearized;
pub mod oracles;
pub mod reparam;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{Boundary, CurveState, Grid, JunctionResiduals, TriodState};
pub use linearized::{FrozenCoefficients, LinearData, LinearStepSystem};
pub use solver::{FlowConfig, RunOutput, StepReport, StopReason};
