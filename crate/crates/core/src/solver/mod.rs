//! Time stepping of the Special Flow.
//!
//! A step from `ψ` freezes coefficients at `σ` (by default `σ = ψ`), factorises
//! the linear step matrix once and iterates
//!
//! ```text
//! γ⁽ᵏ⁺¹⁾ = L⁻¹(f(γ⁽ᵏ⁾), η, b(γ⁽ᵏ⁾), ψ),    γ⁽⁰⁾ = ψ,
//! ```
//!
//! until consecutive iterates differ by less than `picard_tol` at every node.
//! At the fixed point the interior rows are the backward Euler discretisation
//! of `γ_t = γ_xx/|γ_x|²` and the junction rows reduce to `Σᵢ τⁱ(0) = 0`.

mod curve;

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, norm, TriodState};
use crate::linearized::{curve_arrays, FrozenCoefficients, LinearData, StepOperator};
use crate::reparam;

pub use curve::{run_curve, step_curve, CurveStepper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Resample the initial network to this many cells per curve.
    pub n_cells: Option<usize>,
    pub dt: f64,
    pub t_end: f64,
    /// Fixed-point tolerance on the max node displacement, in length units.
    pub picard_tol: f64,
    pub max_picard: usize,
    pub angle_tol: f64,
    pub reg_floor_factor: f64,
    /// Defaults to `10³/L₀`.
    pub curvature_blowup_threshold: Option<f64>,
    /// Defaults to `5h·L₀`.
    pub length_collapse_threshold: Option<f64>,
    pub relinearize_every: usize,
    /// Constant-speed resampling after every accepted step.
    pub resample: bool,
    pub snapshot_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n_cells: None,
            dt: 1e-4,
            t_end: 1.0,
            picard_tol: 1e-10,
            max_picard: 25,
            angle_tol: 1e-6,
            reg_floor_factor: 0.5,
            curvature_blowup_threshold: None,
            length_collapse_threshold: None,
            relinearize_every: 1,
            resample: false,
            snapshot_every: 1,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("picard_tol", self.picard_tol)?;
        positive("angle_tol", self.angle_tol)?;
        if !(self.reg_floor_factor > 0.0 && self.reg_floor_factor < 1.0) {
            return Err(Error::Config(format!(
                "reg_floor_factor must lie in (0, 1), got {}",
                self.reg_floor_factor
            )));
        }
        if self.max_picard < 2 {
            return Err(Error::Config(format!(
                "max_picard must be at least 2, got {}",
                self.max_picard
            )));
        }
        if let Some(v) = self.curvature_blowup_threshold {
            positive("curvature_blowup_threshold", v)?;
        }
        if let Some(v) = self.length_collapse_threshold {
            positive("length_collapse_threshold", v)?;
        }
        if self.relinearize_every == 0 {
            return Err(Error::Config("relinearize_every must be at least 1".into()));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        if let Some(n) = self.n_cells {
            if n < geometry::MIN_CELLS {
                return Err(Error::GridTooCoarse {
                    n_cells: n,
                    min: geometry::MIN_CELLS,
                });
            }
        }
        Ok(())
    }

    fn thresholds(&self, n_cells: usize, initial_length: f64) -> (f64, f64) {
        let h = 1.0 / n_cells as f64;
        (
            self.length_collapse_threshold.unwrap_or(5.0 * h * initial_length),
            self.curvature_blowup_threshold.unwrap_or(1e3 / initial_length),
        )
    }
}

/// Diagnostics of one accepted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub time: f64,
    /// One entry per curve.
    pub lengths: Vec<f64>,
    pub total_length: f64,
    pub l2_curvature: f64,
    pub angle_residual: f64,
    pub min_speed: f64,
    pub picard_iters: usize,
    pub picard_final_residual: f64,
}

impl StepReport {
    /// Diagnostics of `state`, with the given fixed-point statistics.
    pub fn of_triod(state: &TriodState, picard_iters: usize, picard_final_residual: f64) -> Result<Self> {
        let lengths = state.lengths()?;
        Ok(Self {
            time: state.time(),
            lengths: lengths.to_vec(),
            total_length: lengths.iter().sum(),
            l2_curvature: geometry::l2_curvature(state)?,
            angle_residual: geometry::junction_residuals(state)?.angle_residual,
            min_speed: state.min_speed(),
            picard_iters,
            picard_final_residual,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    HorizonReached,
    /// Index of the collapsing curve.
    LengthCollapse(usize),
    CurvatureBlowup,
    RegularityFloor,
    PicardDivergence,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::HorizonReached => write!(f, "horizon_reached"),
            StopReason::LengthCollapse(i) => write!(f, "length_collapse({i})"),
            StopReason::CurvatureBlowup => write!(f, "curvature_blowup"),
            StopReason::RegularityFloor => write!(f, "regularity_floor"),
            StopReason::PicardDivergence => write!(f, "picard_divergence"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub state: S,
    pub report: StepReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput<S> {
    /// The initial state, every `snapshot_every`-th step and the final state.
    pub snapshots: Vec<Snapshot<S>>,
    /// One report per accepted step.
    pub reports: Vec<StepReport>,
    pub stop: StopReason,
    /// Configuration after defaults were resolved.
    pub config: FlowConfig,
}

impl<S> RunOutput<S> {
    pub fn final_state(&self) -> &S {
        &self.snapshots.last().expect("a run records its initial state").state
    }
}

/// `(1/|γ_x|² - 1/|σ_x|²) γ_xx` at a single node.
pub fn special_flow_forcing(
    gamma_x: ArrayView1<f64>,
    gamma_xx: ArrayView1<f64>,
    sigma_speed: f64,
) -> Array1<f64> {
    let g2 = gamma_x.dot(&gamma_x);
    &gamma_xx * (1.0 / g2 - 1.0 / (sigma_speed * sigma_speed))
}

/// Nonlinear remainder of the interior equation, node-wise on every curve.
pub fn nonlinearity_f(gamma: &TriodState, coeffs: &FrozenCoefficients) -> Result<[Array2<f64>; 3]> {
    let mut out: [Array2<f64>; 3] = Default::default();
    for (i, c) in gamma.curves().iter().enumerate() {
        let d1 = geometry::first_derivative(c);
        let mut d2 = geometry::second_derivative(c);
        let s = geometry::speeds(d1.view())?;
        let a = coeffs.diffusion(i);
        for (j, mut row) in d2.rows_mut().into_iter().enumerate() {
            row *= 1.0 / (s[j] * s[j]) - a[j];
        }
        out[i] = d2;
    }
    Ok(out)
}

/// Nonlinear remainder of the angle condition,
/// `Σᵢ (1/|γⁱ_x| - 1/|σⁱ_x|) γⁱ_x + σⁱ_x ⟨γⁱ_x, σⁱ_x⟩ / |σⁱ_x|³` at the junction.
pub fn nonlinearity_b(gamma: &TriodState, coeffs: &FrozenCoefficients) -> Result<Array1<f64>> {
    let mut b = Array1::zeros(gamma.dim());
    for (i, c) in gamma.curves().iter().enumerate() {
        let gx = geometry::junction_derivative(c);
        let g = norm(gx.view());
        if !(g > 0.0) {
            return Err(Error::Regularity { node: 0, speed: g });
        }
        let sx = coeffs.junction_derivative(i);
        let s = coeffs.junction_speed(i);
        b += &(&gx * (1.0 / g - 1.0 / s));
        b += &(&sx * (gx.dot(&sx) / (s * s * s)));
    }
    Ok(b)
}

/// Outcome of a regularity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityCheck {
    pub passed: bool,
    pub min_speed: f64,
}

pub fn regularity_guard(state: &TriodState, floor: f64) -> RegularityCheck {
    let min_speed = state.min_speed();
    RegularityCheck {
        passed: min_speed >= floor,
        min_speed,
    }
}

/// `factor · min |σ_x|`.
pub fn regularity_floor(sigma: &TriodState, factor: f64) -> f64 {
    factor * sigma.min_speed()
}

/// Result of the fixed-point loop of one step.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub state: TriodState,
    /// Max node displacement between consecutive iterates.
    pub displacements: Vec<f64>,
}

impl PicardOutcome {
    pub fn iterations(&self) -> usize {
        self.displacements.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.displacements.last().copied().unwrap_or(0.0)
    }
}

/// Shared acceptance rule for the fixed-point loops: converged, keep going,
/// or diverged (growing displacement or exhausted iterations).
pub(crate) fn picard_verdict(displacements: &[f64], tol: f64, max_iter: usize) -> Result<bool> {
    let k = displacements.len();
    let d = displacements[k - 1];
    if !d.is_finite() {
        return Err(Error::PicardDivergence {
            iterations: k,
            displacement: d,
        });
    }
    if d < tol {
        return Ok(true);
    }
    if (k >= 2 && d > displacements[k - 2]) || k >= max_iter {
        return Err(Error::PicardDivergence {
            iterations: k,
            displacement: d,
        });
    }
    Ok(false)
}

/// Fixed-point iterations of one step from `state` with a factorised operator.
pub fn picard(
    state: &TriodState,
    coeffs: &FrozenCoefficients,
    op: &StepOperator,
    config: &FlowConfig,
) -> Result<PicardOutcome> {
    let time = state.time() + op.dt();
    let psi = curve_arrays(state);
    let eta = state.endpoints().clone();
    let mut iterate = state.clone();
    let mut displacements = Vec::new();
    loop {
        let data = LinearData {
            f: nonlinearity_f(&iterate, coeffs)?,
            eta: eta.clone(),
            b: nonlinearity_b(&iterate, coeffs)?,
            psi: psi.clone(),
        };
        let next = op.solve(&data)?.into_triod(time)?;
        let check = regularity_guard(&next, coeffs.reg_floor());
        if !check.passed {
            let node = next
                .curves()
                .iter()
                .map(|c| c.min_cell_speed())
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            return Err(Error::Regularity {
                node,
                speed: check.min_speed,
            });
        }
        displacements.push(next.max_displacement(&iterate));
        iterate = next;
        if picard_verdict(&displacements, config.picard_tol, config.max_picard)? {
            return Ok(PicardOutcome {
                state: iterate,
                displacements,
            });
        }
    }
}

/// One step of length `config.dt` with coefficients frozen at `coeffs`.
pub fn step(
    state: &TriodState,
    coeffs: &FrozenCoefficients,
    config: &FlowConfig,
) -> Result<(TriodState, StepReport)> {
    let op = StepOperator::new(coeffs, config.dt)?;
    step_with(state, coeffs, &op, config)
}

/// As [`step`], reusing a factorised operator (its `dt` is used).
pub fn step_with(
    state: &TriodState,
    coeffs: &FrozenCoefficients,
    op: &StepOperator,
    config: &FlowConfig,
) -> Result<(TriodState, StepReport)> {
    let out = picard(state, coeffs, op, config)?;
    let report = StepReport::of_triod(&out.state, out.iterations(), out.final_residual())?;
    Ok((out.state, report))
}

/// Stop condition after an accepted step, in priority order.
pub(crate) fn monitor(
    lengths: &[f64],
    l2_curvature: f64,
    min_speed: f64,
    floor: f64,
    collapse: f64,
    blowup: f64,
) -> Option<StopReason> {
    let (i, min_len) = lengths
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    if min_len <= collapse {
        Some(StopReason::LengthCollapse(i))
    } else if l2_curvature >= blowup {
        Some(StopReason::CurvatureBlowup)
    } else if min_speed < floor {
        Some(StopReason::RegularityFloor)
    } else {
        None
    }
}

/// Maps errors that end a run gracefully to their stop reason.
pub(crate) fn stop_for(err: &Error) -> Option<StopReason> {
    match err {
        Error::Regularity { .. } => Some(StopReason::RegularityFloor),
        Error::PicardDivergence { .. } => Some(StopReason::PicardDivergence),
        _ => None,
    }
}

/// Length of the next step, or `None` once `t_end` is reached.
pub(crate) fn next_dt(t: f64, config: &FlowConfig) -> Option<f64> {
    let rest = config.t_end - t;
    if rest <= 1e-9 * config.dt {
        None
    } else if rest < config.dt * (1.0 + 1e-9) {
        Some(rest)
    } else {
        Some(config.dt)
    }
}

/// Evolves `initial` until `t_end` or a stop condition.
pub fn run(initial: &TriodState, config: &FlowConfig) -> Result<RunOutput<TriodState>> {
    config.validate()?;
    let mut state = match config.n_cells {
        Some(n) if n != initial.n_cells() => reparam::resample_triod(initial, n)?,
        _ => initial.clone(),
    };
    let residuals = geometry::junction_residuals(&state)?;
    if !residuals.admissible(config.angle_tol) {
        return Err(Error::InadmissibleInitialData {
            angle_residual: residuals.angle_residual,
            concurrency_residual: residuals.concurrency_residual,
            tolerance: config.angle_tol,
        });
    }
    let l0 = state.total_length()?;
    let (collapse, blowup) = config.thresholds(state.n_cells(), l0);
    let mut effective = config.clone();
    effective.n_cells = Some(state.n_cells());
    effective.length_collapse_threshold = Some(collapse);
    effective.curvature_blowup_threshold = Some(blowup);
    log::info!(
        "run: N = {}, dt = {:e}, t_end = {}, collapse below {collapse:e}, blowup above {blowup:e}",
        state.n_cells(),
        config.dt,
        config.t_end
    );

    let mut snapshots = vec![Snapshot {
        report: StepReport::of_triod(&state, 0, 0.0)?,
        state: state.clone(),
    }];
    let mut reports = Vec::new();
    let mut window: Option<(FrozenCoefficients, StepOperator)> = None;
    let mut steps = 0usize;
    let stop = loop {
        let Some(dt) = next_dt(state.time(), config) else {
            break StopReason::HorizonReached;
        };
        if steps % config.relinearize_every == 0 || window.is_none() {
            let floor = regularity_floor(&state, config.reg_floor_factor);
            let coeffs = FrozenCoefficients::with_floor(state.clone(), floor)?;
            let op = StepOperator::new(&coeffs, dt)?;
            window = Some((coeffs, op));
        }
        let (coeffs, op) = window.as_mut().expect("window initialised above");
        if op.dt() != dt {
            *op = StepOperator::new(coeffs, dt)?;
        }
        let (next, mut report) = match step_with(&state, coeffs, op, config) {
            Ok(r) => r,
            Err(e) => match stop_for(&e) {
                Some(reason) => {
                    log::info!("stopping at t = {}: {e}", state.time());
                    break reason;
                }
                None => return Err(e),
            },
        };
        steps += 1;
        state = next;
        if config.resample {
            state = reparam::resample_triod(&state, state.n_cells())?;
            let (iters, res) = (report.picard_iters, report.picard_final_residual);
            report = StepReport::of_triod(&state, iters, res)?;
        }
        log::debug!(
            "t = {:.6e}: L = {:.12}, angle residual {:.3e}, {} fixed-point iterations",
            report.time,
            report.total_length,
            report.angle_residual,
            report.picard_iters
        );
        reports.push(report.clone());
        let fired = monitor(
            &report.lengths,
            report.l2_curvature,
            report.min_speed,
            coeffs.reg_floor(),
            collapse,
            blowup,
        );
        if fired.is_some() || steps % config.snapshot_every == 0 {
            snapshots.push(Snapshot {
                state: state.clone(),
                report,
            });
        }
        if let Some(reason) = fired {
            log::info!("stopping at t = {}: {reason}", state.time());
            break reason;
        }
    };
    if snapshots.last().map(|s| s.state.time()) != Some(state.time()) {
        let report = reports
            .last()
            .cloned()
            .map_or_else(|| StepReport::of_triod(&state, 0, 0.0), Ok)?;
        snapshots.push(Snapshot { state, report });
    }
    Ok(RunOutput {
        snapshots,
        reports,
        stop,
        config: effective,
    })
}
