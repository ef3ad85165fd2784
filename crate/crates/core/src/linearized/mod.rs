//! One implicit time step of the Special Flow linearised around a frozen triod `σ`.
//!
//! Each interior node of curve `i` carries the backward Euler row
//!
//! ```text
//! (γ_j - ψ_j)/dt - aⁱ_j (γ_{j+1} - 2γ_j + γ_{j-1})/h² = f_j,    aⁱ_j = 1/|σⁱ_x(x_j)|²
//! ```
//!
//! The far ends are Dirichlet rows `γⁱ(1) = ηⁱ`. The three junction copies are
//! tied by two concurrency blocks and the linearised angle condition
//!
//! ```text
//! -Σᵢ Pⁱ γⁱ_x(0) / |σⁱ_x(0)| = b,    Pⁱ = Id - τⁱ⊗τⁱ,
//! ```
//!
//! where `γ_x(0)` is the one-sided second-order stencil. Concurrency rows are
//! scaled by `1/dt` and angle rows by `1/(N dt)` so that every row has the
//! magnitude of the interior rows; unscaled, the pivoted factorisation would
//! resolve the junction only to `ε/dt`. Unknowns are ordered
//! node-major, `(node·3 + curve)·n + component`, which keeps the matrix banded
//! with lower bandwidth `3n` and upper bandwidth `7n`.

pub mod banded;
mod shapiro;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::geometry::{self, norm, TriodState};
use banded::{BandLu, BandMatrix};

pub use shapiro::{
    default_lambda_samples, lopatinskii_shapiro_check, ShapiroReport, ShapiroSample,
    SHAPIRO_THRESHOLD,
};

/// Coefficients of the linear system, frozen at the triod `σ`.
#[derive(Debug, Clone)]
pub struct FrozenCoefficients {
    sigma: TriodState,
    diffusion: [Array1<f64>; 3],
    junction_derivative: [Array1<f64>; 3],
    junction_speed: [f64; 3],
    projections: [Array2<f64>; 3],
    reg_floor: f64,
}

impl FrozenCoefficients {
    pub fn new(sigma: TriodState) -> Result<Self> {
        Self::with_floor(sigma, 0.0)
    }

    /// Freezes `σ` together with a regularity floor that [`assemble`] enforces.
    pub fn with_floor(sigma: TriodState, reg_floor: f64) -> Result<Self> {
        let dim = sigma.dim();
        let mut diffusion: [Array1<f64>; 3] = Default::default();
        let mut junction_derivative: [Array1<f64>; 3] = Default::default();
        let mut junction_speed = [0.0; 3];
        let mut projections: [Array2<f64>; 3] = Default::default();
        for (i, curve) in sigma.curves().iter().enumerate() {
            let s = geometry::speeds(geometry::first_derivative(curve).view())?;
            diffusion[i] = s.mapv(|v| 1.0 / (v * v));
            let d = geometry::junction_derivative(curve);
            let sp = norm(d.view());
            if !(sp > 0.0) {
                return Err(Error::Regularity { node: 0, speed: sp });
            }
            let tau = &d / sp;
            let mut p = Array2::eye(dim);
            for a in 0..dim {
                for b in 0..dim {
                    p[[a, b]] -= tau[a] * tau[b];
                }
            }
            junction_derivative[i] = d;
            junction_speed[i] = sp;
            projections[i] = p;
        }
        Ok(Self {
            sigma,
            diffusion,
            junction_derivative,
            junction_speed,
            projections,
            reg_floor,
        })
    }

    pub fn sigma(&self) -> &TriodState {
        &self.sigma
    }

    pub fn reg_floor(&self) -> f64 {
        self.reg_floor
    }

    /// `1/|σⁱ_x|²` at every node of curve `i`.
    pub fn diffusion(&self, i: usize) -> ArrayView1<'_, f64> {
        self.diffusion[i].view()
    }

    /// One-sided `σⁱ_x(0)`.
    pub fn junction_derivative(&self, i: usize) -> ArrayView1<'_, f64> {
        self.junction_derivative[i].view()
    }

    pub fn junction_speed(&self, i: usize) -> f64 {
        self.junction_speed[i]
    }

    /// Normal projection `Id - τⁱ⊗τⁱ` at the junction.
    pub fn projection(&self, i: usize) -> ArrayView2<'_, f64> {
        self.projections[i].view()
    }

    /// `-Σᵢ Pⁱ γⁱ_x(0) / |σⁱ_x(0)|` for three sampled curves.
    pub fn linearized_angle(&self, curves: [ArrayView2<f64>; 3]) -> Array1<f64> {
        let dim = self.sigma.dim();
        let nf = self.sigma.n_cells() as f64;
        let mut out = Array1::zeros(dim);
        for (i, c) in curves.iter().enumerate() {
            let gx = (&c.row(1) * 4.0 - &c.row(0) * 3.0 - &c.row(2)) * (0.5 * nf);
            out -= &(self.projections[i].dot(&gx) / self.junction_speed[i]);
        }
        out
    }
}

/// Right-hand sides `(f, η, b, ψ)` of the linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearData {
    /// Forcing per curve, one row per node (only interior rows enter the system).
    pub f: [Array2<f64>; 3],
    /// Endpoint values `ηⁱ`.
    pub eta: [Array1<f64>; 3],
    /// Angle-condition datum.
    pub b: Array1<f64>,
    /// Initial datum, also the previous time level of the step.
    pub psi: [Array2<f64>; 3],
}

impl LinearData {
    /// Zero forcing, `η = σ(1)`, `b = 0`, `ψ = σ`.
    pub fn stationary(coeffs: &FrozenCoefficients) -> Self {
        let sigma = coeffs.sigma();
        let psi = curve_arrays(sigma);
        Self {
            f: psi.clone().map(|a| Array2::zeros(a.raw_dim())),
            eta: sigma.endpoints().clone(),
            b: Array1::zeros(sigma.dim()),
            psi,
        }
    }

    fn validate(&self, n_cells: usize, dim: usize) -> Result<()> {
        let rows = n_cells + 1;
        for i in 0..3 {
            for (name, a) in [("f", &self.f[i]), ("psi", &self.psi[i])] {
                if a.dim() != (rows, dim) {
                    return Err(Error::Shape(format!(
                        "{name}[{i}] has shape {:?}, expected ({rows}, {dim})",
                        a.dim()
                    )));
                }
            }
            if self.eta[i].len() != dim {
                return Err(Error::Shape(format!("eta[{i}] must have {dim} components")));
            }
        }
        if self.b.len() != dim {
            return Err(Error::Shape(format!("b must have {dim} components")));
        }
        let finite = self
            .f
            .iter()
            .chain(self.psi.iter())
            .all(|a| a.iter().all(|v| v.is_finite()))
            && self.eta.iter().all(|a| a.iter().all(|v| v.is_finite()))
            && self.b.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Shape("linear data contains non-finite values".into()));
        }
        Ok(())
    }
}

pub(crate) fn curve_arrays(t: &TriodState) -> [Array2<f64>; 3] {
    [
        t.curve(0).points().to_owned(),
        t.curve(1).points().to_owned(),
        t.curve(2).points().to_owned(),
    ]
}

/// A clause of the linear compatibility conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    Concurrency,
    Endpoint(usize),
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub clause: Clause,
    pub residual: f64,
}

/// Residuals of the compatibility conditions of `ψ` with `(η, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// `max_{i,j} |ψⁱ(0) - ψʲ(0)|`.
    pub concurrency: f64,
    /// `|ψⁱ(1) - ηⁱ|`.
    pub endpoint: [f64; 3],
    /// `|linearised angle operator(ψ) - b|`.
    pub angle: f64,
    pub tol: f64,
}

impl CompatibilityReport {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.concurrency <= self.tol) {
            out.push(Violation {
                clause: Clause::Concurrency,
                residual: self.concurrency,
            });
        }
        for (i, &r) in self.endpoint.iter().enumerate() {
            if !(r <= self.tol) {
                out.push(Violation {
                    clause: Clause::Endpoint(i),
                    residual: r,
                });
            }
        }
        if !(self.angle <= self.tol) {
            out.push(Violation {
                clause: Clause::Angle,
                residual: self.angle,
            });
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }
}

pub fn check_compatibility(
    data: &LinearData,
    coeffs: &FrozenCoefficients,
    tol: f64,
) -> Result<CompatibilityReport> {
    let sigma = coeffs.sigma();
    data.validate(sigma.n_cells(), sigma.dim())?;
    let n = sigma.n_cells();
    let psi = &data.psi;
    let mut concurrency: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            concurrency = concurrency.max(geometry::distance(psi[i].row(0), psi[j].row(0)));
        }
    }
    let endpoint = [0, 1, 2].map(|i| geometry::distance(psi[i].row(n), data.eta[i].view()));
    let lin = coeffs.linearized_angle([psi[0].view(), psi[1].view(), psi[2].view()]);
    let angle = norm((&lin - &data.b).view());
    Ok(CompatibilityReport {
        concurrency,
        endpoint,
        angle,
        tol,
    })
}

/// Role of a row of the assembled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Interior,
    Endpoint,
    Concurrency,
    Angle,
}

/// Index of the unknown for `(curve, node, component)`.
#[inline]
pub fn unknown_index(dim: usize, curve: usize, node: usize, comp: usize) -> usize {
    (node * 3 + curve) * dim + comp
}

/// Assembled matrix and right-hand side of one implicit step.
#[derive(Debug, Clone)]
pub struct LinearStepSystem {
    dim: usize,
    n_cells: usize,
    matrix: BandMatrix,
    rhs: Vec<f64>,
    row_map: Vec<RowKind>,
}

impl LinearStepSystem {
    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn matrix(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row_map(&self) -> &[RowKind] {
        &self.row_map
    }

    pub fn count(&self, kind: RowKind) -> usize {
        self.row_map.iter().filter(|&&k| k == kind).count()
    }
}

fn assemble_matrix(coeffs: &FrozenCoefficients, dt: f64) -> Result<(BandMatrix, Vec<RowKind>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Assembly(format!("time step must be positive, got {dt}")));
    }
    let sigma = coeffs.sigma();
    let min_speed = sigma.min_speed();
    if !(min_speed >= coeffs.reg_floor()) {
        return Err(Error::Assembly(format!(
            "frozen triod has min |σ_x| = {min_speed:e} below the regularity floor {:e}",
            coeffs.reg_floor()
        )));
    }
    let n = sigma.dim();
    let big_n = sigma.n_cells();
    let size = 3 * n * (big_n + 1);
    let nf = big_n as f64;
    let h2inv = nf * nf;
    let mut a = BandMatrix::zeros(size, 3 * n, 7 * n);
    let mut rows = vec![RowKind::Interior; size];
    let idx = |c, j, d| unknown_index(n, c, j, d);

    for c in 0..3 {
        let diff = coeffs.diffusion(c);
        for j in 1..big_n {
            let k = diff[j] * h2inv;
            for d in 0..n {
                let r = idx(c, j, d);
                a.add(r, idx(c, j - 1, d), -k);
                a.add(r, r, 1.0 / dt + 2.0 * k);
                a.add(r, idx(c, j + 1, d), -k);
            }
        }
        for d in 0..n {
            let r = idx(c, big_n, d);
            a.add(r, r, 1.0);
            rows[r] = RowKind::Endpoint;
        }
    }

    let (cs, as_) = junction_row_scales(dt, big_n);
    for d in 0..n {
        for (c, kind) in [(0, RowKind::Concurrency), (1, RowKind::Concurrency)] {
            let r = idx(c, 0, d);
            a.add(r, r, cs);
            a.add(r, idx(c + 1, 0, d), -cs);
            rows[r] = kind;
        }
    }

    // -Σᵢ Pⁱ (-3γ₀ + 4γ₁ - γ₂) / (2h |σⁱ_x(0)|)
    let weights = [-1.5 * nf, 2.0 * nf, -0.5 * nf];
    for d in 0..n {
        let r = idx(2, 0, d);
        rows[r] = RowKind::Angle;
        for c in 0..3 {
            let p = coeffs.projection(c);
            let s = coeffs.junction_speed(c);
            for (node, w) in weights.iter().enumerate() {
                for e in 0..n {
                    let v = -as_ * p[[d, e]] * w / s;
                    if v != 0.0 {
                        a.add(r, idx(c, node, e), v);
                    }
                }
            }
        }
    }
    Ok((a, rows))
}

/// Row scales of the concurrency and angle rows.
fn junction_row_scales(dt: f64, n_cells: usize) -> (f64, f64) {
    (1.0 / dt, 1.0 / (dt * n_cells as f64))
}

fn assemble_rhs(data: &LinearData, dt: f64, n: usize, big_n: usize) -> Vec<f64> {
    let mut rhs = vec![0.0; 3 * n * (big_n + 1)];
    let idx = |c, j, d| unknown_index(n, c, j, d);
    for c in 0..3 {
        for j in 1..big_n {
            for d in 0..n {
                rhs[idx(c, j, d)] = data.psi[c][[j, d]] / dt + data.f[c][[j, d]];
            }
        }
        for d in 0..n {
            rhs[idx(c, big_n, d)] = data.eta[c][d];
        }
    }
    let (_, as_) = junction_row_scales(dt, big_n);
    for d in 0..n {
        rhs[idx(2, 0, d)] = as_ * data.b[d];
    }
    rhs
}

pub fn assemble(coeffs: &FrozenCoefficients, data: &LinearData, dt: f64) -> Result<LinearStepSystem> {
    let sigma = coeffs.sigma();
    let (n, big_n) = (sigma.dim(), sigma.n_cells());
    data.validate(big_n, n)?;
    let (matrix, row_map) = assemble_matrix(coeffs, dt)?;
    let rhs = assemble_rhs(data, dt, n, big_n);
    Ok(LinearStepSystem {
        dim: n,
        n_cells: big_n,
        matrix,
        rhs,
        row_map,
    })
}

/// Solution of one linear step, repackaged per curve.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub curves: [Array2<f64>; 3],
    /// `‖Ax - b‖ / ‖b‖` before repackaging.
    pub relative_residual: f64,
}

impl LinearSolution {
    pub fn into_triod(self, time: f64) -> Result<TriodState> {
        TriodState::new(self.curves, time)
    }
}

/// Residual tolerance of the direct solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

fn solve_factored(
    matrix: &BandMatrix,
    lu: &BandLu,
    rhs: &[f64],
    row_map: &[RowKind],
    dim: usize,
    n_cells: usize,
) -> LinearSolution {
    let mut x = lu.solve(rhs);
    let residual = |x: &[f64]| -> Vec<f64> {
        matrix
            .mul_vec(x)
            .iter()
            .zip(rhs)
            .map(|(ax, b)| b - ax)
            .collect()
    };
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut r = residual(&x);
    let mut rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    if rel > SOLVE_TOLERANCE {
        // one step of iterative refinement
        lu.solve_in_place(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        rel = residual(&x).iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    }
    if rel > SOLVE_TOLERANCE {
        log::warn!("linear step residual {rel:e} above {SOLVE_TOLERANCE:e}");
    }

    // Dirichlet rows are identities: copy their data so endpoints stay bit-exact.
    for (k, kind) in row_map.iter().enumerate() {
        if *kind == RowKind::Endpoint {
            x[k] = rhs[k];
        }
    }
    let mut curves: [Array2<f64>; 3] = std::array::from_fn(|_| Array2::zeros((n_cells + 1, dim)));
    for (c, arr) in curves.iter_mut().enumerate() {
        for j in 0..=n_cells {
            for d in 0..dim {
                arr[[j, d]] = x[unknown_index(dim, c, j, d)];
            }
        }
    }
    for d in 0..dim {
        let mean = (curves[0][[0, d]] + curves[1][[0, d]] + curves[2][[0, d]]) / 3.0;
        for arr in curves.iter_mut() {
            arr[[0, d]] = mean;
        }
    }
    LinearSolution {
        curves,
        relative_residual: rel,
    }
}

/// Factorises and solves an assembled system.
pub fn solve(system: &LinearStepSystem) -> Result<LinearSolution> {
    let lu = system.matrix.factorize()?;
    Ok(solve_factored(
        &system.matrix,
        &lu,
        &system.rhs,
        &system.row_map,
        system.dim,
        system.n_cells,
    ))
}

/// A factorised step matrix, reused across fixed-point sweeps with the same
/// coefficients and time step.
#[derive(Debug, Clone)]
pub struct StepOperator {
    matrix: BandMatrix,
    lu: BandLu,
    row_map: Vec<RowKind>,
    dim: usize,
    n_cells: usize,
    dt: f64,
}

impl StepOperator {
    pub fn new(coeffs: &FrozenCoefficients, dt: f64) -> Result<Self> {
        let (matrix, row_map) = assemble_matrix(coeffs, dt)?;
        let lu = matrix.factorize()?;
        Ok(Self {
            matrix,
            lu,
            row_map,
            dim: coeffs.sigma().dim(),
            n_cells: coeffs.sigma().n_cells(),
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn solve(&self, data: &LinearData) -> Result<LinearSolution> {
        data.validate(self.n_cells, self.dim)?;
        let rhs = assemble_rhs(data, self.dt, self.dim, self.n_cells);
        Ok(solve_factored(
            &self.matrix,
            &self.lu,
            &rhs,
            &self.row_map,
            self.dim,
            self.n_cells,
        ))
    }
}
