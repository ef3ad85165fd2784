//! Discrete differential geometry of sampled curves and triods.
//!
//! Curves are sampled on the uniform grid `x_j = j/N`, `j = 0..=N`. Derivatives
//! use second-order central differences in the interior and second-order
//! one-sided stencils at `x = 0` and `x = 1`; periodic curves wrap around.
//! All stencils reproduce polynomials of degree ≤ 2 exactly.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Smallest admissible number of cells.
pub const MIN_CELLS: usize = 8;

/// Uniform grid on the parameter interval `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_cells: usize,
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < MIN_CELLS {
            return Err(Error::GridTooCoarse {
                n_cells,
                min: MIN_CELLS,
            });
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// Grid spacing `h = 1/N`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n_cells as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_cells).map(|j| self.node(j))
    }
}

/// How the ends of a sampled curve are treated by the difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Two distinct ends, one-sided stencils at `x = 0` and `x = 1`.
    Open,
    /// Closed curve: node `N` repeats node `0` and stencils wrap.
    Periodic,
}

/// A sampled regular parametrisation of one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveState {
    grid: Grid,
    boundary: Boundary,
    points: Array2<f64>,
}

impl CurveState {
    /// Builds a curve from `N + 1` sampled points (one row per node).
    ///
    /// For [`Boundary::Periodic`] the last row must be bit-equal to the first.
    pub fn new(points: Array2<f64>, boundary: Boundary) -> Result<Self> {
        let rows = points.nrows();
        if rows < 2 {
            return Err(Error::Shape(format!("curve needs at least 2 nodes, got {rows}")));
        }
        if points.ncols() < 2 {
            return Err(Error::Shape(format!(
                "ambient dimension must be at least 2, got {}",
                points.ncols()
            )));
        }
        let grid = Grid::new(rows - 1)?;
        if let Some(node) = points
            .rows()
            .into_iter()
            .position(|row| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite { node });
        }
        if boundary == Boundary::Periodic && points.row(0) != points.row(rows - 1) {
            return Err(Error::Shape(
                "closed curve must repeat its first node as its last node".into(),
            ));
        }
        let curve = Self {
            grid,
            boundary,
            points,
        };
        let (node, speed) = curve.min_cell_speed();
        if !(speed > 0.0) {
            return Err(Error::Regularity { node, speed });
        }
        Ok(curve)
    }

    pub fn open(points: Array2<f64>) -> Result<Self> {
        Self::new(points, Boundary::Open)
    }

    /// Samples `f` at the grid nodes. For periodic curves the last node is set
    /// to the first so the closure is exact.
    pub fn from_fn<F>(n_cells: usize, dim: usize, boundary: Boundary, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let grid = Grid::new(n_cells)?;
        let mut points = Array2::zeros((grid.n_nodes(), dim));
        for (j, x) in grid.nodes().enumerate() {
            let p = f(x);
            if p.len() != dim {
                return Err(Error::Shape(format!(
                    "point at node {j} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            points.row_mut(j).assign(&Array1::from(p));
        }
        if boundary == Boundary::Periodic {
            let first = points.row(0).to_owned();
            points.row_mut(n_cells).assign(&first);
        }
        Self::new(points, boundary)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, j: usize) -> ArrayView1<'_, f64> {
        self.points.row(j)
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    /// Node-wise map of the points, keeping grid and boundary type.
    pub fn map_points<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(ArrayView1<f64>) -> Array1<f64>,
    {
        let mut points = Array2::zeros(self.points.raw_dim());
        for (mut dst, src) in points.rows_mut().into_iter().zip(self.points.rows()) {
            dst.assign(&f(src));
        }
        if self.boundary == Boundary::Periodic {
            let first = points.row(0).to_owned();
            points.row_mut(self.n_cells()).assign(&first);
        }
        Self::new(points, self.boundary)
    }

    /// Minimum over cells of `|p_{j+1} - p_j| / h` and the cell where it occurs.
    pub fn min_cell_speed(&self) -> (usize, f64) {
        let n = self.grid.n_cells as f64;
        let mut best = (0, f64::INFINITY);
        for j in 0..self.grid.n_cells {
            let d = distance(self.points.row(j + 1), self.points.row(j)) * n;
            if d < best.1 || d.is_nan() {
                best = (j, d);
            }
        }
        best
    }

    /// First-difference speed `min_j |D₁γ|_j`, the regularity measure of a state.
    pub fn min_speed(&self) -> f64 {
        self.min_cell_speed().1
    }
}

/// `γ_x` at every node.
pub fn first_derivative(curve: &CurveState) -> Array2<f64> {
    derivative(curve, Order::First)
}

/// `γ_xx` at every node.
pub fn second_derivative(curve: &CurveState) -> Array2<f64> {
    derivative(curve, Order::Second)
}

#[derive(Clone, Copy)]
enum Order {
    First,
    Second,
}

fn derivative(curve: &CurveState, order: Order) -> Array2<f64> {
    let p = &curve.points;
    let n = curve.grid.n_cells;
    let nf = n as f64;
    let mut out = Array2::zeros(p.raw_dim());

    let central = |out: &mut Array2<f64>, j: usize, prev: usize, next: usize| {
        let mut row = out.row_mut(j);
        match order {
            Order::First => Zip::from(&mut row)
                .and(p.row(prev))
                .and(p.row(next))
                .for_each(|o, &a, &b| *o = (b - a) * 0.5 * nf),
            Order::Second => Zip::from(&mut row)
                .and(p.row(prev))
                .and(p.row(j))
                .and(p.row(next))
                .for_each(|o, &a, &c, &b| *o = (b - 2.0 * c + a) * nf * nf),
        }
    };

    for j in 1..n {
        central(&mut out, j, j - 1, j + 1);
    }
    match curve.boundary {
        Boundary::Periodic => {
            central(&mut out, 0, n - 1, 1);
            let first = out.row(0).to_owned();
            out.row_mut(n).assign(&first);
        }
        Boundary::Open => {
            let (lo, hi) = match order {
                Order::First => (
                    one_sided_first(p.row(0), p.row(1), p.row(2), nf),
                    one_sided_first(p.row(n), p.row(n - 1), p.row(n - 2), nf).mapv(|v| -v),
                ),
                Order::Second => (
                    one_sided_second(p.row(0), p.row(1), p.row(2), p.row(3), nf),
                    one_sided_second(p.row(n), p.row(n - 1), p.row(n - 2), p.row(n - 3), nf),
                ),
            };
            out.row_mut(0).assign(&lo);
            out.row_mut(n).assign(&hi);
        }
    }
    out
}

/// `(-3 p₀ + 4 p₁ - p₂) / 2h`, oriented away from `p₀`.
fn one_sided_first(
    p0: ArrayView1<f64>,
    p1: ArrayView1<f64>,
    p2: ArrayView1<f64>,
    nf: f64,
) -> Array1<f64> {
    let mut out = Array1::zeros(p0.len());
    Zip::from(&mut out)
        .and(p0)
        .and(p1)
        .and(p2)
        .for_each(|o, &a, &b, &c| *o = (-3.0 * a + 4.0 * b - c) * 0.5 * nf);
    out
}

/// `(2 p₀ - 5 p₁ + 4 p₂ - p₃) / h²`.
fn one_sided_second(
    p0: ArrayView1<f64>,
    p1: ArrayView1<f64>,
    p2: ArrayView1<f64>,
    p3: ArrayView1<f64>,
    nf: f64,
) -> Array1<f64> {
    let mut out = Array1::zeros(p0.len());
    Zip::from(&mut out)
        .and(p0)
        .and(p1)
        .and(p2)
        .and(p3)
        .for_each(|o, &a, &b, &c, &d| *o = (2.0 * a - 5.0 * b + 4.0 * c - d) * nf * nf);
    out
}

/// One-sided `γ_x(0)` of an open curve, from the first three nodes only.
pub fn junction_derivative(curve: &CurveState) -> Array1<f64> {
    let p = &curve.points;
    one_sided_first(p.row(0), p.row(1), p.row(2), curve.grid.n_cells as f64)
}

/// Row norms of a derivative array, failing on speeds at the round-off floor.
pub fn speeds(derivative: ArrayView2<f64>) -> Result<Array1<f64>> {
    let speeds: Array1<f64> = derivative.rows().into_iter().map(|r| norm(r)).collect();
    let max = speeds.iter().cloned().fold(0.0_f64, f64::max);
    let floor = f64::EPSILON * max;
    for (node, &speed) in speeds.iter().enumerate() {
        if !(speed > floor) {
            return Err(Error::Regularity { node, speed });
        }
    }
    Ok(speeds)
}

/// Unit tangent `τ = γ_x / |γ_x|` at every node.
pub fn tangent(curve: &CurveState) -> Result<Array2<f64>> {
    let mut d1 = first_derivative(curve);
    let s = speeds(d1.view())?;
    for (mut row, &speed) in d1.rows_mut().into_iter().zip(s.iter()) {
        row /= speed;
    }
    Ok(d1)
}

/// Curvature vector `κ = γ_xx/|γ_x|² - ⟨γ_xx, γ_x⟩ γ_x / |γ_x|⁴` at every node.
pub fn curvature_vector(curve: &CurveState) -> Result<Array2<f64>> {
    let d1 = first_derivative(curve);
    let d2 = second_derivative(curve);
    let s = speeds(d1.view())?;
    let mut kappa = Array2::zeros(d1.raw_dim());
    for j in 0..d1.nrows() {
        let s2 = s[j] * s[j];
        let g1 = d1.row(j);
        let g2 = d2.row(j);
        let proj = g2.dot(&g1) / (s2 * s2);
        Zip::from(kappa.row_mut(j))
            .and(g2)
            .and(g1)
            .for_each(|k, &b, &a| *k = b / s2 - proj * a);
    }
    Ok(kappa)
}

/// Composite trapezoid rule applied to node values on the uniform grid.
fn trapezoid(values: ArrayView1<f64>, boundary: Boundary) -> f64 {
    let n = values.len() - 1;
    let h = 1.0 / n as f64;
    match boundary {
        Boundary::Periodic => values.slice(s![..n]).sum() * h,
        Boundary::Open => (values.sum() - 0.5 * (values[0] + values[n])) * h,
    }
}

/// Length `∫₀¹ |γ_x| dx` by the trapezoid rule.
pub fn length(curve: &CurveState) -> Result<f64> {
    let s = speeds(first_derivative(curve).view())?;
    Ok(trapezoid(s.view(), curve.boundary))
}

/// `∫₀¹ |κ|² |γ_x| dx` for one curve.
pub fn curve_l2_curvature_squared(curve: &CurveState) -> Result<f64> {
    let kappa = curvature_vector(curve)?;
    let s = speeds(first_derivative(curve).view())?;
    let integrand: Array1<f64> = kappa
        .rows()
        .into_iter()
        .zip(s.iter())
        .map(|(k, &sp)| k.dot(&k) * sp)
        .collect();
    Ok(trapezoid(integrand.view(), curve.boundary))
}

/// `(Σᵢ ∫ |κⁱ|² ds)^{1/2}` over the three curves of a triod.
pub fn l2_curvature(triod: &TriodState) -> Result<f64> {
    let mut total = 0.0;
    for c in triod.curves() {
        total += curve_l2_curvature_squared(c)?;
    }
    Ok(total.sqrt())
}

pub(crate) fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub(crate) fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Three open curves sharing their first node, with pinned far endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TriodState {
    curves: [CurveState; 3],
    endpoints: [Array1<f64>; 3],
    time: f64,
}

impl TriodState {
    /// Validates grids, dimensions, regularity and bit-exact concurrency.
    /// The endpoints `Pⁱ` are read off the last nodes.
    pub fn new(points: [Array2<f64>; 3], time: f64) -> Result<Self> {
        let [a, b, c] = points;
        let curves = [
            CurveState::open(a)?,
            CurveState::open(b)?,
            CurveState::open(c)?,
        ];
        Self::from_curves(curves, time)
    }

    pub fn from_curves(curves: [CurveState; 3], time: f64) -> Result<Self> {
        if !(time >= 0.0) || !time.is_finite() {
            return Err(Error::Shape(format!("time must be finite and nonnegative, got {time}")));
        }
        let n = curves[0].n_cells();
        let dim = curves[0].dim();
        for (i, c) in curves.iter().enumerate() {
            if c.boundary() != Boundary::Open {
                return Err(Error::Shape(format!("curve {i} of a triod must be open")));
            }
            if c.n_cells() != n || c.dim() != dim {
                return Err(Error::Shape(format!(
                    "curve {i} has {} cells in R^{}, expected {n} cells in R^{dim}",
                    c.n_cells(),
                    c.dim()
                )));
            }
        }
        let distance = junction_spread(&curves);
        if curves[0].point(0) != curves[1].point(0) || curves[1].point(0) != curves[2].point(0) {
            return Err(Error::Concurrency { distance });
        }
        let endpoints = [
            curves[0].point(n).to_owned(),
            curves[1].point(n).to_owned(),
            curves[2].point(n).to_owned(),
        ];
        Ok(Self {
            curves,
            endpoints,
            time,
        })
    }

    pub fn curves(&self) -> &[CurveState; 3] {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> &CurveState {
        &self.curves[i]
    }

    pub fn endpoints(&self) -> &[Array1<f64>; 3] {
        &self.endpoints
    }

    pub fn junction(&self) -> ArrayView1<'_, f64> {
        self.curves[0].point(0)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn n_cells(&self) -> usize {
        self.curves[0].n_cells()
    }

    pub fn dim(&self) -> usize {
        self.curves[0].dim()
    }

    pub fn lengths(&self) -> Result<[f64; 3]> {
        Ok([
            length(&self.curves[0])?,
            length(&self.curves[1])?,
            length(&self.curves[2])?,
        ])
    }

    pub fn total_length(&self) -> Result<f64> {
        Ok(self.lengths()?.iter().sum())
    }

    /// Minimum first-difference speed over all curves.
    pub fn min_speed(&self) -> f64 {
        self.curves
            .iter()
            .map(CurveState::min_speed)
            .fold(f64::INFINITY, f64::min)
    }

    /// Applies `f` to every node of every curve (rigid motions, dilations).
    pub fn map_points<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(ArrayView1<f64>) -> Array1<f64>,
    {
        let curves = [
            self.curves[0].map_points(&f)?,
            self.curves[1].map_points(&f)?,
            self.curves[2].map_points(&f)?,
        ];
        Self::from_curves(curves, self.time)
    }

    /// Largest node displacement between two triods on the same grid.
    pub fn max_displacement(&self, other: &TriodState) -> f64 {
        self.curves
            .iter()
            .zip(other.curves.iter())
            .flat_map(|(a, b)| {
                a.points()
                    .rows()
                    .into_iter()
                    .zip(b.points().rows())
                    .map(|(p, q)| distance(p, q))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

fn junction_spread(curves: &[CurveState; 3]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            d = d.max(distance(curves[i].point(0), curves[j].point(0)));
        }
    }
    d
}

/// Defects of the junction conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionResiduals {
    /// `|Σᵢ τⁱ(0)|`, in `[0, 3]`.
    pub angle_residual: f64,
    /// Largest pairwise distance between the curves' first nodes.
    pub concurrency_residual: f64,
}

impl JunctionResiduals {
    pub fn admissible(&self, tol: f64) -> bool {
        self.angle_residual <= tol && self.concurrency_residual == 0.0
    }
}

/// Unit junction tangents `τⁱ(0)` from the one-sided stencil.
pub fn junction_tangents(triod: &TriodState) -> Result<[Array1<f64>; 3]> {
    let mut out: [Array1<f64>; 3] = Default::default();
    for (i, c) in triod.curves().iter().enumerate() {
        let d = junction_derivative(c);
        let s = norm(d.view());
        if !(s > 0.0) {
            return Err(Error::Regularity { node: 0, speed: s });
        }
        out[i] = d / s;
    }
    Ok(out)
}

pub fn junction_residuals(triod: &TriodState) -> Result<JunctionResiduals> {
    let t = junction_tangents(triod)?;
    let sum = &t[0] + &t[1] + &t[2];
    Ok(JunctionResiduals {
        angle_residual: norm(sum.view()),
        concurrency_residual: junction_spread(triod.curves()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    fn segment(n: usize) -> CurveState {
        CurveState::from_fn(n, 2, Boundary::Open, |x| vec![x, 0.0]).unwrap()
    }

    fn circle(n: usize, r: f64) -> CurveState {
        CurveState::from_fn(n, 2, Boundary::Periodic, |x| {
            vec![r * (2.0 * PI * x).cos(), r * (2.0 * PI * x).sin()]
        })
        .unwrap()
    }

    fn ellipse(n: usize) -> CurveState {
        CurveState::from_fn(n, 2, Boundary::Periodic, |x| {
            vec![2.0 * (2.0 * PI * x).cos(), (2.0 * PI * x).sin()]
        })
        .unwrap()
    }

    // Circumference of the ellipse with semi-axes 2 and 1, by Gauss–Kummer.
    fn ellipse_perimeter() -> f64 {
        let (a, b) = (2.0_f64, 1.0_f64);
        let hh = ((a - b) / (a + b)).powi(2);
        let mut sum = 1.0;
        let mut coef = 1.0;
        for k in 1..40 {
            // binomial(1/2, k)^2
            coef *= (0.5 - (k as f64 - 1.0)) / k as f64;
            sum += coef * coef * hh.powi(k);
        }
        PI * (a + b) * sum
    }

    #[test]
    fn grid_rejects_coarse() {
        assert!(matches!(Grid::new(4), Err(Error::GridTooCoarse { .. })));
        let g = Grid::new(8).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(8), 1.0);
        assert_eq!(g.spacing(), 0.125);
    }

    #[test]
    fn segment_tangent_is_constant() {
        for n in [8, 13, 64] {
            let t = tangent(&segment(n)).unwrap();
            for row in t.rows() {
                assert!((row[0] - 1.0).abs() < 1e-12 && row[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tangent_is_reparametrisation_invariant() {
        let c = CurveState::from_fn(32, 2, Boundary::Open, |x| {
            let u = 0.1 + 0.5 * x + 0.4 * x * x;
            vec![u, 0.0]
        })
        .unwrap();
        for row in tangent(&c).unwrap().rows() {
            assert!((row[0] - 1.0).abs() < 1e-12 && row[1].abs() < 1e-12);
        }
    }

    #[test]
    fn circle_tangent_at_start() {
        let t = tangent(&circle(128, 1.0)).unwrap();
        let h = 1.0 / 128.0;
        assert!(t[[0, 0]].abs() < 1e-12);
        assert!((t[[0, 1]] - 1.0).abs() < 10.0 * h * h);
        for row in t.rows() {
            assert!((norm(row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_curve_has_zero_curvature() {
        let c = CurveState::from_fn(16, 2, Boundary::Open, |x| {
            let u = x + 0.3 * x * x;
            vec![2.0 * u, -u]
        })
        .unwrap();
        for v in curvature_vector(&c).unwrap().iter() {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn circle_curvature_and_refinement_order() {
        let r = 0.7;
        let err = |n: usize| {
            curvature_vector(&circle(n, r))
                .unwrap()
                .rows()
                .into_iter()
                .map(|k| (norm(k) - 1.0 / r).abs())
                .fold(0.0, f64::max)
        };
        let e256 = err(256);
        assert!(e256 < 1e-3 / r);
        let ratio = err(64) / err(128);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn curvature_is_normal() {
        let c = CurveState::from_fn(64, 3, Boundary::Open, |x| {
            vec![x.cos(), (2.0 * x).sin(), x * x * x]
        })
        .unwrap();
        let k = curvature_vector(&c).unwrap();
        let t = tangent(&c).unwrap();
        for (kr, tr) in k.rows().into_iter().zip(t.rows()) {
            assert!(kr.dot(&tr).abs() <= 1e-10 * norm(kr).max(1.0));
        }
    }

    #[test]
    fn lengths() {
        assert!((length(&segment(8)).unwrap() - 1.0).abs() < 1e-15);
        assert!((length(&circle(256, 1.0)).unwrap() - 2.0 * PI).abs() < 1e-3);
        let p = ellipse_perimeter();
        let e = |n| (length(&ellipse(n)).unwrap() - p).abs();
        let ratio = e(32) / e(64);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn l2_curvature_of_circle_and_refinement() {
        let circ = circle(256, 1.0);
        let v = curve_l2_curvature_squared(&circ).unwrap().sqrt();
        assert!((v - (2.0 * PI).sqrt()).abs() < 1e-2);
        let exact = (2.0 * PI).sqrt();
        let errs: Vec<f64> = [32, 64, 128, 256]
            .iter()
            .map(|&n| (curve_l2_curvature_squared(&circle(n, 1.0)).unwrap().sqrt() - exact).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    fn triod_from_dirs(dirs: [[f64; 2]; 3], n: usize) -> TriodState {
        let make = |d: [f64; 2]| {
            CurveState::from_fn(n, 2, Boundary::Open, |x| vec![x * d[0], x * d[1]])
                .unwrap()
                .into_points()
        };
        TriodState::new([make(dirs[0]), make(dirs[1]), make(dirs[2])], 0.0).unwrap()
    }

    fn roots_of_unity() -> [[f64; 2]; 3] {
        let a = |k: f64| {
            let t = 2.0 * PI * k / 3.0;
            [t.cos(), t.sin()]
        };
        [a(0.0), a(1.0), a(2.0)]
    }

    #[test]
    fn steiner_junction_residual_vanishes() {
        let t = triod_from_dirs(roots_of_unity(), 16);
        let r = junction_residuals(&t).unwrap();
        assert!(r.angle_residual < 1e-12);
        assert_eq!(r.concurrency_residual, 0.0);
        assert!(r.admissible(1e-10));
        assert!(l2_curvature(&t).unwrap() < 1e-10);
    }

    #[test]
    fn parallel_tangents_give_three() {
        let t = triod_from_dirs([[1.0, 0.0], [2.0, 0.0], [0.5, 0.0]], 16);
        let r = junction_residuals(&t).unwrap();
        assert!((r.angle_residual - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_third_tangent_residual() {
        // Oracle: evaluate |Σ τ| by brute force against 2|sin(δ/2)|.
        for &delta in &[1e-3f64, 0.1, 0.5, 1.3] {
            let mut dirs = roots_of_unity();
            let (c, s) = (delta.cos(), delta.sin());
            let d = dirs[2];
            dirs[2] = [c * d[0] - s * d[1], s * d[0] + c * d[1]];
            let t = triod_from_dirs(dirs, 16);
            let r = junction_residuals(&t).unwrap();
            let expected = 2.0 * (delta / 2.0).sin().abs();
            assert!((r.angle_residual - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn concurrency_is_enforced_on_construction() {
        let a = array![[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.3, 0.0], [0.4, 0.0], [0.5, 0.0], [0.6, 0.0], [0.7, 0.0], [0.8, 0.0]];
        let mut b = a.clone();
        b[[0, 0]] = 1e-14;
        let c = a.clone();
        match TriodState::new([a, b, c], 0.0) {
            Err(Error::Concurrency { distance }) => assert!((distance - 1e-14).abs() < 1e-20),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_curve_is_rejected() {
        let mut pts = segment(8).into_points();
        let p = pts.row(3).to_owned();
        pts.row_mut(4).assign(&p);
        assert!(matches!(CurveState::open(pts), Err(Error::Regularity { node: 3, .. })));
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let c = CurveState::from_fn(10, 2, Boundary::Open, |x| vec![3.0 * x * x - x + 1.0, -2.0 * x * x])
            .unwrap();
        let d1 = first_derivative(&c);
        let d2 = second_derivative(&c);
        for (j, x) in c.grid().nodes().enumerate() {
            assert!((d1[[j, 0]] - (6.0 * x - 1.0)).abs() < 1e-11);
            assert!((d1[[j, 1]] + 4.0 * x).abs() < 1e-11);
            assert!((d2[[j, 0]] - 6.0).abs() < 1e-9);
            assert!((d2[[j, 1]] + 4.0).abs() < 1e-9);
        }
    }
}
