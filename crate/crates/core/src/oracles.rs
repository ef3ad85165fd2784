//! Reference solutions and fixtures.
//!
//! Nothing here is a measured value: every quantity is forced analytically or
//! recomputed by an independent method.
//!
//! - Steiner triod: straight constant-speed legs from the Fermat point of the
//!   endpoints. Curvature vanishes and the legs meet at 120°, so the triod is a
//!   stationary solution.
//! - Shrinking circle: a circle of radius `r₀` moving by curvature has
//!   `ṙ = -1/r`, hence `r(t) = √(r₀² - 2t)` and collapse at `t = r₀²/2`.
//! - Length decay: along the flow `-dL/dt = Σᵢ ∫ |κⁱ|² ds` (the junction term
//!   vanishes by the angle condition). [`brute_force_length_decay`] evaluates
//!   the right-hand side with sixth-order local interpolation and Gauss
//!   quadrature, independently of the solver's stencils.
//!
//! Fixtures:
//!
//! - [`bumped_triod`]: the Steiner triod of the endpoints `(1, 0.1)`,
//!   `(-0.6, 0.9)`, `(-0.5, -0.8)` with a smooth compactly supported normal
//!   bump `Aᵢ ψ((x - 0.6)/0.4)`, `ψ(u) = ((1 + cos πu)/2)³` (of class C⁵), on each leg and
//!   amplitudes `A = (0.12, -0.08, 0.10)`. The legs are straight on `[0, 0.2]`,
//!   so the junction is exactly at 120° on every grid.
//! - [`infeasible_triod`]: endpoints `(-1, 0)`, `(1, 0)`, `(0, 0.15)`, whose
//!   triangle has an angle of about 163° at the third endpoint; no Steiner
//!   junction exists and the third leg collapses.
//! - [`parallel_tangent_triod`]: all junction tangents equal to `e₁`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::geometry::{Boundary, CurveState, TriodState};

pub fn third_roots_of_unity() -> [Array1<f64>; 3] {
    std::array::from_fn(|k| {
        let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        Array1::from(vec![t.cos(), t.sin()])
    })
}

fn dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum().sqrt()
}

/// Rejects triangles with an angle of at least 120°.
pub fn check_steiner_feasible(endpoints: &[Array1<f64>; 3]) -> Result<()> {
    for k in 0..3 {
        let a = &endpoints[(k + 1) % 3] - &endpoints[k];
        let b = &endpoints[(k + 2) % 3] - &endpoints[k];
        let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
        if !(na > 0.0 && nb > 0.0) {
            return Err(Error::Shape("endpoints must be distinct".into()));
        }
        let cos = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
        let angle_deg = cos.acos().to_degrees();
        if angle_deg >= 120.0 {
            return Err(Error::InfeasibleSteiner {
                vertex: k,
                angle_deg,
            });
        }
    }
    Ok(())
}

/// Point minimising `Σ |X - Pⁱ|`, by Weiszfeld iterations polished with Newton.
pub fn fermat_point(endpoints: &[Array1<f64>; 3]) -> Result<Array1<f64>> {
    check_steiner_feasible(endpoints)?;
    let dim = endpoints[0].len();
    let mut x = (&endpoints[0] + &endpoints[1] + &endpoints[2]) / 3.0;
    for _ in 0..200 {
        let mut num = Array1::zeros(dim);
        let mut den = 0.0;
        for p in endpoints {
            let w = 1.0 / dist(&x, p);
            num += &(p * w);
            den += w;
        }
        x = num / den;
    }
    for _ in 0..20 {
        let mut grad = nalgebra::DVector::<f64>::zeros(dim);
        let mut hess = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for p in endpoints {
            let d = &x - p;
            let r = d.dot(&d).sqrt();
            let u = &d / r;
            for a in 0..dim {
                grad[a] += u[a];
                for b in 0..dim {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    hess[(a, b)] += (delta - u[a] * u[b]) / r;
                }
            }
        }
        // In R^n, n > 2, the Hessian is singular off the plane of the points;
        // solve in the least-squares sense.
        let step = match hess.clone().svd(true, true).solve(&grad, 1e-14) {
            Ok(s) => s,
            Err(_) => break,
        };
        for a in 0..dim {
            x[a] -= step[a];
        }
        if step.norm() < 1e-16 {
            break;
        }
    }
    Ok(x)
}

/// Straight constant-speed legs from the Fermat point to each endpoint.
pub fn steiner_triod(endpoints: &[Array1<f64>; 3], n_cells: usize) -> Result<TriodState> {
    let f = fermat_point(endpoints)?;
    let dim = f.len();
    let curves: [Result<CurveState>; 3] = std::array::from_fn(|i| {
        let p = &endpoints[i];
        let mut c = CurveState::from_fn(n_cells, dim, Boundary::Open, |x| {
            (0..dim).map(|d| f[d] + x * (p[d] - f[d])).collect()
        })?
        .into_points();
        c.row_mut(n_cells).assign(p);
        c.row_mut(0).assign(&f);
        CurveState::open(c)
    });
    let [a, b, c] = curves;
    TriodState::from_curves([a?, b?, c?], 0.0)
}

/// Quadratic legs `J + x(Pⁱ - J) + x(1 - x)cⁱ` leaving the junction `J` along
/// the unit directions `dⁱ` with speed `|Pⁱ - J|`.
pub fn quadratic_triod(
    junction: &Array1<f64>,
    endpoints: &[Array1<f64>; 3],
    directions: &[Array1<f64>; 3],
    n_cells: usize,
) -> Result<TriodState> {
    let dim = junction.len();
    let curves: [Result<CurveState>; 3] = std::array::from_fn(|i| {
        let chord = &endpoints[i] - junction;
        let len = chord.dot(&chord).sqrt();
        let dn = directions[i].dot(&directions[i]).sqrt();
        let c = &directions[i] * (len / dn) - &chord;
        let mut pts = CurveState::from_fn(n_cells, dim, Boundary::Open, |x| {
            (0..dim)
                .map(|d| junction[d] + x * chord[d] + x * (1.0 - x) * c[d])
                .collect()
        })?
        .into_points();
        pts.row_mut(n_cells).assign(&endpoints[i]);
        CurveState::open(pts)
    });
    let [a, b, c] = curves;
    TriodState::from_curves([a?, b?, c?], 0.0)
}

/// `((1 + cos πu)/2)³` on `|u| < 1`, zero outside; vanishes to sixth order
/// at `u = ±1`.
pub fn bump(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (0.5 * (1.0 + (std::f64::consts::PI * u).cos())).powi(3)
    } else {
        0.0
    }
}

pub const BUMPED_ENDPOINTS: [[f64; 2]; 3] = [[1.0, 0.1], [-0.6, 0.9], [-0.5, -0.8]];
pub const BUMP_AMPLITUDES: [f64; 3] = [0.12, -0.08, 0.10];

/// The bumped triod sampled through the parameter map `φ : [0,1] → [0,1]`
/// (increasing, `φ(0) = 0`, `φ(1) = 1`). Distinct maps give distinct
/// admissible parametrisations of the same set.
pub fn bumped_triod_with<F>(n_cells: usize, phi: F) -> Result<TriodState>
where
    F: Fn(f64) -> f64,
{
    let endpoints = BUMPED_ENDPOINTS.map(|p| Array1::from(p.to_vec()));
    let f = fermat_point(&endpoints)?;
    let curves: [Result<CurveState>; 3] = std::array::from_fn(|i| {
        let chord = &endpoints[i] - &f;
        let len = chord.dot(&chord).sqrt();
        let normal = [-chord[1] / len, chord[0] / len];
        let amp = BUMP_AMPLITUDES[i];
        let mut pts = CurveState::from_fn(n_cells, 2, Boundary::Open, |x| {
            let s = phi(x);
            let g = amp * bump((s - 0.6) / 0.4);
            vec![f[0] + s * chord[0] + g * normal[0], f[1] + s * chord[1] + g * normal[1]]
        })?
        .into_points();
        pts.row_mut(0).assign(&f);
        pts.row_mut(n_cells).assign(&endpoints[i]);
        CurveState::open(pts)
    });
    let [a, b, c] = curves;
    TriodState::from_curves([a?, b?, c?], 0.0)
}

pub fn bumped_triod(n_cells: usize) -> Result<TriodState> {
    bumped_triod_with(n_cells, |x| x)
}

pub fn infeasible_triod(n_cells: usize) -> Result<TriodState> {
    let s = 3f64.sqrt() / 2.0;
    quadratic_triod(
        &Array1::from(vec![0.0, 0.4]),
        &[
            Array1::from(vec![-1.0, 0.0]),
            Array1::from(vec![1.0, 0.0]),
            Array1::from(vec![0.0, 0.15]),
        ],
        &[
            Array1::from(vec![-s, 0.5]),
            Array1::from(vec![s, 0.5]),
            Array1::from(vec![0.0, -1.0]),
        ],
        n_cells,
    )
}

pub fn parallel_tangent_triod(n_cells: usize) -> Result<TriodState> {
    let e1 = Array1::from(vec![1.0, 0.0]);
    quadratic_triod(
        &Array1::zeros(2),
        &[
            Array1::from(vec![1.0, 0.5]),
            Array1::from(vec![1.0, -0.5]),
            Array1::from(vec![1.2, 0.0]),
        ],
        &[e1.clone(), e1.clone(), e1],
        n_cells,
    )
}

/// A circle of radius `r₀` centred at the origin, moving by curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkingCircle {
    pub r0: f64,
    pub n_cells: usize,
}

impl ShrinkingCircle {
    pub fn new(r0: f64, n_cells: usize) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::Config(format!("radius must be positive, got {r0}")));
        }
        Ok(Self { r0, n_cells })
    }

    pub fn initial(&self) -> Result<CurveState> {
        let r = self.r0;
        CurveState::from_fn(self.n_cells, 2, Boundary::Periodic, |x| {
            let t = 2.0 * std::f64::consts::PI * x;
            vec![r * t.cos(), r * t.sin()]
        })
    }

    /// `√(r₀² - 2t)`, zero after collapse.
    pub fn radius(&self, t: f64) -> f64 {
        (self.r0 * self.r0 - 2.0 * t).max(0.0).sqrt()
    }

    pub fn collapse_time(&self) -> f64 {
        0.5 * self.r0 * self.r0
    }
}

/// `Σᵢ ∫ |κⁱ|² ds` over the three legs.
pub fn brute_force_length_decay(state: &TriodState) -> Result<f64> {
    let mut total = 0.0;
    for c in state.curves() {
        total += brute_force_length_decay_curve(c)?;
    }
    Ok(total)
}

const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
const STENCIL: usize = 6;

/// First and second derivative weights of the Lagrange basis on the nodes
/// `0, 1, ..., STENCIL-1`, evaluated at `t`.
fn lagrange_derivative_weights(t: f64) -> ([f64; STENCIL], [f64; STENCIL]) {
    let mut w1 = [0.0; STENCIL];
    let mut w2 = [0.0; STENCIL];
    for k in 0..STENCIL {
        let tk = k as f64;
        let denom: f64 = (0..STENCIL).filter(|&m| m != k).map(|m| tk - m as f64).product();
        let others: Vec<f64> = (0..STENCIL).filter(|&m| m != k).map(|m| m as f64).collect();
        // derivatives of Π (t - t_m) over the other nodes
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for a in 0..others.len() {
            let pa: f64 = (0..others.len())
                .filter(|&q| q != a)
                .map(|q| t - others[q])
                .product();
            d1 += pa;
            for b in 0..others.len() {
                if b == a {
                    continue;
                }
                let pab: f64 = (0..others.len())
                    .filter(|&q| q != a && q != b)
                    .map(|q| t - others[q])
                    .product();
                d2 += pab;
            }
        }
        w1[k] = d1 / denom;
        w2[k] = d2 / denom;
    }
    (w1, w2)
}

/// `∫ |κ|² ds` for one curve.
pub fn brute_force_length_decay_curve(curve: &CurveState) -> Result<f64> {
    let n = curve.n_cells();
    let dim = curve.dim();
    let h = 1.0 / n as f64;
    let pts: &Array2<f64> = &curve.points().to_owned();
    let mut total = 0.0;
    for j in 0..n {
        let (start, wrap) = match curve.boundary() {
            Boundary::Open => ((j as isize - 2).clamp(0, n as isize - 5), false),
            Boundary::Periodic => (j as isize - 2, true),
        };
        let node = |k: usize| -> usize {
            let idx = start + k as isize;
            if wrap {
                idx.rem_euclid(n as isize) as usize
            } else {
                idx as usize
            }
        };
        for (g, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            let xi = 0.5 * (1.0 + g);
            let t = (j as f64 + xi) - start as f64;
            let (w1, w2) = lagrange_derivative_weights(t);
            let mut a = vec![0.0; dim];
            let mut b = vec![0.0; dim];
            for k in 0..STENCIL {
                let p = pts.row(node(k));
                for d in 0..dim {
                    a[d] += w1[k] * p[d] / h;
                    b[d] += w2[k] * p[d] / (h * h);
                }
            }
            let aa: f64 = a.iter().map(|v| v * v).sum();
            let bb: f64 = b.iter().map(|v| v * v).sum();
            let ab: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
            if !(aa > 0.0) {
                return Err(Error::Regularity { node: j, speed: aa.sqrt() });
            }
            let kappa2 = (aa * bb - ab * ab).max(0.0) / (aa * aa * aa);
            total += 0.5 * h * w * kappa2 * aa.sqrt();
        }
    }
    Ok(total)
}
