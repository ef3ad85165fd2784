//! Constant-speed reparametrisation and set-level comparison of networks.
//!
//! Resampling moves nodes along the input polyline until all chords have the
//! same length, keeping the first and last node fixed. A polyline with equal
//! chords is its own resampling, so the operation is idempotent.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::geometry::{distance, Boundary, CurveState, TriodState, MIN_CELLS};

/// Dense samples per cell in [`PolylineSet`].
pub const DENSE_FACTOR: usize = 8;

const MAX_SWEEPS: usize = 100;

/// Cumulative arclength of the node polyline.
fn cumulative_length(points: ArrayView1<'_, f64>, dim: usize) -> Vec<f64> {
    let rows = points.len() / dim;
    let mut s = Vec::with_capacity(rows);
    s.push(0.0);
    for j in 1..rows {
        let d: f64 = (0..dim)
            .map(|k| (points[j * dim + k] - points[(j - 1) * dim + k]).powi(2))
            .sum::<f64>()
            .sqrt();
        s.push(s[j - 1] + d);
    }
    s
}

/// Point at arclength `s` along the polyline with cumulative table `table`.
fn point_at(points: &Array2<f64>, table: &[f64], s: f64) -> Array1<f64> {
    let last = table.len() - 1;
    let s = s.clamp(0.0, table[last]);
    let k = match table.partition_point(|&v| v <= s) {
        0 => 0,
        p => (p - 1).min(last - 1),
    };
    let span = table[k + 1] - table[k];
    let t = if span > 0.0 { (s - table[k]) / span } else { 0.0 };
    &points.row(k) * (1.0 - t) + &points.row(k + 1) * t
}

/// Piecewise linear interpolation of `ys` over increasing `xs`.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + t * (ys[k + 1] - ys[k])
}

/// Resamples `curve` to `n_cells` cells of equal chord length on its polyline.
pub fn resample_to(curve: &CurveState, n_cells: usize) -> Result<CurveState> {
    if n_cells < MIN_CELLS {
        return Err(Error::GridTooCoarse {
            n_cells,
            min: MIN_CELLS,
        });
    }
    let (node, speed) = curve.min_cell_speed();
    if !(speed > 0.0) {
        return Err(Error::Regularity { node, speed });
    }
    let dim = curve.dim();
    let src = curve.points().to_owned();
    let flat = Array1::from_iter(src.iter().copied());
    let table = cumulative_length(flat.view(), dim);
    let total = *table.last().expect("curve has nodes");

    let mut arcs: Vec<f64> = (0..=n_cells)
        .map(|k| total * k as f64 / n_cells as f64)
        .collect();
    let mut out = Array2::zeros((n_cells + 1, dim));
    for sweep in 0..MAX_SWEEPS {
        for (k, &s) in arcs.iter().enumerate() {
            out.row_mut(k).assign(&point_at(&src, &table, s));
        }
        out.row_mut(0).assign(&src.row(0));
        out.row_mut(n_cells).assign(&src.row(src.nrows() - 1));
        let chords: Vec<f64> = (0..n_cells)
            .map(|k| distance(out.row(k), out.row(k + 1)))
            .collect();
        let mean = chords.iter().sum::<f64>() / n_cells as f64;
        let spread = chords.iter().fold(0.0_f64, |m, c| m.max((c - mean).abs()));
        if spread <= 1e-14 * total {
            break;
        }
        if sweep + 1 == MAX_SWEEPS {
            log::warn!("equal-chord resampling stopped with chord spread {spread:e}");
        }
        let mut cum = vec![0.0; n_cells + 1];
        for k in 0..n_cells {
            cum[k + 1] = cum[k] + chords[k];
        }
        let c_total = cum[n_cells];
        let new_arcs: Vec<f64> = (0..=n_cells)
            .map(|k| interp(&cum, &arcs, c_total * k as f64 / n_cells as f64))
            .collect();
        arcs = new_arcs;
    }
    if curve.boundary() == Boundary::Periodic {
        let first = out.row(0).to_owned();
        out.row_mut(n_cells).assign(&first);
    }
    CurveState::new(out, curve.boundary())
}

/// Constant-speed resampling on the same grid.
pub fn resample_constant_speed(curve: &CurveState) -> Result<CurveState> {
    resample_to(curve, curve.n_cells())
}

/// Resamples the three legs of a triod to `n_cells` cells each; the junction
/// and endpoints are kept bit-exact.
pub fn resample_triod(triod: &TriodState, n_cells: usize) -> Result<TriodState> {
    let c = triod.curves();
    TriodState::from_curves(
        [
            resample_to(&c[0], n_cells)?,
            resample_to(&c[1], n_cells)?,
            resample_to(&c[2], n_cells)?,
        ],
        triod.time(),
    )
}

/// A union of polylines densely resampled as a point-set proxy of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylineSet {
    dim: usize,
    /// Node polylines, one `(rows, dim)` array per curve.
    polylines: Vec<Array2<f64>>,
    /// Dense samples, `q` per segment plus the last node of each polyline.
    samples: Vec<Array1<f64>>,
}

impl PolylineSet {
    pub fn new(polylines: Vec<Array2<f64>>, q: usize) -> Result<Self> {
        if polylines.is_empty() || q == 0 {
            return Err(Error::Shape("a polyline set needs curves and q ≥ 1".into()));
        }
        let dim = polylines[0].ncols();
        let mut samples = Vec::new();
        for p in &polylines {
            if p.ncols() != dim || p.nrows() < 2 {
                return Err(Error::Shape("inconsistent polylines".into()));
            }
            for k in 0..p.nrows() - 1 {
                for m in 0..q {
                    let t = m as f64 / q as f64;
                    samples.push(&p.row(k) * (1.0 - t) + &p.row(k + 1) * t);
                }
            }
            samples.push(p.row(p.nrows() - 1).to_owned());
        }
        Ok(Self {
            dim,
            polylines,
            samples,
        })
    }

    pub fn from_triod(triod: &TriodState) -> Self {
        let lines = triod.curves().iter().map(|c| c.points().to_owned()).collect();
        Self::new(lines, DENSE_FACTOR).expect("a triod gives valid polylines")
    }

    pub fn from_curve(curve: &CurveState) -> Self {
        Self::new(vec![curve.points().to_owned()], DENSE_FACTOR).expect("a curve gives a valid polyline")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Array1<f64>] {
        &self.samples
    }

    /// Exact distance from `x` to the union of segments.
    pub fn distance_to(&self, x: ArrayView1<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for p in &self.polylines {
            for k in 0..p.nrows() - 1 {
                best = best.min(point_segment_distance(x, p.row(k), p.row(k + 1)));
            }
        }
        best
    }
}

fn point_segment_distance(x: ArrayView1<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut ab2 = 0.0;
    let mut axab = 0.0;
    for k in 0..x.len() {
        let e = b[k] - a[k];
        ab2 += e * e;
        axab += (x[k] - a[k]) * e;
    }
    let t = if ab2 > 0.0 { (axab / ab2).clamp(0.0, 1.0) } else { 0.0 };
    let mut d2 = 0.0;
    for k in 0..x.len() {
        let v = x[k] - (a[k] + t * (b[k] - a[k]));
        d2 += v * v;
    }
    d2.sqrt()
}

fn directed(a: &PolylineSet, b: &PolylineSet) -> f64 {
    a.samples
        .iter()
        .map(|x| b.distance_to(x.view()))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between the dense samples of each set and
/// the polylines of the other.
pub fn hausdorff_distance(a: &PolylineSet, b: &PolylineSet) -> f64 {
    if a.polylines == b.polylines {
        return 0.0;
    }
    directed(a, b).max(directed(b, a))
}

pub fn triod_hausdorff(a: &TriodState, b: &TriodState) -> f64 {
    hausdorff_distance(&PolylineSet::from_triod(a), &PolylineSet::from_triod(b))
}
