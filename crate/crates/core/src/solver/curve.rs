//! Single-curve mode: one closed curve, or one open curve with both ends
//! pinned, moving by the same Special Flow without a junction.
//!
//! Closed curves are solved in the interleaved node order `0, 1, N-1, 2, N-2, …`,
//! which turns the cyclic tridiagonal matrix into a band of half-width 2.

use ndarray::{Array1, Array2};

use super::{monitor, next_dt, picard_verdict, stop_for, FlowConfig, RunOutput, Snapshot, StepReport, StopReason};
use crate::error::Result;
use crate::geometry::{self, Boundary, CurveState};
use crate::linearized::banded::{BandLu, BandMatrix};
use crate::reparam;

/// Factorised backward Euler step for one curve, frozen at `σ`.
#[derive(Debug, Clone)]
pub struct CurveStepper {
    sigma: CurveState,
    diffusion: Array1<f64>,
    reg_floor: f64,
    dt: f64,
    /// Position of each unknown node in the solve order.
    position: Vec<usize>,
    lu: BandLu,
}

fn interleaved(n: usize) -> Vec<usize> {
    let mut order = vec![0];
    let (mut lo, mut hi) = (1, n - 1);
    while lo <= hi {
        order.push(lo);
        if hi != lo {
            order.push(hi);
        }
        lo += 1;
        hi -= 1;
    }
    let mut position = vec![0; n];
    for (p, &node) in order.iter().enumerate() {
        position[node] = p;
    }
    position
}

impl CurveStepper {
    pub fn new(sigma: CurveState, reg_floor: f64, dt: f64) -> Result<Self> {
        let s = geometry::speeds(geometry::first_derivative(&sigma).view())?;
        let diffusion = s.mapv(|v| 1.0 / (v * v));
        let n = sigma.n_cells();
        let k = (n * n) as f64;
        let (position, matrix) = match sigma.boundary() {
            Boundary::Open => {
                let position: Vec<usize> = (0..=n).collect();
                let mut a = BandMatrix::zeros(n + 1, 1, 1);
                a.set(0, 0, 1.0);
                a.set(n, n, 1.0);
                for j in 1..n {
                    let c = diffusion[j] * k;
                    a.set(j, j - 1, -c);
                    a.set(j, j, 1.0 / dt + 2.0 * c);
                    a.set(j, j + 1, -c);
                }
                (position, a)
            }
            Boundary::Periodic => {
                let position = interleaved(n);
                let mut a = BandMatrix::zeros(n, 2, 2);
                for j in 0..n {
                    let c = diffusion[j] * k;
                    let r = position[j];
                    a.add(r, position[(j + n - 1) % n], -c);
                    a.add(r, r, 1.0 / dt + 2.0 * c);
                    a.add(r, position[(j + 1) % n], -c);
                }
                (position, a)
            }
        };
        let lu = matrix.factorize()?;
        Ok(Self {
            sigma,
            diffusion,
            reg_floor,
            dt,
            position,
            lu,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sigma(&self) -> &CurveState {
        &self.sigma
    }

    pub fn reg_floor(&self) -> f64 {
        self.reg_floor
    }

    fn forcing(&self, gamma: &CurveState) -> Result<Array2<f64>> {
        let d1 = geometry::first_derivative(gamma);
        let mut d2 = geometry::second_derivative(gamma);
        let s = geometry::speeds(d1.view())?;
        for (j, mut row) in d2.rows_mut().into_iter().enumerate() {
            row *= 1.0 / (s[j] * s[j]) - self.diffusion[j];
        }
        Ok(d2)
    }

    /// One linear solve with forcing from `gamma` and previous level `psi`.
    fn solve(&self, psi: &CurveState, gamma: &CurveState) -> Result<CurveState> {
        let f = self.forcing(gamma)?;
        let n = psi.n_cells();
        let p = psi.points();
        let mut out = Array2::zeros(p.raw_dim());
        let unknowns = self.position.len();
        for d in 0..psi.dim() {
            let mut rhs = vec![0.0; unknowns];
            for j in 0..unknowns {
                rhs[self.position[j]] = p[[j, d]] / self.dt + f[[j, d]];
            }
            if psi.boundary() == Boundary::Open {
                rhs[0] = p[[0, d]];
                rhs[n] = p[[n, d]];
            }
            self.lu.solve_in_place(&mut rhs);
            for j in 0..unknowns {
                out[[j, d]] = rhs[self.position[j]];
            }
            match psi.boundary() {
                Boundary::Open => {
                    out[[0, d]] = p[[0, d]];
                    out[[n, d]] = p[[n, d]];
                }
                Boundary::Periodic => out[[n, d]] = out[[0, d]],
            }
        }
        CurveState::new(out, psi.boundary())
    }
}

fn curve_report(curve: &CurveState, time: f64, iters: usize, residual: f64) -> Result<StepReport> {
    let len = geometry::length(curve)?;
    Ok(StepReport {
        time,
        lengths: vec![len],
        total_length: len,
        l2_curvature: geometry::curve_l2_curvature_squared(curve)?.sqrt(),
        angle_residual: 0.0,
        min_speed: curve.min_speed(),
        picard_iters: iters,
        picard_final_residual: residual,
    })
}

/// Fixed-point step of one curve; returns the new curve and its iteration count
/// and final displacement.
pub fn step_curve(
    state: &CurveState,
    stepper: &CurveStepper,
    config: &FlowConfig,
) -> Result<(CurveState, usize, f64)> {
    let mut iterate = state.clone();
    let mut displacements = Vec::new();
    loop {
        let next = stepper.solve(state, &iterate)?;
        let (node, speed) = next.min_cell_speed();
        if speed < stepper.reg_floor {
            return Err(crate::error::Error::Regularity { node, speed });
        }
        let disp = next
            .points()
            .rows()
            .into_iter()
            .zip(iterate.points().rows())
            .map(|(a, b)| geometry::distance(a, b))
            .fold(0.0, f64::max);
        displacements.push(disp);
        iterate = next;
        if picard_verdict(&displacements, config.picard_tol, config.max_picard)? {
            return Ok((iterate, displacements.len(), disp));
        }
    }
}

/// Single-curve counterpart of [`super::run`], starting at `t = 0`.
pub fn run_curve(initial: &CurveState, config: &FlowConfig) -> Result<RunOutput<CurveState>> {
    config.validate()?;
    let mut state = match config.n_cells {
        Some(n) if n != initial.n_cells() => reparam::resample_to(initial, n)?,
        _ => initial.clone(),
    };
    let l0 = geometry::length(&state)?;
    let (collapse, blowup) = config.thresholds(state.n_cells(), l0);
    let mut effective = config.clone();
    effective.n_cells = Some(state.n_cells());
    effective.length_collapse_threshold = Some(collapse);
    effective.curvature_blowup_threshold = Some(blowup);

    let mut time = 0.0;
    let mut snapshots = vec![Snapshot {
        report: curve_report(&state, time, 0, 0.0)?,
        state: state.clone(),
    }];
    let mut reports = Vec::new();
    let mut stepper: Option<CurveStepper> = None;
    let mut steps = 0usize;
    let stop = loop {
        let Some(dt) = next_dt(time, config) else {
            break StopReason::HorizonReached;
        };
        let refresh = steps % config.relinearize_every == 0;
        match stepper.as_mut() {
            Some(s) if !refresh && s.dt == dt => {}
            Some(s) if !refresh => {
                *s = CurveStepper::new(s.sigma.clone(), s.reg_floor, dt)?;
            }
            _ => {
                let floor = config.reg_floor_factor * state.min_speed();
                stepper = Some(CurveStepper::new(state.clone(), floor, dt)?);
            }
        }
        let st = stepper.as_ref().expect("stepper initialised above");
        let (next, iters, residual) = match step_curve(&state, st, config) {
            Ok(r) => r,
            Err(e) => match stop_for(&e) {
                Some(reason) => break reason,
                None => return Err(e),
            },
        };
        steps += 1;
        time += dt;
        state = if config.resample {
            reparam::resample_to(&next, next.n_cells())?
        } else {
            next
        };
        let report = curve_report(&state, time, iters, residual)?;
        reports.push(report.clone());
        let fired = monitor(
            &report.lengths,
            report.l2_curvature,
            report.min_speed,
            st.reg_floor,
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
            break reason;
        }
    };
    if snapshots.last().map(|s| s.report.time) != Some(time) {
        let report = curve_report(&state, time, 0, 0.0)?;
        snapshots.push(Snapshot { state, report });
    }
    Ok(RunOutput {
        snapshots,
        reports,
        stop,
        config: effective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::ShrinkingCircle;

    #[test]
    fn interleaving_is_a_permutation_with_short_links() {
        for n in [8, 9, 16, 33] {
            let pos = interleaved(n);
            let mut seen = pos.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for j in 0..n {
                assert!(pos[j].abs_diff(pos[(j + 1) % n]) <= 2);
            }
        }
    }

    #[test]
    fn straight_segment_is_stationary() {
        let seg = CurveState::from_fn(16, 2, Boundary::Open, |x| vec![x, 2.0 * x]).unwrap();
        let config = FlowConfig {
            dt: 1e-3,
            t_end: 0.05,
            ..FlowConfig::default()
        };
        let out = run_curve(&seg, &config).unwrap();
        assert_eq!(out.stop, StopReason::HorizonReached);
        let last = out.final_state();
        for (a, b) in last.points().iter().zip(seg.points().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_shrinks_at_the_exact_rate() {
        let oracle = ShrinkingCircle::new(1.0, 64).unwrap();
        let config = FlowConfig {
            dt: 1e-4,
            t_end: 0.1,
            ..FlowConfig::default()
        };
        let out = run_curve(&oracle.initial().unwrap(), &config).unwrap();
        assert_eq!(out.stop, StopReason::HorizonReached);
        let c = out.final_state();
        let r = c
            .points()
            .rows()
            .into_iter()
            .take(64)
            .map(|p| p.dot(&p).sqrt())
            .sum::<f64>()
            / 64.0;
        assert!((r - oracle.radius(0.1)).abs() < 5e-3, "{r}");
    }
}
