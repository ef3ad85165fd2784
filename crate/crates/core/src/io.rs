//! Network files, trajectories and configuration files.
//!
//! # Network JSON
//!
//! ```json
//! {
//!   "version": 1,
//!   "topology": "triod",
//!   "dimension": 2,
//!   "cells": 8,
//!   "endpoints": [[1.0, 0.0], [-0.5, 0.866], [-0.5, -0.866]],
//!   "curves": [[[0.0, 0.0], [0.125, 0.0], ...], [...], [...]],
//!   "metadata": {"name": "steiner"}
//! }
//! ```
//!
//! `topology` is `triod` (three curves, first rows identical, last rows equal
//! to `endpoints`), `open_curve` or `closed_curve` (one curve; a closed curve
//! repeats its first point as its last). Every curve has `cells + 1` rows of
//! `dimension` numbers, `cells ≥ 8`. `metadata` is optional and free-form.
//!
//! # Trajectories
//!
//! CSV: `time,curve,node,x0,...` with one row per node and snapshot, plus a
//! `<stem>.diagnostics.csv` sidecar with header
//! `time,L1,L2,L3,total_length,l2_curvature,angle_residual,min_speed,picard_iters`.
//! JSONL: one snapshot object per line with points and all diagnostics.
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{Boundary, CurveState, TriodState, MIN_CELLS};
use crate::solver::{FlowConfig, RunOutput, StepReport};

pub const NETWORK_VERSION: u32 = 1;

pub const DIAGNOSTICS_HEADER: [&str; 9] = [
    "time",
    "L1",
    "L2",
    "L3",
    "total_length",
    "l2_curvature",
    "angle_residual",
    "min_speed",
    "picard_iters",
];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: malformed input: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: invalid field `{field}`: {source}")]
    Validation {
        path: PathBuf,
        field: String,
        #[source]
        source: Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Triod,
    OpenCurve,
    ClosedCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub version: u32,
    pub topology: Topology,
    pub dimension: usize,
    pub cells: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub endpoints: Vec<Vec<f64>>,
    pub curves: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// A loaded network: a triod or a single curve.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Triod(TriodState),
    Curve(CurveState),
}

impl Network {
    pub fn n_cells(&self) -> usize {
        match self {
            Network::Triod(t) => t.n_cells(),
            Network::Curve(c) => c.n_cells(),
        }
    }
}

fn rows_of(points: &Array2<f64>) -> Vec<Vec<f64>> {
    points.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl NetworkFile {
    pub fn from_triod(t: &TriodState) -> Self {
        Self {
            version: NETWORK_VERSION,
            topology: Topology::Triod,
            dimension: t.dim(),
            cells: t.n_cells(),
            endpoints: t.endpoints().iter().map(|p| p.to_vec()).collect(),
            curves: t.curves().iter().map(|c| rows_of(&c.points().to_owned())).collect(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn from_curve(c: &CurveState) -> Self {
        Self {
            version: NETWORK_VERSION,
            topology: match c.boundary() {
                Boundary::Open => Topology::OpenCurve,
                Boundary::Periodic => Topology::ClosedCurve,
            },
            dimension: c.dim(),
            cells: c.n_cells(),
            endpoints: Vec::new(),
            curves: vec![rows_of(&c.points().to_owned())],
            metadata: BTreeMap::new(),
        }
    }

    pub fn from_network(n: &Network) -> Self {
        match n {
            Network::Triod(t) => Self::from_triod(t),
            Network::Curve(c) => Self::from_curve(c),
        }
    }

    pub fn with_metadata(mut self, key: &str, value: serde_json::Value) -> Self {
        self.metadata.insert(key.to_string(), value);
        self
    }

    /// Checks the file against the schema and builds the network. Errors
    /// carry the path of the offending field.
    pub fn to_network(&self) -> std::result::Result<Network, (String, Error)> {
        let fail = |field: String, e: Error| Err((field, e));
        if self.version != NETWORK_VERSION {
            return fail(
                "version".into(),
                Error::Shape(format!("unsupported version {}, expected {NETWORK_VERSION}", self.version)),
            );
        }
        if self.dimension < 2 {
            return fail(
                "dimension".into(),
                Error::Shape(format!("dimension must be at least 2, got {}", self.dimension)),
            );
        }
        if self.cells < MIN_CELLS {
            return fail(
                "cells".into(),
                Error::GridTooCoarse {
                    n_cells: self.cells,
                    min: MIN_CELLS,
                },
            );
        }
        let expected = match self.topology {
            Topology::Triod => 3,
            _ => 1,
        };
        if self.curves.len() != expected {
            return fail(
                "curves".into(),
                Error::Shape(format!("expected {expected} curves, got {}", self.curves.len())),
            );
        }
        let mut arrays = Vec::with_capacity(expected);
        for (i, c) in self.curves.iter().enumerate() {
            if c.len() != self.cells + 1 {
                return fail(
                    format!("curves[{i}]"),
                    Error::Shape(format!("expected {} points, got {}", self.cells + 1, c.len())),
                );
            }
            let mut a = Array2::zeros((self.cells + 1, self.dimension));
            for (j, p) in c.iter().enumerate() {
                if p.len() != self.dimension {
                    return fail(
                        format!("curves[{i}][{j}]"),
                        Error::Shape(format!("expected {} coordinates, got {}", self.dimension, p.len())),
                    );
                }
                for (d, &v) in p.iter().enumerate() {
                    a[[j, d]] = v;
                }
            }
            arrays.push(a);
        }
        match self.topology {
            Topology::Triod => {
                if self.endpoints.len() != 3 {
                    return fail(
                        "endpoints".into(),
                        Error::Shape(format!("expected 3 endpoints, got {}", self.endpoints.len())),
                    );
                }
                for (i, e) in self.endpoints.iter().enumerate() {
                    if e.as_slice() != arrays[i].row(self.cells).as_slice().expect("standard layout") {
                        return fail(
                            format!("endpoints[{i}]"),
                            Error::Shape(format!("endpoint does not match the last point of curve {i}")),
                        );
                    }
                }
                let junction = arrays[0].row(0).to_owned();
                for i in 1..3 {
                    if arrays[i].row(0) != junction {
                        let distance = crate::geometry::distance(arrays[i].row(0), junction.view());
                        return fail(format!("curves[{i}][0]"), Error::Concurrency { distance });
                    }
                }
                let mut curves = Vec::with_capacity(3);
                for (i, a) in arrays.into_iter().enumerate() {
                    curves.push(CurveState::open(a).map_err(|e| (format!("curves[{i}]"), e))?);
                }
                let [a, b, c]: [CurveState; 3] = curves.try_into().expect("three curves");
                TriodState::from_curves([a, b, c], 0.0)
                    .map(Network::Triod)
                    .map_err(|e| ("curves".into(), e))
            }
            Topology::OpenCurve | Topology::ClosedCurve => {
                let boundary = if self.topology == Topology::OpenCurve {
                    Boundary::Open
                } else {
                    Boundary::Periodic
                };
                let a = arrays.pop().expect("one curve");
                CurveState::new(a, boundary)
                    .map(Network::Curve)
                    .map_err(|e| ("curves[0]".into(), e))
            }
        }
    }
}

pub fn parse_network(text: &str, path: &Path) -> IoResult<(Network, NetworkFile)> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| parse_err(path, e))?;
    let net = file.to_network().map_err(|(field, source)| IoError::Validation {
        path: path.to_path_buf(),
        field,
        source,
    })?;
    Ok((net, file))
}

/// Loads a network file of any topology.
pub fn load_any(path: &Path) -> IoResult<Network> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_network(&text, path).map(|(n, _)| n)
}

/// Loads a triod network file.
pub fn load_network(path: &Path) -> IoResult<TriodState> {
    match load_any(path)? {
        Network::Triod(t) => Ok(t),
        Network::Curve(_) => Err(IoError::Validation {
            path: path.to_path_buf(),
            field: "topology".into(),
            source: Error::Shape("expected a triod".into()),
        }),
    }
}

pub fn save_network(file: &NetworkFile, path: &Path) -> IoResult<()> {
    let text = serde_json::to_string_pretty(file).expect("network files serialise");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn load_config(path: &Path) -> IoResult<FlowConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let config: FlowConfig = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    config.validate().map_err(|source| IoError::Validation {
        path: path.to_path_buf(),
        field: "config".into(),
        source,
    })?;
    Ok(config)
}

/// One snapshot: points per curve (`curve → node → coordinates`) and its
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub report: StepReport,
    pub curves: Vec<Vec<Vec<f64>>>,
}

impl TrajectoryRecord {
    pub fn time(&self) -> f64 {
        self.report.time
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub dimension: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn from_triod_run(out: &RunOutput<TriodState>) -> Self {
        let records = out
            .snapshots
            .iter()
            .map(|s| TrajectoryRecord {
                report: s.report.clone(),
                curves: s.state.curves().iter().map(|c| rows_of(&c.points().to_owned())).collect(),
            })
            .collect();
        Self {
            dimension: out.snapshots.first().map_or(0, |s| s.state.dim()),
            records,
        }
    }

    pub fn from_curve_run(out: &RunOutput<CurveState>) -> Self {
        let records = out
            .snapshots
            .iter()
            .map(|s| TrajectoryRecord {
                report: s.report.clone(),
                curves: vec![rows_of(&s.state.points().to_owned())],
            })
            .collect();
        Self {
            dimension: out.snapshots.first().map_or(0, |s| s.state.dim()),
            records,
        }
    }

    /// Snapshot `k` as a triod.
    pub fn triod(&self, k: usize) -> crate::Result<TriodState> {
        let r = &self.records[k];
        if r.curves.len() != 3 {
            return Err(Error::Shape(format!("record {k} has {} curves", r.curves.len())));
        }
        let arrays: Vec<Array2<f64>> = r.curves.iter().map(|c| to_array(c, self.dimension)).collect::<crate::Result<_>>()?;
        let [a, b, c]: [Array2<f64>; 3] = arrays.try_into().expect("three curves");
        TriodState::new([a, b, c], r.time())
    }

    fn check_times(&self) -> crate::Result<()> {
        for w in self.records.windows(2) {
            if !(w[1].time() > w[0].time()) {
                return Err(Error::Shape(format!(
                    "snapshot times must increase strictly ({} then {})",
                    w[0].time(),
                    w[1].time()
                )));
            }
        }
        Ok(())
    }
}

fn to_array(rows: &[Vec<f64>], dim: usize) -> crate::Result<Array2<f64>> {
    let mut a = Array2::zeros((rows.len(), dim));
    for (j, p) in rows.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Shape(format!("node {j} has {} coordinates", p.len())));
        }
        for (d, &v) in p.iter().enumerate() {
            a[[j, d]] = v;
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrajectoryFormat {
    Csv,
    Jsonl,
}

/// `<dir>/<stem><suffix>` next to `path`.
pub fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn save_trajectory(traj: &Trajectory, path: &Path, format: TrajectoryFormat) -> IoResult<()> {
    traj.check_times().map_err(|source| IoError::Validation {
        path: path.to_path_buf(),
        field: "records".into(),
        source,
    })?;
    match format {
        TrajectoryFormat::Csv => save_csv(traj, path),
        TrajectoryFormat::Jsonl => {
            let f = File::create(path).map_err(io_err(path))?;
            let mut w = BufWriter::new(f);
            for r in &traj.records {
                let line = serde_json::to_string(r).expect("records serialise");
                writeln!(w, "{line}").map_err(io_err(path))?;
            }
            w.flush().map_err(io_err(path))
        }
    }
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |e| IoError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

fn save_csv(traj: &Trajectory, path: &Path) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io(path))?;
    let mut header = vec!["time".to_string(), "curve".into(), "node".into()];
    header.extend((0..traj.dimension).map(|d| format!("x{d}")));
    w.write_record(&header).map_err(csv_io(path))?;
    for r in &traj.records {
        for (i, c) in r.curves.iter().enumerate() {
            for (j, p) in c.iter().enumerate() {
                let mut row = vec![fmt(r.time()), i.to_string(), j.to_string()];
                row.extend(p.iter().map(|&v| fmt(v)));
                w.write_record(&row).map_err(csv_io(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;

    let diag = sidecar_path(path, ".diagnostics.csv");
    let mut w = csv::Writer::from_path(&diag).map_err(csv_io(&diag))?;
    w.write_record(DIAGNOSTICS_HEADER).map_err(csv_io(&diag))?;
    for r in &traj.records {
        let rep = &r.report;
        let mut row = vec![fmt(rep.time)];
        row.extend((0..3).map(|i| rep.lengths.get(i).map_or(String::new(), |&v| fmt(v))));
        row.extend([
            fmt(rep.total_length),
            fmt(rep.l2_curvature),
            fmt(rep.angle_residual),
            fmt(rep.min_speed),
            rep.picard_iters.to_string(),
        ]);
        w.write_record(&row).map_err(csv_io(&diag))?;
    }
    w.flush().map_err(io_err(&diag))
}

/// Reads a trajectory back. CSV does not carry `picard_final_residual`, which
/// loads as NaN.
pub fn load_trajectory(path: &Path, format: TrajectoryFormat) -> IoResult<Trajectory> {
    let traj = match format {
        TrajectoryFormat::Csv => load_csv(path)?,
        TrajectoryFormat::Jsonl => {
            let f = File::open(path).map_err(io_err(path))?;
            let mut records = Vec::new();
            for (k, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io_err(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: TrajectoryRecord =
                    serde_json::from_str(&line).map_err(|e| parse_err(path, format!("line {}: {e}", k + 1)))?;
                records.push(r);
            }
            let dimension = records
                .first()
                .and_then(|r| r.curves.first())
                .and_then(|c| c.first())
                .map_or(0, |p| p.len());
            Trajectory { dimension, records }
        }
    };
    traj.check_times().map_err(|source| IoError::Validation {
        path: path.to_path_buf(),
        field: "records".into(),
        source,
    })?;
    Ok(traj)
}

fn num<T: std::str::FromStr>(path: &Path, field: &str, s: &str) -> IoResult<T> {
    s.parse()
        .map_err(|_| parse_err(path, format!("bad value {s:?} in column {field}")))
}

fn load_csv(path: &Path) -> IoResult<Trajectory> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_io(path))?;
    let header = rd.headers().map_err(csv_io(path))?.clone();
    if header.len() < 3 || &header[0] != "time" || &header[1] != "curve" || &header[2] != "node" {
        return Err(parse_err(path, "header must start with time,curve,node"));
    }
    let dimension = header.len() - 3;
    // (time, curves)
    let mut snaps: Vec<(f64, Vec<Vec<Vec<f64>>>)> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_io(path))?;
        let t: f64 = num(path, "time", &rec[0])?;
        let c: usize = num(path, "curve", &rec[1])?;
        let j: usize = num(path, "node", &rec[2])?;
        let p = (3..rec.len())
            .map(|k| num(path, &header[k], &rec[k]))
            .collect::<IoResult<Vec<f64>>>()?;
        if snaps.last().map(|s| s.0.to_bits()) != Some(t.to_bits()) {
            snaps.push((t, Vec::new()));
        }
        let curves = &mut snaps.last_mut().expect("pushed above").1;
        if c == curves.len() {
            curves.push(Vec::new());
        }
        if c + 1 != curves.len() || j != curves[c].len() {
            return Err(parse_err(path, format!("rows out of order at t = {t}, curve {c}, node {j}")));
        }
        curves[c].push(p);
    }

    let diag = sidecar_path(path, ".diagnostics.csv");
    let mut rd = csv::Reader::from_path(&diag).map_err(csv_io(&diag))?;
    let h = rd.headers().map_err(csv_io(&diag))?.clone();
    if h.iter().ne(DIAGNOSTICS_HEADER.iter().copied()) {
        return Err(parse_err(&diag, "unexpected diagnostics header"));
    }
    let mut reports = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_io(&diag))?;
        let lengths = (1..4)
            .filter(|&k| !rec[k].is_empty())
            .map(|k| num(&diag, DIAGNOSTICS_HEADER[k], &rec[k]))
            .collect::<IoResult<Vec<f64>>>()?;
        reports.push(StepReport {
            time: num(&diag, "time", &rec[0])?,
            lengths,
            total_length: num(&diag, "total_length", &rec[4])?,
            l2_curvature: num(&diag, "l2_curvature", &rec[5])?,
            angle_residual: num(&diag, "angle_residual", &rec[6])?,
            min_speed: num(&diag, "min_speed", &rec[7])?,
            picard_iters: num(&diag, "picard_iters", &rec[8])?,
            picard_final_residual: f64::NAN,
        });
    }
    if reports.len() != snaps.len() {
        return Err(parse_err(
            &diag,
            format!("{} diagnostic rows for {} snapshots", reports.len(), snaps.len()),
        ));
    }
    let mut records = Vec::with_capacity(snaps.len());
    for ((t, curves), report) in snaps.into_iter().zip(reports) {
        if t.to_bits() != report.time.to_bits() {
            return Err(parse_err(&diag, format!("time {} does not match snapshot time {t}", report.time)));
        }
        records.push(TrajectoryRecord { report, curves });
    }
    Ok(Trajectory { dimension, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use proptest::prelude::*;

    fn steiner_file(n: usize) -> NetworkFile {
        NetworkFile::from_triod(&oracles::steiner_triod(&oracles::third_roots_of_unity(), n).unwrap())
    }

    fn path() -> PathBuf {
        PathBuf::from("test.json")
    }

    #[test]
    fn steiner_file_loads_admissible() {
        let text = serde_json::to_string(&steiner_file(16)).unwrap();
        let (net, _) = parse_network(&text, &path()).unwrap();
        let Network::Triod(t) = net else { panic!("expected a triod") };
        assert!(crate::geometry::junction_residuals(&t).unwrap().angle_residual < 1e-6);
    }

    #[test]
    fn mismatched_junction_is_a_concurrency_error() {
        let mut f = steiner_file(16);
        f.curves[2][0][0] += 1e-3;
        let text = serde_json::to_string(&f).unwrap();
        match parse_network(&text, &path()) {
            Err(IoError::Validation { field, source: Error::Concurrency { .. }, .. }) => {
                assert_eq!(field, "curves[2][0]")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let mut f = steiner_file(8);
        f.cells = 4;
        for c in f.curves.iter_mut() {
            c.truncate(5);
        }
        let text = serde_json::to_string(&f).unwrap();
        assert!(matches!(
            parse_network(&text, &path()),
            Err(IoError::Validation { source: Error::GridTooCoarse { n_cells: 4, min: 8 }, .. })
        ));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse_network("{\"version\": 1,", &path()), Err(IoError::Parse { .. })));
        assert!(matches!(
            parse_network("{\"version\": 1, \"topology\": \"lens\"}", &path()),
            Err(IoError::Parse { .. })
        ));
    }

    #[test]
    fn bad_point_width_names_the_field() {
        let mut f = steiner_file(8);
        f.curves[1][3].push(0.0);
        let text = serde_json::to_string(&f).unwrap();
        match parse_network(&text, &path()) {
            Err(IoError::Validation { field, .. }) => assert_eq!(field, "curves[1][3]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_curve_round_trip() {
        let c = oracles::ShrinkingCircle::new(1.0, 16).unwrap().initial().unwrap();
        let text = serde_json::to_string(&NetworkFile::from_curve(&c)).unwrap();
        let (net, file) = parse_network(&text, &path()).unwrap();
        assert_eq!(file.topology, Topology::ClosedCurve);
        assert_eq!(net, Network::Curve(c));
    }

    proptest! {
        #[test]
        fn network_round_trip_is_exact(n in 8usize..40, a in -0.3f64..0.3, b in 1e-9f64..1.0) {
            let t = oracles::bumped_triod_with(n, |x| x + a * 0.5 * x * (1.0 - x)).unwrap();
            let t = t.map_points(|p| &p * b).unwrap();
            let text = serde_json::to_string(&NetworkFile::from_triod(&t)).unwrap();
            let (net, _) = parse_network(&text, &path()).unwrap();
            prop_assert_eq!(net, Network::Triod(t));
        }
    }
}
