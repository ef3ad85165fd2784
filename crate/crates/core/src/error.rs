use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: {n_cells} cells, at least {min} required")]
    GridTooCoarse { n_cells: usize, min: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("non-finite coordinate at node {node}")]
    NonFinite { node: usize },

    #[error("curve is not regular: |γ_x| = {speed:e} at node {node}")]
    Regularity { node: usize, speed: f64 },

    #[error("junction nodes do not coincide (max distance {distance:e})")]
    Concurrency { distance: f64 },

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("linear system is singular: pivot {pivot:e} in column {column}")]
    SingularSystem { column: usize, pivot: f64 },

    #[error("invalid λ = {re}{im:+}i: real part must be positive")]
    InvalidLambda { re: f64, im: f64 },

    #[error("fixed-point iteration diverged after {iterations} iterations (displacement {displacement:e})")]
    PicardDivergence { iterations: usize, displacement: f64 },

    #[error(
        "initial data not admissible: angle residual {angle_residual:e} (tolerance {tolerance:e}), \
         concurrency residual {concurrency_residual:e}"
    )]
    InadmissibleInitialData {
        angle_residual: f64,
        concurrency_residual: f64,
        tolerance: f64,
    },

    #[error("no Steiner junction: angle at endpoint {vertex} is {angle_deg:.4}°, must be below 120°")]
    InfeasibleSteiner { vertex: usize, angle_deg: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}
