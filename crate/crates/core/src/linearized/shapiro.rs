//! Numerical Lopatinskii–Shapiro check at the triple junction.
//!
//! For `Re λ > 0` the decaying solutions of `λρ - ρ_xx/|σⁱ_x(0)|² = 0` are
//! `ρⁱ(x) = c·exp(-μᵢ x)` with `μᵢ = |σⁱ_x(0)|·√λ`; concurrency forces a common
//! `c`. Substituting into the linearised angle condition leaves
//!
//! ```text
//! M(λ) c = Σᵢ μᵢ Pⁱ c / |σⁱ_x(0)| = 0,
//! ```
//!
//! so the condition holds iff `M(λ)` is nonsingular. At the fixed endpoints the
//! boundary operator is `ρⁱ(0) = 0`, the identity on `c`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FrozenCoefficients;
use crate::error::{Error, Result};

/// Smallest singular value accepted as nonsingular.
pub const SHAPIRO_THRESHOLD: f64 = 1e-8;

/// `λ ∈ {1, 2+i, 10, 0.5-0.5i}`.
pub fn default_lambda_samples() -> Vec<Complex64> {
    vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(2.0, 1.0),
        Complex64::new(10.0, 0.0),
        Complex64::new(0.5, -0.5),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroSample {
    pub lambda: Complex64,
    pub min_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapiroReport {
    pub samples: Vec<ShapiroSample>,
    /// Smallest singular value of the endpoint boundary operator (always 1).
    pub endpoint_min_singular_value: f64,
    pub threshold: f64,
}

impl ShapiroReport {
    pub fn passed(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.min_singular_value > self.threshold)
            && self.endpoint_min_singular_value > self.threshold
    }

    pub fn min_singular_value(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.min_singular_value)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The junction boundary matrix `M(λ)`.
pub fn junction_symbol(coeffs: &FrozenCoefficients, lambda: Complex64) -> Result<DMatrix<Complex64>> {
    if !(lambda.re > 0.0) {
        return Err(Error::InvalidLambda {
            re: lambda.re,
            im: lambda.im,
        });
    }
    let dim = coeffs.sigma().dim();
    let root = lambda.sqrt();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..3 {
        let s = coeffs.junction_speed(i);
        let mu = root * s;
        let p = coeffs.projection(i);
        for a in 0..dim {
            for b in 0..dim {
                m[(a, b)] += mu * p[[a, b]] / s;
            }
        }
    }
    Ok(m)
}

pub fn lopatinskii_shapiro_check(
    coeffs: &FrozenCoefficients,
    lambdas: &[Complex64],
) -> Result<ShapiroReport> {
    if lambdas.is_empty() {
        return Err(Error::Config("at least one λ sample is required".into()));
    }
    let mut samples = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let m = junction_symbol(coeffs, lambda)?;
        let sv = m.singular_values();
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        samples.push(ShapiroSample {
            lambda,
            min_singular_value: min,
        });
    }
    let endpoint = DMatrix::<f64>::identity(3 * coeffs.sigma().dim(), 3 * coeffs.sigma().dim())
        .singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(ShapiroReport {
        samples,
        endpoint_min_singular_value: endpoint,
        threshold: SHAPIRO_THRESHOLD,
    })
}
