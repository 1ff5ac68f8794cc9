//! Dense linear algebra and quadrature shared by the analytic modules.

mod expm;
mod quad;

pub use expm::{augment, matrix_exp, phi_flow};
pub use quad::{adaptive_integrate, integrate, Integral};

use nalgebra::linalg::Schur;
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{NcsError, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    /// Probability mass covered before the tail estimate takes over.
    pub truncation_quantile: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            relative_tolerance: 1e-10,
            absolute_tolerance: 1e-12,
            truncation_quantile: 1.0 - 1e-12,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0) || !(self.absolute_tolerance > 0.0) {
            return Err(NcsError::InvalidParameter(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if !(self.truncation_quantile > 0.0 && self.truncation_quantile < 1.0) {
            return Err(NcsError::InvalidParameter(format!(
                "truncation quantile {} outside (0, 1)",
                self.truncation_quantile
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(NcsError::InvalidParameter(
                "max_subdivisions must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(NcsError::Dimension(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NcsError::NonFinite("eigenvalue input".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    // Deflating at machine epsilon can stall on block-structured inputs
    // with repeated eigenvalues; a looser threshold still resolves them far
    // below the stability margin.
    for eps in [f64::EPSILON, 1e-14, 1e-12] {
        if let Some(schur) = Schur::try_new(m.clone(), eps, 10_000) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(NcsError::Singular(
        "Schur iteration did not converge".into(),
    ))
}

/// `max |λ_i(M)|`.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `max Re λ_i(M)`; governs the exponential growth rate of `e^{Mt}`.
pub fn spectral_abscissa(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalues sorted by decreasing modulus.
pub fn eigenvalues_by_modulus(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    let mut ev = eigenvalues(m)?;
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(ev)
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NcsError::NonFinite(what.to_string()))
    }
}
