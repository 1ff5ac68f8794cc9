use thiserror::Error;

use crate::moments::StabilityReport;

pub type Result<T, E = NcsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum NcsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    /// Adaptive quadrature gave up; carries the best estimate so far.
    #[error(
        "quadrature did not converge after {subdivisions} subdivisions (error estimate {error:e})"
    )]
    NonConvergence {
        estimate: Vec<f64>,
        error: f64,
        subdivisions: usize,
    },

    /// The renewal expectation of a matrix exponential does not exist.
    #[error("expectation diverges: spectral abscissa {abscissa} vs tail decay rate {decay_rate}")]
    Divergent { abscissa: f64, decay_rate: f64 },

    #[error("{0} has no density (point mass)")]
    UnsupportedDensity(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("moment dynamics unstable (spectral radius {spectral_radius})")]
    Unstable {
        spectral_radius: f64,
        report: Option<Box<StabilityReport>>,
    },

    #[error("ill-conditioned fixed-point system: {0}")]
    Singular(String),

    #[error("degenerate closed form: {0}")]
    Degenerate(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("simulation unstable: {divergent} of {total} trajectories diverged")]
    SimulationDiverged { divergent: usize, total: usize },
}
