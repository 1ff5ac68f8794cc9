//! Steady-state moments, stability and gain design for linear stochastic
//! systems whose controller updates arrive at renewal times.

pub mod config;
pub mod design;
pub mod error;
pub mod lift;
pub mod model;
pub mod moments;
pub mod numerics;
pub mod oracle;
pub mod renewal;
pub mod sim;

pub use error::{NcsError, Result};
pub use model::{scalar_model, two_state_model, NCSModel, Plant, ResetLaw};
pub use moments::{analyze, MomentReport, StabilityReport};
pub use numerics::{Matrix, QuadratureSpec, Vector};
pub use renewal::{Measure, RenewalDistribution};
