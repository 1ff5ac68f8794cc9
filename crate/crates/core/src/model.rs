//! The networked control system: a linear SDE plant, a reset law applied
//! at transmission instants, and the renewal law of the transmission times.
//!
//! Between transmissions
//! `dx = (â + Ax + Bu)dt + (C + D x 𝟙ᵀ) dw` and `du = 0`;
//! at a transmission `u⁺ = K x⁻ + η` with `η ~ N(0, Σ)`.

use crate::error::{NcsError, Result};
use crate::numerics::{Matrix, Vector};
use crate::renewal::RenewalDistribution;

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub n: usize,
    pub m: usize,
    pub a_hat: Vector,
    pub a: Matrix,
    pub b: Matrix,
    /// Additive diffusion.
    pub c: Matrix,
    /// Multiplicative diffusion.
    pub d: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResetLaw {
    /// Gains, `m × n`.
    pub k: Matrix,
    /// Channel-noise covariance, `m × m`, diagonal.
    pub sigma: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NCSModel {
    pub plant: Plant,
    pub reset: ResetLaw,
    pub intervals: RenewalDistribution,
}

fn check_shape(out: &mut Vec<String>, name: &str, m: &Matrix, rows: usize, cols: usize) {
    if m.nrows() != rows || m.ncols() != cols {
        out.push(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        out.push(format!("{name} has non-finite entries"));
    }
}

impl Plant {
    /// Plant with no multiplicative noise.
    pub fn new(a_hat: Vector, a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        Self::with_multiplicative(a_hat, a, b, c, Matrix::zeros(n, n))
    }

    pub fn with_multiplicative(
        a_hat: Vector,
        a: Matrix,
        b: Matrix,
        c: Matrix,
        d: Matrix,
    ) -> Result<Self> {
        let plant = Plant {
            n: a.nrows(),
            m: b.ncols(),
            a_hat,
            a,
            b,
            c,
            d,
        };
        let v = plant.violations();
        if v.is_empty() {
            Ok(plant)
        } else {
            Err(NcsError::InvalidModel(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (n, m) = (self.n, self.m);
        if n == 0 {
            out.push("plant has no states".into());
        }
        if m == 0 {
            out.push("plant has no inputs".into());
        }
        if self.a_hat.len() != n {
            out.push(format!(
                "a_hat has length {}, expected {n}",
                self.a_hat.len()
            ));
        }
        if self.a_hat.iter().any(|v| !v.is_finite()) {
            out.push("a_hat has non-finite entries".into());
        }
        check_shape(&mut out, "A", &self.a, n, n);
        check_shape(&mut out, "B", &self.b, n, m);
        check_shape(&mut out, "C", &self.c, n, n);
        check_shape(&mut out, "D", &self.d, n, n);
        out
    }
}

impl ResetLaw {
    pub fn new(k: Matrix, sigma_diag: &[f64]) -> Self {
        ResetLaw {
            k,
            sigma: Matrix::from_diagonal(&Vector::from_column_slice(sigma_diag)),
        }
    }

    /// Diagonal of Σ.
    pub fn sigma_diag(&self) -> Vec<f64> {
        self.sigma.diagonal().iter().copied().collect()
    }

    fn violations(&self, n: usize, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        check_shape(&mut out, "K", &self.k, m, n);
        check_shape(&mut out, "Sigma", &self.sigma, m, m);
        if self.sigma.is_square() {
            let s = &self.sigma;
            let off = (0..s.nrows())
                .flat_map(|i| (0..s.ncols()).map(move |j| (i, j)))
                .any(|(i, j)| i != j && s[(i, j)] != 0.0);
            if off {
                out.push("Sigma not diagonal".into());
            }
            if s.diagonal().iter().any(|v| *v < 0.0) {
                out.push("Sigma has negative diagonal entries".into());
            }
        }
        out
    }
}

impl NCSModel {
    pub fn new(plant: Plant, reset: ResetLaw, intervals: RenewalDistribution) -> Result<Self> {
        let model = NCSModel {
            plant,
            reset,
            intervals,
        };
        model.ensure_valid()?;
        Ok(model)
    }

    /// Every violated invariant, as text. Empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.plant.violations();
        out.extend(self.reset.violations(self.plant.n, self.plant.m));
        if let Err(e) = self.intervals.validate() {
            out.push(format!("intervals: {e}"));
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(NcsError::InvalidModel(v))
        }
    }

    pub fn n(&self) -> usize {
        self.plant.n
    }

    pub fn m(&self) -> usize {
        self.plant.m
    }

    pub fn with_gain(&self, k: Matrix) -> Self {
        let mut out = self.clone();
        out.reset.k = k;
        out
    }

    pub fn with_intervals(&self, intervals: RenewalDistribution) -> Self {
        let mut out = self.clone();
        out.intervals = intervals;
        out
    }

    pub fn with_channel_noise(&self, sigma_diag: &[f64]) -> Self {
        let mut out = self.clone();
        out.reset.sigma = Matrix::from_diagonal(&Vector::from_column_slice(sigma_diag));
        out
    }

    /// `(â, a, b, c, k, σ)` of a one-state, one-input model.
    pub fn scalar_parts(&self) -> Option<[f64; 6]> {
        if self.n() != 1 || self.m() != 1 {
            return None;
        }
        let p = &self.plant;
        Some([
            p.a_hat[0],
            p.a[(0, 0)],
            p.b[(0, 0)],
            p.c[(0, 0)],
            self.reset.k[(0, 0)],
            self.reset.sigma[(0, 0)].sqrt(),
        ])
    }

    /// `(a1, a2, γ1, γ2, k1, k2, k3)` if the model has the two-species
    /// reactor structure.
    pub fn two_state_parts(&self) -> Option<[f64; 7]> {
        if self.n() != 2 || self.m() != 2 {
            return None;
        }
        let p = &self.plant;
        let k = &self.reset.k;
        Some([
            p.a_hat[0],
            p.a[(1, 0)],
            -p.a[(0, 0)],
            -p.a[(1, 1)],
            -k[(0, 0)],
            -k[(0, 1)],
            -k[(1, 1)],
        ])
    }
}

/// `dx = (â + a x + b u)dt + c dw`, `u⁺ = k x⁻ + η`, `η ~ N(0, σ²)`.
pub fn scalar_model(
    a_hat: f64,
    a: f64,
    b: f64,
    c: f64,
    k: f64,
    sigma: f64,
    intervals: RenewalDistribution,
) -> Result<NCSModel> {
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let plant = Plant::new(Vector::from_element(1, a_hat), one(a), one(b), one(c))?;
    NCSModel::new(plant, ResetLaw::new(one(k), &[sigma * sigma]), intervals)
}

/// Two-species reactor: species 1 produced at rate `a1` with Langevin noise
/// `√a1`, species 2 produced from species 1 at rate `a2·x1`, degradation
/// rates `γ1, γ2`, and gains `K = [[−k1, −k2], [0, −k3]]` acting through
/// `B = I`. No channel noise.
#[allow(clippy::too_many_arguments)]
pub fn two_state_model(
    a1: f64,
    a2: f64,
    gamma1: f64,
    gamma2: f64,
    k1: f64,
    k2: f64,
    k3: f64,
    intervals: RenewalDistribution,
) -> Result<NCSModel> {
    for (name, v) in [("a1", a1), ("gamma1", gamma1), ("gamma2", gamma2)] {
        if v < 0.0 {
            return Err(NcsError::Domain(format!("{name} must be ≥ 0, got {v}")));
        }
    }
    let plant = Plant::new(
        Vector::from_vec(vec![a1, 0.0]),
        Matrix::from_row_slice(2, 2, &[-gamma1, 0.0, a2, -gamma2]),
        Matrix::identity(2, 2),
        Matrix::from_row_slice(2, 2, &[a1.sqrt(), 0.0, 0.0, 0.0]),
    )?;
    let k = Matrix::from_row_slice(2, 2, &[-k1, -k2, 0.0, -k3]);
    NCSModel::new(plant, ResetLaw::new(k, &[0.0, 0.0]), intervals)
}
