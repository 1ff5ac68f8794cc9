//! Stability and steady-state moments of the lifted systems.
//!
//! For a lift with flow `z' = ĉ + M z` and jump `z ↦ J z + R`, the
//! post-jump mean `z₊` is stationary when
//! `z₊ = J(⟨e^{MT}⟩ z₊ + ⟨φ(T)⟩) + R`, which has a unique solution iff
//! `ρ(J⟨e^{MT}⟩) < 1`. Averaging over the time since the last jump then
//! gives the steady moment `⟨e^{Mτ}⟩_p z₊ + ⟨φ(τ)⟩_p`.

use serde::{Deserialize, Serialize};

use crate::error::{NcsError, Result};
use crate::lift::{lift_first, lift_second, FirstMomentSystem, SecondMomentSystem};
use crate::model::NCSModel;
use crate::numerics::{self, augment, Matrix, QuadratureSpec, Vector};
use crate::renewal::{expect_matrix_exp, Measure, RenewalDistribution};

/// Spectral radii within this distance of one count as marginal.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub first_moment_stable: bool,
    pub first_spectral_radius: f64,
    pub second_moment_stable: bool,
    pub second_spectral_radius: f64,
    pub expectation_exists: bool,
    /// Some radius lies within the margin of one.
    pub marginal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub mean_x: Vector,
    pub mean_u: Vector,
    /// `⟨xxᵀ⟩`.
    pub second_raw: Matrix,
    pub covariance: Matrix,
    pub variance_channel: Matrix,
    pub variance_disturbance: Matrix,
    pub stability: StabilityReport,
}

/// Renewal averages of the augmented flow `[[M, ĉ], [0, 0]]`.
#[derive(Debug, Clone)]
pub(crate) struct Cycle {
    /// `⟨e^{MT}⟩` under the interval law.
    exp_interval: Matrix,
    /// `⟨φ(T)⟩`.
    phi_interval: Vector,
    /// `⟨e^{Mτ}⟩` under the timer law.
    exp_timer: Matrix,
    phi_timer: Vector,
}

impl Cycle {
    fn new(m: &Matrix, c: &Vector, d: &RenewalDistribution, spec: &QuadratureSpec) -> Result<Self> {
        let dim = m.nrows();
        let aug = augment(m, c);
        let split = |e: Matrix| {
            (
                e.view((0, 0), (dim, dim)).into_owned(),
                e.view((0, dim), (dim, 1)).column(0).into_owned(),
            )
        };
        let (exp_interval, phi_interval) =
            split(expect_matrix_exp(d, &aug, Measure::Interval, spec)?);
        let (exp_timer, phi_timer) = split(expect_matrix_exp(d, &aug, Measure::Timer, spec)?);
        Ok(Cycle {
            exp_interval,
            phi_interval,
            exp_timer,
            phi_timer,
        })
    }

    fn spectral_radius(&self, j: &Matrix) -> Result<f64> {
        numerics::spectral_radius(&(j * &self.exp_interval))
    }

    /// Steady moment vector for each jump offset in `offsets`.
    fn steady(&self, j: &Matrix, offsets: &[&Vector]) -> Result<Vec<Vector>> {
        let dim = j.nrows();
        let lhs = Matrix::identity(dim, dim) - j * &self.exp_interval;
        let lu = lhs.lu();
        let base = j * &self.phi_interval;
        offsets
            .iter()
            .map(|r| {
                let rhs = &base + *r;
                let z = lu
                    .solve(&rhs)
                    .ok_or_else(|| NcsError::Singular("I − J⟨e^{MT}⟩ is singular".into()))?;
                let out = &self.exp_timer * z + &self.phi_timer;
                if out.iter().all(|v| v.is_finite()) {
                    Ok(out)
                } else {
                    Err(NcsError::Singular(
                        "non-finite steady-state solution".into(),
                    ))
                }
            })
            .collect()
    }
}

fn verdict(radius: f64) -> (bool, bool) {
    let stable = radius < 1.0 - STABILITY_MARGIN;
    let marginal = (radius - 1.0).abs() <= STABILITY_MARGIN;
    (stable, marginal)
}

fn cycle_or_missing(
    m: &Matrix,
    c: &Vector,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<Option<Cycle>> {
    match Cycle::new(m, c, d, spec) {
        Ok(c) => Ok(Some(c)),
        Err(NcsError::Divergent { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn report_from(
    first: Option<(&Cycle, &Matrix)>,
    second: Option<(&Cycle, &Matrix)>,
) -> Result<StabilityReport> {
    let radius = |c: Option<(&Cycle, &Matrix)>| -> Result<f64> {
        match c {
            Some((cy, j)) => cy.spectral_radius(j),
            None => Ok(f64::INFINITY),
        }
    };
    let r1 = radius(first)?;
    let r2 = radius(second)?;
    let exists = first.is_some() && second.is_some();
    let (s1, m1) = verdict(r1);
    let (s2, m2) = verdict(r2);
    Ok(StabilityReport {
        first_moment_stable: first.is_some() && s1,
        first_spectral_radius: r1,
        second_moment_stable: exists && s2,
        second_spectral_radius: r2,
        expectation_exists: exists,
        marginal: m1 || m2,
    })
}

/// Spectral radii of `J_y⟨e^{A_y T}⟩` and `J_μ⟨e^{A_μ T}⟩`. A renewal
/// expectation that does not exist makes both verdicts unstable and the
/// corresponding radius infinite.
pub fn stability(
    sys1: &FirstMomentSystem,
    sys2: &SecondMomentSystem,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<StabilityReport> {
    let c1 = cycle_or_missing(&sys1.a_y, &sys1.a_hat_y, d, spec)?;
    let c2 = cycle_or_missing(&sys2.a_mu, &sys2.a_hat_mu, d, spec)?;
    report_from(
        c1.as_ref().map(|c| (c, &sys1.j_y)),
        c2.as_ref().map(|c| (c, &sys2.j_mu)),
    )
}

/// Fixed point of the first-moment cycle map and `ρ(J_y⟨e^{A_y T}⟩)`,
/// without refusing when the radius is ≥ 1.
pub(crate) fn mean_fixed_point(
    sys1: &FirstMomentSystem,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<(Vector, f64)> {
    let cycle = Cycle::new(&sys1.a_y, &sys1.a_hat_y, d, spec)?;
    let radius = cycle.spectral_radius(&sys1.j_y)?;
    let zero = Vector::zeros(sys1.dim());
    Ok((cycle.steady(&sys1.j_y, &[&zero])?.remove(0), radius))
}

/// Steady-state `⟨y⟩ = [⟨x⟩; ⟨u⟩]`.
pub fn steady_mean(
    sys1: &FirstMomentSystem,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<Vector> {
    let (mean, radius) = mean_fixed_point(sys1, d, spec)?;
    if !verdict(radius).0 {
        return Err(NcsError::Unstable {
            spectral_radius: radius,
            report: None,
        });
    }
    Ok(mean)
}

/// `ρ < 1 − margin`.
pub fn is_stable_radius(radius: f64) -> bool {
    verdict(radius).0
}

/// Steady-state `μ̄`.
pub fn steady_second(
    sys2: &SecondMomentSystem,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<Vector> {
    let cycle = Cycle::new(&sys2.a_mu, &sys2.a_hat_mu, d, spec)?;
    let radius = cycle.spectral_radius(&sys2.j_mu)?;
    if !verdict(radius).0 {
        return Err(NcsError::Unstable {
            spectral_radius: radius,
            report: None,
        });
    }
    Ok(cycle.steady(&sys2.j_mu, &[&sys2.r_mu])?.remove(0))
}

fn symmetrize(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}

/// Full moment report. Refuses with [`NcsError::Unstable`] (carrying the
/// stability report) unless the second moments are stable.
pub fn analyze(model: &NCSModel, spec: &QuadratureSpec) -> Result<MomentReport> {
    let sys1 = lift_first(model)?;
    let sys2 = lift_second(model)?;
    let d = &model.intervals;
    let c1 = cycle_or_missing(&sys1.a_y, &sys1.a_hat_y, d, spec)?;
    let c2 = cycle_or_missing(&sys2.a_mu, &sys2.a_hat_mu, d, spec)?;
    let stability = report_from(
        c1.as_ref().map(|c| (c, &sys1.j_y)),
        c2.as_ref().map(|c| (c, &sys2.j_mu)),
    )?;
    let Some(cycle) = c2.filter(|_| stability.second_moment_stable) else {
        return Err(NcsError::Unstable {
            spectral_radius: stability.second_spectral_radius,
            report: Some(Box::new(stability)),
        });
    };

    let zero = Vector::zeros(sys2.dim());
    let mut sols = cycle.steady(&sys2.j_mu, &[&sys2.r_mu, &zero])?;
    let quiet = sols.pop().unwrap();
    let full = sols.pop().unwrap();

    let (n, m) = (sys2.n, sys2.m);
    let lay = sys2.layout();
    let moments_of = |mu: &Vector| {
        let mean = mu.rows(lay.x, n).into_owned();
        let raw = Matrix::from_column_slice(n, n, mu.rows(lay.xx, n * n).as_slice());
        let cov = symmetrize(&raw - &mean * mean.transpose());
        (mean, symmetrize(raw), cov)
    };
    let (mean_x, second_raw, covariance) = moments_of(&full);
    let (_, _, variance_disturbance) = moments_of(&quiet);
    let variance_channel = &covariance - &variance_disturbance;

    Ok(MomentReport {
        mean_x,
        mean_u: full.rows(lay.u, m).into_owned(),
        second_raw,
        covariance,
        variance_channel,
        variance_disturbance,
        stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::scalar_model;
    use approx::assert_relative_eq;

    fn fig2(d: RenewalDistribution) -> NCSModel {
        scalar_model(1.0, -1.0, 0.5, 0.45, 0.5, 1.0, d).unwrap()
    }

    #[test]
    fn fig2_exponential() {
        let model = fig2(RenewalDistribution::exponential(1.0).unwrap());
        let r = analyze(&model, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(r.mean_x[0], 4.0 / 3.0, max_relative = 1e-9);
        assert_relative_eq!(
            r.stability.first_spectral_radius,
            0.625,
            max_relative = 1e-9
        );
        assert_relative_eq!(r.covariance[(0, 0)], 0.268148148148, max_relative = 1e-8);
        assert_relative_eq!(r.variance_disturbance[(0, 0)], 0.12, max_relative = 1e-8);
    }

    #[test]
    fn zero_sigma_no_channel_part() {
        let model = scalar_model(
            1.0,
            -1.0,
            0.5,
            0.45,
            0.5,
            0.0,
            RenewalDistribution::gamma(2.0, 0.5).unwrap(),
        )
        .unwrap();
        let r = analyze(&model, &QuadratureSpec::default()).unwrap();
        assert!(r.variance_channel[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn unstable_refused_with_report() {
        let model = scalar_model(
            1.0,
            1.0,
            0.1,
            0.1,
            -1.0,
            1.0,
            RenewalDistribution::deterministic(5.0).unwrap(),
        )
        .unwrap();
        match analyze(&model, &QuadratureSpec::default()) {
            Err(NcsError::Unstable {
                report: Some(r), ..
            }) => assert!(!r.second_moment_stable),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn divergent_expectation_reported_unstable() {
        let model = scalar_model(
            1.0,
            2.0,
            0.5,
            0.45,
            -0.5,
            1.0,
            RenewalDistribution::exponential(1.0).unwrap(),
        )
        .unwrap();
        let s = stability(
            &lift_first(&model).unwrap(),
            &lift_second(&model).unwrap(),
            &model.intervals,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(!s.expectation_exists);
        assert!(!s.first_moment_stable && !s.second_moment_stable);
    }
}
