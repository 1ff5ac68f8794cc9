//! Closed-form moments of the scalar loop and the two-species reactor,
//! used as independent checks on the general lifted pipeline.
//!
//! Scalar loop: `dx = (â + a x + b u)dt + c dw`, `u⁺ = k x⁻ + η`,
//! `⟨η²⟩ = σ²`. Formulas take the renewal law only through `⟨T⟩`,
//! `⟨e^{aT}⟩`, `⟨e^{2aT}⟩` (or `⟨T⟩`, `CV²`, `⟨T³⟩` when `a = 0`).
//!
//! The [`printed`] submodule keeps the published expressions verbatim so
//! they can be compared against the pipeline; the top-level functions are
//! the re-derived forms the pipeline agrees with.

use serde::{Deserialize, Serialize};

use crate::error::{NcsError, Result};
use crate::numerics::QuadratureSpec;
use crate::renewal::RenewalDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarParams {
    pub a_hat: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    pub sigma: f64,
}

impl ScalarParams {
    pub fn new(a_hat: f64, a: f64, b: f64, c: f64, k: f64, sigma: f64) -> Self {
        ScalarParams {
            a_hat,
            a,
            b,
            c,
            k,
            sigma,
        }
    }

    fn check(&self) -> Result<()> {
        let all = [self.a_hat, self.a, self.b, self.c, self.k, self.sigma];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(NcsError::NonFinite("scalar parameters".into()))
        }
    }
}

/// Split of the steady-state variance of `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceParts {
    pub total: f64,
    pub channel: f64,
    pub disturbance: f64,
}

impl VarianceParts {
    fn new(channel: f64, disturbance: f64) -> Self {
        VarianceParts {
            total: channel + disturbance,
            channel,
            disturbance,
        }
    }
}

/// `−â/(a + bk)`, for every interval law.
pub fn scalar_mean(p: &ScalarParams) -> Result<f64> {
    p.check()?;
    let g = p.a + p.b * p.k;
    if g == 0.0 {
        return Err(NcsError::Degenerate("a + bk = 0".into()));
    }
    Ok(-p.a_hat / g)
}

fn renewal_exps(
    p: &ScalarParams,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    match (d.mgf(p.a, spec), d.mgf(2.0 * p.a, spec)) {
        (Ok(e1), Ok(e2)) => Ok((e1, e2)),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

// Over one cycle x(T) = g(T)·x(0) + noise with g = ((a+bk)e^{aT} − bk)/a,
// so the eigenvalues are ⟨g⟩ and ⟨g²⟩.
fn eigs_from(p: &ScalarParams, e1: f64, e2: f64) -> (f64, f64) {
    let (a, b, k) = (p.a, p.b, p.k);
    let g = a + b * k;
    let l1 = (a * e1 + b * e1 * k - b * k) / a;
    let l2 = (e2 * g * g - 2.0 * b * k * e1 * g + b * b * k * k) / (a * a);
    (l1, l2)
}

/// The two non-zero eigenvalues of the scalar second-moment cycle map:
/// the first governs `⟨x⟩`, the second `⟨x²⟩`. Needs `a ≠ 0`.
pub fn scalar_eigs(
    p: &ScalarParams,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    p.check()?;
    if p.a == 0.0 {
        return Err(NcsError::Degenerate("a = 0; use scalar_a0_eig".into()));
    }
    let (e1, e2) = renewal_exps(p, d, spec)?;
    Ok(eigs_from(p, e1, e2))
}

fn refuse_unless_stable(eigs: &[f64]) -> Result<()> {
    let worst = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if worst < 1.0 {
        Ok(())
    } else {
        Err(NcsError::Unstable {
            spectral_radius: worst,
            report: None,
        })
    }
}

fn scalar_inputs(
    p: &ScalarParams,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    p.check()?;
    if p.a == 0.0 {
        return Err(NcsError::Degenerate("a = 0; use scalar_a0_variance".into()));
    }
    if p.a + p.b * p.k == 0.0 {
        return Err(NcsError::Degenerate("a + bk = 0".into()));
    }
    let (e1, e2) = renewal_exps(p, d, spec)?;
    let (l1, l2) = eigs_from(p, e1, e2);
    refuse_unless_stable(&[l1, l2])?;
    Ok((d.mean(), e1, e2))
}

/// Steady-state variance of `x` split into channel and disturbance parts.
pub fn scalar_variance(
    p: &ScalarParams,
    d: &RenewalDistribution,
    spec: &QuadratureSpec,
) -> Result<VarianceParts> {
    let (t, e1, e2) = scalar_inputs(p, d, spec)?;
    let (a, b, c, k) = (p.a, p.b, p.c, p.k);
    let s2 = p.sigma * p.sigma;
    let bk = b * k;
    let q = -2.0 * e1 * bk + e2 * a + e2 * bk - a + bk;
    let den = t * a * a * (a + bk) * q;

    let ch_num = -e1 * e2 * a - e1 * e2 * bk - 2.0 * e1 * t * a * bk
        + e1 * a
        + e1 * bk
        + e2 * t * a * a
        + 2.0 * e2 * t * a * bk
        + e2 * a
        + e2 * bk
        - t * a * a
        - a
        - bk;
    let channel = b * b * s2 * ch_num / den;

    let bk2 = bk * bk;
    let di_num =
        -e1 * e2 * a * bk - e1 * e2 * bk2 - 2.0 * e1 * t * a * a * bk - 2.0 * e1 * t * a * bk2
            + e1 * a * bk
            + e1 * bk2
            + e2 * t * a.powi(3)
            + 2.0 * e2 * t * a * a * bk
            + 2.0 * e2 * t * a * bk2
            + e2 * a * bk
            + e2 * bk2
            - t * a.powi(3)
            - a * bk
            - bk2;
    let disturbance = -c * c * di_num / (2.0 * den);

    Ok(VarianceParts::new(channel, disturbance))
}

/// `⟨T⟩`, `CV²`, `⟨T³⟩` of the interval law.
fn a0_inputs(d: &RenewalDistribution) -> (f64, f64, f64) {
    (d.mean(), d.cv2(), d.raw_moment(3))
}

/// Second-moment eigenvalue `b²k²⟨T⟩²CV² + (bk⟨T⟩ + 1)²` of the `a = 0`
/// loop. The first-moment eigenvalue is `1 + bk⟨T⟩`.
pub fn scalar_a0_eig(p: &ScalarParams, d: &RenewalDistribution) -> Result<f64> {
    p.check()?;
    let (t, cv2, _) = a0_inputs(d);
    let bkt = p.b * p.k * t;
    Ok(bkt * bkt * cv2 + (bkt + 1.0).powi(2))
}

fn a0_check(p: &ScalarParams, d: &RenewalDistribution) -> Result<()> {
    p.check()?;
    if p.a != 0.0 {
        return Err(NcsError::InvalidParameter(format!(
            "a = 0 required, got {}",
            p.a
        )));
    }
    if p.b * p.k == 0.0 {
        return Err(NcsError::Degenerate("bk = 0".into()));
    }
    let first = 1.0 + p.b * p.k * d.mean();
    refuse_unless_stable(&[first, scalar_a0_eig(p, d)?])
}

/// Variance split for `a = 0`; depends on the first three moments of `T`.
pub fn scalar_a0_variance(p: &ScalarParams, d: &RenewalDistribution) -> Result<VarianceParts> {
    a0_check(p, d)?;
    let (t, cv2, t3) = a0_inputs(d);
    let (b, c, k) = (p.b, p.c, p.k);
    let s2 = p.sigma * p.sigma;
    let g = t * b * cv2 * k + t * b * k + 2.0;
    let t_3 = t.powi(3);

    let ch_num = 3.0 * t_3 * b * cv2 * cv2 * k
        + 6.0 * t_3 * b * cv2 * k
        + 3.0 * t_3 * b * k
        + 3.0 * t * t * cv2
        + 3.0 * t * t
        - 2.0 * t3 * b * k;
    let channel = -b * s2 * ch_num / (3.0 * t * k * g);

    let b2k2 = b * b * k * k;
    let di_num = 3.0 * t_3 * b2k2 * cv2 * cv2 + 6.0 * t_3 * b2k2 * cv2 + 3.0 * t_3 * b2k2
        - 6.0 * t
        - 2.0 * t3 * b2k2;
    let disturbance = c * c * di_num / (6.0 * t * b * k * g);

    Ok(VarianceParts::new(channel, disturbance))
}

/// Simplified `a = 0` split for nearly regular log-normal intervals,
/// returned as `(channel, disturbance)`.
pub fn scalar_a0_lognormal_smallnoise(p: &ScalarParams, mean_t: f64, cv2: f64) -> (f64, f64) {
    let (b, c, k) = (p.b, p.c, p.k);
    let s2 = p.sigma * p.sigma;
    let t = mean_t;
    let channel = s2 * (-(b * cv2 * t) / (k * (b * k * t + 2.0)) - b * t / (2.0 * k));
    let disturbance = c * c * (cv2 * t / (b * k * t + 2.0) + (b * k * t - 2.0) / (4.0 * b * k));
    (channel, disturbance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateParams {
    pub a1: f64,
    pub a2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// Steady means `(⟨x₁⟩, ⟨x₂⟩)` of the two-species reactor.
pub fn two_state_means(p: &TwoStateParams) -> Result<(f64, f64)> {
    let g2 = p.gamma2 + p.k3;
    let den = p.a2 * p.k2 + p.gamma1 * g2 + p.gamma2 * p.k1 + p.k1 * p.k3;
    if den == 0.0 || g2 == 0.0 {
        return Err(NcsError::Degenerate(
            "two-state mean denominator vanishes".into(),
        ));
    }
    let x1 = p.a1 * g2 / den;
    Ok((x1, p.a2 / g2 * x1))
}

/// Published expressions, transcribed as printed.
pub mod printed {
    use super::*;

    /// Non-zero eigenvalues of the scalar cycle map.
    pub fn scalar_eigs(
        p: &ScalarParams,
        d: &RenewalDistribution,
        spec: &QuadratureSpec,
    ) -> Result<(f64, f64)> {
        p.check()?;
        if p.a == 0.0 {
            return Err(NcsError::Degenerate("a = 0".into()));
        }
        let (e1, e2) = renewal_exps(p, d, spec)?;
        let (a, b, k) = (p.a, p.b, p.k);
        let l1 = (a * e1 + b * e1 * k - b * k) / a;
        let l2 =
            (a * e2 * (a + b * k).powi(2) + b * k * (b * k - 2.0 * a * e1 * (a + b * k))) / (a * a);
        Ok((l1, l2))
    }

    /// Scalar variance split, `a ≠ 0`. The disturbance denominator's
    /// parentheses are closed to match the channel term.
    pub fn scalar_variance(
        p: &ScalarParams,
        d: &RenewalDistribution,
        spec: &QuadratureSpec,
    ) -> Result<VarianceParts> {
        let (t, e1, e2) = scalar_inputs(p, d, spec)?;
        let (a, b, c, k) = (p.a, p.b, p.c, p.k);
        let s2 = p.sigma * p.sigma;
        let den = a.powi(3) * t * t * (a + b * k) * (a * (e1 + 1.0) + b * (e1 - 1.0) * k);
        let channel = s2
            * b
            * b
            * (a * t - e1 + 1.0)
            * (a * a * (e1 + 1.0) * t + 2.0 * b * k * (e1 * (a * t - 1.0) + 1.0))
            / den;
        let disturbance = c
            * c
            * (-a.powi(4) * (e1 + 1.0) * t * t
                + a * a * b * k * t * (-2.0 * a * e1 * t + e2 - 1.0)
                + 2.0 * b * b * k * k * (-a * t + e1 - 1.0) * (e1 * (a * t - 1.0) + 1.0))
            / (2.0 * den);
        Ok(VarianceParts::new(channel, disturbance))
    }

    /// Scalar variance split, `a = 0`.
    pub fn scalar_a0_variance(p: &ScalarParams, d: &RenewalDistribution) -> Result<VarianceParts> {
        a0_check(p, d)?;
        let (t, cv2, t3) = a0_inputs(d);
        let (b, c, k) = (p.b, p.c, p.k);
        let s2 = p.sigma * p.sigma;
        let channel = s2 * (-b * (cv2 + 1.0) * t * (3.0 * b * k * t + 4.0) + b * b * t3 / t)
            / (4.0 * k * (b * k * t + 2.0));
        let disturbance = c
            * c
            * ((b * k * t * (3.0 * b * (cv2 + 1.0) * k * t + 8.0 * cv2) - 8.0)
                - b * k * t3 / (t * t))
            / (8.0 * b * k * (b * k * t + 2.0));
        Ok(VarianceParts::new(channel, disturbance))
    }

    /// Two-species means; the second relation as printed is
    /// `⟨x₂⟩ = (γ₂ + k₃)/a₂ · ⟨x₁⟩`.
    pub fn two_state_means(p: &TwoStateParams) -> Result<(f64, f64)> {
        let (x1, _) = super::two_state_means(p)?;
        if p.a2 == 0.0 {
            return Err(NcsError::Degenerate("a2 = 0".into()));
        }
        Ok((x1, (p.gamma2 + p.k3) / p.a2 * x1))
    }
}
