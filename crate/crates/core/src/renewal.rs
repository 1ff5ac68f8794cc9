//! Inter-transmission interval laws and the renewal expectations built on
//! them.
//!
//! Two measures appear in the moment formulas: the interval density `f(τ)`
//! of a full inter-transmission gap, and the stationary density
//! `p(τ) = S(τ)/⟨T⟩` of the time elapsed since the last transmission.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma as GammaSampler, LogNormal as LogNormalSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, LogNormal};

use crate::error::{NcsError, Result};
use crate::numerics::{self, integrate, matrix_exp, Integral, Matrix, QuadratureSpec, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RenewalDistribution {
    Exponential {
        rate: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    #[serde(rename = "lognormal")]
    LogNormal {
        location: f64,
        scale: f64,
    },
    Deterministic {
        period: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

/// Which density an expectation is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Full inter-transmission interval, density `f`.
    Interval,
    /// Stationary time since the last transmission, density `S/⟨T⟩`.
    Timer,
}

/// How fast the interval density decays, used to decide whether
/// `⟨e^{MT}⟩` exists before integrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailDecay {
    /// Density tail is `O(τ^k e^{-rate·τ})`.
    Exponential(f64),
    /// Slower than any exponential.
    SubExponential,
    /// Support ends at the given point.
    Bounded(f64),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(NcsError::InvalidParameter(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl RenewalDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        let d = RenewalDistribution::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        let d = RenewalDistribution::Gamma { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn lognormal(location: f64, scale: f64) -> Result<Self> {
        let d = RenewalDistribution::LogNormal { location, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn deterministic(period: f64) -> Result<Self> {
        let d = RenewalDistribution::Deterministic { period };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = RenewalDistribution::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    /// Gamma law with the given mean and squared coefficient of variation
    /// (`shape = 1/cv2`, `scale = mean·cv2`). `cv2 = 0` is the deterministic
    /// limit.
    pub fn gamma_from_mean_cv2(mean: f64, cv2: f64) -> Result<Self> {
        positive("mean", mean)?;
        if cv2 == 0.0 {
            return Self::deterministic(mean);
        }
        positive("cv2", cv2)?;
        Self::gamma(1.0 / cv2, mean * cv2)
    }

    /// Log-normal law with the given mean and squared coefficient of
    /// variation.
    pub fn lognormal_from_mean_cv2(mean: f64, cv2: f64) -> Result<Self> {
        positive("mean", mean)?;
        positive("cv2", cv2)?;
        let s2 = (1.0 + cv2).ln();
        Self::lognormal(mean.ln() - 0.5 * s2, s2.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RenewalDistribution::Exponential { rate } => positive("rate", rate),
            RenewalDistribution::Gamma { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
            RenewalDistribution::LogNormal { location, scale } => {
                if !location.is_finite() {
                    return Err(NcsError::InvalidParameter(format!(
                        "location must be finite, got {location}"
                    )));
                }
                positive("scale", scale)
            }
            RenewalDistribution::Deterministic { period } => positive("period", period),
            RenewalDistribution::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi {
                    Ok(())
                } else {
                    Err(NcsError::InvalidParameter(format!(
                        "uniform needs 0 ≤ lo < hi, got [{lo}, {hi}]"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RenewalDistribution::Exponential { .. } => "exponential",
            RenewalDistribution::Gamma { .. } => "gamma",
            RenewalDistribution::LogNormal { .. } => "lognormal",
            RenewalDistribution::Deterministic { .. } => "deterministic",
            RenewalDistribution::Uniform { .. } => "uniform",
        }
    }

    /// `⟨T^k⟩`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        let kf = k as f64;
        match *self {
            RenewalDistribution::Exponential { rate } => {
                (1..=k).map(|i| i as f64).product::<f64>() / rate.powi(k as i32)
            }
            RenewalDistribution::Gamma { shape, scale } => {
                (0..k).map(|i| shape + i as f64).product::<f64>() * scale.powi(k as i32)
            }
            RenewalDistribution::LogNormal { location, scale } => {
                (kf * location + 0.5 * kf * kf * scale * scale).exp()
            }
            RenewalDistribution::Deterministic { period } => period.powi(k as i32),
            RenewalDistribution::Uniform { lo, hi } => {
                (hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1)) / ((kf + 1.0) * (hi - lo))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    /// Squared coefficient of variation `(⟨T²⟩ − ⟨T⟩²)/⟨T⟩²`.
    pub fn cv2(&self) -> f64 {
        match *self {
            RenewalDistribution::Exponential { .. } => 1.0,
            RenewalDistribution::Gamma { shape, .. } => 1.0 / shape,
            RenewalDistribution::LogNormal { scale, .. } => (scale * scale).exp_m1(),
            RenewalDistribution::Deterministic { .. } => 0.0,
            RenewalDistribution::Uniform { lo, hi } => {
                let m = 0.5 * (lo + hi);
                (hi - lo).powi(2) / 12.0 / (m * m)
            }
        }
    }

    /// Same family, rescaled to the requested mean with the shape (and
    /// hence `cv2`) preserved.
    pub fn with_mean(&self, mean: f64) -> Result<Self> {
        positive("mean", mean)?;
        let factor = mean / self.mean();
        match *self {
            RenewalDistribution::Exponential { .. } => Self::exponential(1.0 / mean),
            RenewalDistribution::Gamma { shape, scale } => Self::gamma(shape, scale * factor),
            RenewalDistribution::LogNormal { location, scale } => {
                Self::lognormal(location + factor.ln(), scale)
            }
            RenewalDistribution::Deterministic { .. } => Self::deterministic(mean),
            RenewalDistribution::Uniform { lo, hi } => Self::uniform(lo * factor, hi * factor),
        }
    }

    fn check_tau(tau: f64) -> Result<()> {
        if tau.is_nan() || tau < 0.0 {
            Err(NcsError::Domain(format!("τ must be ≥ 0, got {tau}")))
        } else {
            Ok(())
        }
    }

    fn statrs_gamma(shape: f64, scale: f64) -> Gamma {
        Gamma::new(shape, 1.0 / scale).expect("validated gamma parameters")
    }

    fn statrs_lognormal(location: f64, scale: f64) -> LogNormal {
        LogNormal::new(location, scale).expect("validated lognormal parameters")
    }

    /// Interval density `f(τ)`.
    pub fn pdf(&self, tau: f64) -> Result<f64> {
        Self::check_tau(tau)?;
        Ok(match *self {
            RenewalDistribution::Exponential { rate } => rate * (-rate * tau).exp(),
            RenewalDistribution::Gamma { shape, scale } => {
                if tau == 0.0 {
                    match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 1.0 / scale,
                        _ => 0.0,
                    }
                } else {
                    Self::statrs_gamma(shape, scale).pdf(tau)
                }
            }
            RenewalDistribution::LogNormal { location, scale } => {
                if tau == 0.0 {
                    0.0
                } else {
                    Self::statrs_lognormal(location, scale).pdf(tau)
                }
            }
            RenewalDistribution::Deterministic { .. } => {
                return Err(NcsError::UnsupportedDensity("deterministic interval"))
            }
            RenewalDistribution::Uniform { lo, hi } => {
                if tau >= lo && tau <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
        })
    }

    pub fn cdf(&self, tau: f64) -> f64 {
        1.0 - self.survival(tau)
    }

    /// `S(τ) = P(T > τ)`.
    pub fn survival(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 1.0;
        }
        match *self {
            RenewalDistribution::Exponential { rate } => (-rate * tau).exp(),
            RenewalDistribution::Gamma { shape, scale } => Self::statrs_gamma(shape, scale).sf(tau),
            RenewalDistribution::LogNormal { location, scale } => {
                Self::statrs_lognormal(location, scale).sf(tau)
            }
            RenewalDistribution::Deterministic { period } => {
                if tau < period {
                    1.0
                } else {
                    0.0
                }
            }
            RenewalDistribution::Uniform { lo, hi } => {
                if tau <= lo {
                    1.0
                } else if tau >= hi {
                    0.0
                } else {
                    (hi - tau) / (hi - lo)
                }
            }
        }
    }

    /// `h(τ) = f(τ)/S(τ)`.
    pub fn hazard(&self, tau: f64) -> Result<f64> {
        if let RenewalDistribution::Exponential { rate } = *self {
            Self::check_tau(tau)?;
            return Ok(rate);
        }
        let f = self.pdf(tau)?;
        let s = self.survival(tau);
        if s <= 0.0 {
            return Err(NcsError::Domain(format!(
                "hazard undefined at τ = {tau}: survival is zero"
            )));
        }
        Ok(f / s)
    }

    /// Stationary density of the time since the last transmission,
    /// `S(τ)/⟨T⟩`.
    pub fn timer_density(&self, tau: f64) -> Result<f64> {
        Self::check_tau(tau)?;
        Ok(self.survival(tau) / self.mean())
    }

    /// Smallest τ with `P(T ≤ τ) ≥ p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(NcsError::Domain(format!(
                "quantile level {p} outside (0, 1)"
            )));
        }
        Ok(match *self {
            RenewalDistribution::Exponential { rate } => -(-p).ln_1p() / rate,
            RenewalDistribution::Gamma { shape, scale } => {
                Self::statrs_gamma(shape, scale).inverse_cdf(p)
            }
            RenewalDistribution::LogNormal { location, scale } => {
                Self::statrs_lognormal(location, scale).inverse_cdf(p)
            }
            RenewalDistribution::Deterministic { period } => period,
            RenewalDistribution::Uniform { lo, hi } => lo + p * (hi - lo),
        })
    }

    pub fn tail_decay(&self) -> TailDecay {
        match *self {
            RenewalDistribution::Exponential { rate } => TailDecay::Exponential(rate),
            RenewalDistribution::Gamma { scale, .. } => TailDecay::Exponential(1.0 / scale),
            RenewalDistribution::LogNormal { .. } => TailDecay::SubExponential,
            RenewalDistribution::Deterministic { period } => TailDecay::Bounded(period),
            RenewalDistribution::Uniform { hi, .. } => TailDecay::Bounded(hi),
        }
    }

    /// One draw of the interval length.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RenewalDistribution::Exponential { rate } => {
                Exp::new(rate).expect("validated rate").sample(rng)
            }
            RenewalDistribution::Gamma { shape, scale } => GammaSampler::new(shape, scale)
                .expect("validated gamma parameters")
                .sample(rng),
            RenewalDistribution::LogNormal { location, scale } => {
                LogNormalSampler::new(location, scale)
                    .expect("validated lognormal parameters")
                    .sample(rng)
            }
            RenewalDistribution::Deterministic { period } => period,
            RenewalDistribution::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }

    /// Moment generating function `⟨e^{sT}⟩`, in closed form where one
    /// exists.
    pub fn mgf(&self, s: f64, spec: &QuadratureSpec) -> Result<f64> {
        if s == 0.0 {
            return Ok(1.0);
        }
        match *self {
            RenewalDistribution::Exponential { rate } => {
                if s >= rate {
                    Err(NcsError::Divergent {
                        abscissa: s,
                        decay_rate: rate,
                    })
                } else {
                    Ok(rate / (rate - s))
                }
            }
            RenewalDistribution::Gamma { shape, scale } => {
                if s * scale >= 1.0 {
                    Err(NcsError::Divergent {
                        abscissa: s,
                        decay_rate: 1.0 / scale,
                    })
                } else {
                    Ok((1.0 - s * scale).powf(-shape))
                }
            }
            RenewalDistribution::Deterministic { period } => Ok((s * period).exp()),
            RenewalDistribution::Uniform { lo, hi } => {
                let w = hi - lo;
                Ok((s * lo).exp() * (s * w).exp_m1() / (s * w))
            }
            RenewalDistribution::LogNormal { .. } => {
                let m = Matrix::from_element(1, 1, s);
                Ok(expect_matrix_exp(self, &m, Measure::Interval, spec)?[(0, 0)])
            }
        }
    }

    /// Partition of the integration range used to seed adaptive
    /// quadrature: support ends plus interior quantiles, ending at the
    /// truncation quantile for unbounded laws.
    fn breakpoints(&self, measure: Measure, spec: &QuadratureSpec) -> Result<Vec<f64>> {
        let mut pts = vec![0.0];
        match *self {
            RenewalDistribution::Deterministic { period } => pts.push(period),
            RenewalDistribution::Uniform { lo, hi } => {
                if lo > 0.0 && measure == Measure::Timer {
                    pts.push(lo);
                } else if lo > 0.0 {
                    pts[0] = lo;
                }
                pts.push(hi);
            }
            _ => {
                for p in [1e-3, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999, 0.99999] {
                    if p < spec.truncation_quantile {
                        pts.push(self.quantile(p)?);
                    }
                }
                pts.push(self.quantile(spec.truncation_quantile)?);
            }
        }
        pts.dedup_by(|a, b| !(*a > *b * (1.0 + 1e-12)));
        Ok(pts)
    }

    fn weight(&self, measure: Measure, tau: f64) -> Result<f64> {
        match measure {
            Measure::Interval => self.pdf(tau),
            Measure::Timer => self.timer_density(tau),
        }
    }
}

fn divergence_check(d: &RenewalDistribution, m: &Matrix) -> Result<()> {
    let abscissa = numerics::spectral_abscissa(m)?;
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    match d.tail_decay() {
        TailDecay::Exponential(rate) if abscissa >= rate => Err(NcsError::Divergent {
            abscissa,
            decay_rate: rate,
        }),
        TailDecay::SubExponential if abscissa > 1e-9 * scale => Err(NcsError::Divergent {
            abscissa,
            decay_rate: 0.0,
        }),
        _ => Ok(()),
    }
}

/// `∫₀^T e^{Mτ} dτ`, from the top-right block of `exp([[M, I], [0, 0]] T)`.
fn integral_of_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    let n = m.nrows();
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(m);
    big.view_mut((0, n), (n, n)).fill_with_identity();
    let e = matrix_exp(&big, t)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// Renewal expectation of `e^{Mτ}` together with its quadrature record.
#[derive(Debug, Clone)]
pub struct MatrixExpectation {
    pub value: Matrix,
    /// Bound on the absolute error of any entry (quadrature plus tail).
    pub error: f64,
    pub evaluations: usize,
}

/// `⟨e^{MT}⟩` under `f` (Interval) or `⟨e^{Mτ}⟩` under `S/⟨T⟩` (Timer).
pub fn expect_matrix_exp(
    d: &RenewalDistribution,
    m: &Matrix,
    measure: Measure,
    spec: &QuadratureSpec,
) -> Result<Matrix> {
    Ok(expect_matrix_exp_detailed(d, m, measure, spec)?.value)
}

pub fn expect_matrix_exp_detailed(
    d: &RenewalDistribution,
    m: &Matrix,
    measure: Measure,
    spec: &QuadratureSpec,
) -> Result<MatrixExpectation> {
    if !m.is_square() {
        return Err(NcsError::Dimension(format!(
            "expectation of exp of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    numerics::ensure_finite(m, "expectation argument")?;
    d.validate()?;
    spec.validate()?;
    let n = m.nrows();

    if let RenewalDistribution::Deterministic { period } = *d {
        let value = match measure {
            Measure::Interval => matrix_exp(m, period)?,
            Measure::Timer => integral_of_exp(m, period)? / period,
        };
        return Ok(MatrixExpectation {
            value,
            error: 0.0,
            evaluations: 1,
        });
    }

    divergence_check(d, m)?;

    let integrand = |tau: f64| -> Result<Vec<f64>> {
        let w = d.weight(measure, tau)?;
        if w == 0.0 {
            return Ok(vec![0.0; n * n]);
        }
        let e = matrix_exp(m, tau)?;
        Ok(e.iter().map(|v| v * w).collect())
    };

    let pts = d.breakpoints(measure, spec)?;
    let mut total = integrate(&integrand, &pts, spec)?;

    if !matches!(d.tail_decay(), TailDecay::Bounded(_)) {
        let tail = extend_tail(&integrand, *pts.last().unwrap(), &mut total, spec)?;
        for e in total.error.iter_mut() {
            *e += tail;
        }
    }

    Ok(MatrixExpectation {
        value: Matrix::from_column_slice(n, n, &total.value),
        error: total.max_error(),
        evaluations: total.evaluations,
    })
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Integrates past the truncation point until the exponential-envelope
/// estimate of what remains drops below tolerance; returns that estimate.
fn extend_tail<F>(
    integrand: &F,
    mut upper: f64,
    total: &mut Integral,
    spec: &QuadratureSpec,
) -> Result<f64>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let envelope = |x: f64| -> Result<f64> {
        let mut g = 0.0f64;
        for f in [0.96, 0.98, 1.0] {
            g = g.max(sup_norm(&integrand(f * x)?));
        }
        Ok(g)
    };
    for _ in 0..40 {
        let tol = spec
            .absolute_tolerance
            .max(spec.relative_tolerance * sup_norm(&total.value));
        let g_hi = envelope(upper)?;
        let g_lo = envelope(0.8 * upper)?;
        let decay = if g_hi > 0.0 && g_lo > 0.0 {
            (g_lo.ln() - g_hi.ln()) / (0.2 * upper)
        } else {
            f64::INFINITY
        };
        if g_hi == 0.0 {
            return Ok(0.0);
        }
        if decay > 0.0 {
            let tail = g_hi / decay;
            if tail <= tol {
                return Ok(tail);
            }
        }
        let piece = integrate(integrand, &[upper, 2.0 * upper], spec)?;
        total.accumulate(&piece);
        upper *= 2.0;
    }
    Err(NcsError::NonConvergence {
        estimate: total.value.clone(),
        error: f64::INFINITY,
        subdivisions: total.subdivisions,
    })
}

/// `⟨e^{AT}∫₀^T e^{−Ar} â dr⟩` under the chosen measure.
pub fn expect_phi(
    d: &RenewalDistribution,
    a: &Matrix,
    a_hat: &Vector,
    measure: Measure,
    spec: &QuadratureSpec,
) -> Result<Vector> {
    let n = a.nrows();
    if !a.is_square() || a_hat.len() != n {
        return Err(NcsError::Dimension(format!(
            "expect_phi: A is {}x{}, â has length {}",
            a.nrows(),
            a.ncols(),
            a_hat.len()
        )));
    }
    let aug = numerics::augment(a, a_hat);
    let e = expect_matrix_exp(d, &aug, measure, spec)?;
    Ok(e.view((0, n), (n, 1)).column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn exponential_pdf_at_zero() {
        let d = RenewalDistribution::exponential(1.0).unwrap();
        assert_eq!(d.pdf(0.0).unwrap(), 1.0);
    }

    #[test]
    fn gamma_shape_one_is_exponential() {
        let g = RenewalDistribution::gamma(1.0, 1.0).unwrap();
        for tau in [0.0, 0.3, 1.0, 4.5] {
            assert_relative_eq!(g.pdf(tau).unwrap(), (-tau).exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn lognormal_pdf_at_one() {
        let d = RenewalDistribution::lognormal(0.0, 1.0).unwrap();
        assert_relative_eq!(
            d.pdf(1.0).unwrap(),
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn deterministic_has_no_density() {
        let d = RenewalDistribution::deterministic(1.0).unwrap();
        assert!(matches!(d.pdf(0.5), Err(NcsError::UnsupportedDensity(_))));
        assert!(d.hazard(0.5).is_err());
    }

    #[test]
    fn negative_tau_rejected() {
        let d = RenewalDistribution::exponential(1.0).unwrap();
        assert!(matches!(d.pdf(-1.0), Err(NcsError::Domain(_))));
    }

    #[test]
    fn exponential_hazard_constant() {
        let d = RenewalDistribution::exponential(2.5).unwrap();
        for tau in [0.0, 0.1, 3.0, 50.0, 500.0] {
            assert_eq!(d.hazard(tau).unwrap(), 2.5);
        }
    }

    #[test]
    fn uniform_survival_hazard() {
        let d = RenewalDistribution::uniform(0.0, 1.0).unwrap();
        assert_relative_eq!(d.survival(0.5), 0.5);
        assert_relative_eq!(d.hazard(0.5).unwrap(), 2.0);
        assert!(matches!(d.hazard(1.0), Err(NcsError::Domain(_))));
    }

    #[test]
    fn gamma_two_survival() {
        // Γ(2,1): S(τ) = (1+τ)e^{-τ}
        let d = RenewalDistribution::gamma(2.0, 1.0).unwrap();
        assert_relative_eq!(d.survival(1.0), 2.0 * (-1f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn timer_density_examples() {
        let e = RenewalDistribution::exponential(1.5).unwrap();
        for tau in [0.0, 0.4, 2.0] {
            assert_relative_eq!(
                e.timer_density(tau).unwrap(),
                e.pdf(tau).unwrap(),
                max_relative = 1e-14
            );
        }
        let det = RenewalDistribution::deterministic(2.0).unwrap();
        assert_eq!(det.timer_density(1.0).unwrap(), 0.5);
        assert_eq!(det.timer_density(2.5).unwrap(), 0.0);
        let g = RenewalDistribution::gamma(2.0, 1.0).unwrap();
        assert_relative_eq!(g.timer_density(0.0).unwrap(), 0.5);
    }

    #[test]
    fn raw_moments() {
        let e = RenewalDistribution::exponential(1.0).unwrap();
        assert_eq!(
            [e.raw_moment(1), e.raw_moment(2), e.raw_moment(3)],
            [1.0, 2.0, 6.0]
        );
        let d = RenewalDistribution::deterministic(2.0).unwrap();
        assert_eq!(
            [d.raw_moment(1), d.raw_moment(2), d.raw_moment(3)],
            [2.0, 4.0, 8.0]
        );
    }

    #[test]
    fn lognormal_third_moment_exact() {
        let d = RenewalDistribution::lognormal_from_mean_cv2(1.7, 0.4).unwrap();
        let m = d.mean();
        assert_relative_eq!(m, 1.7, max_relative = 1e-13);
        assert_relative_eq!(d.cv2(), 0.4, max_relative = 1e-12);
        assert_relative_eq!(
            d.raw_moment(3),
            m.powi(3) * 1.4f64.powi(3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gamma_from_mean_cv2() {
        let d = RenewalDistribution::gamma_from_mean_cv2(2.0, 0.5).unwrap();
        assert_relative_eq!(d.mean(), 2.0);
        assert_relative_eq!(d.cv2(), 0.5);
        assert_eq!(
            RenewalDistribution::gamma_from_mean_cv2(2.0, 0.0).unwrap(),
            RenewalDistribution::Deterministic { period: 2.0 }
        );
    }

    #[test]
    fn with_mean_preserves_cv2() {
        for d in [
            RenewalDistribution::exponential(3.0).unwrap(),
            RenewalDistribution::gamma(2.5, 0.3).unwrap(),
            RenewalDistribution::lognormal(0.2, 0.7).unwrap(),
            RenewalDistribution::deterministic(0.4).unwrap(),
            RenewalDistribution::uniform(0.5, 1.5).unwrap(),
        ] {
            let r = d.with_mean(2.2).unwrap();
            assert_relative_eq!(r.mean(), 2.2, max_relative = 1e-12);
            assert_relative_eq!(r.cv2(), d.cv2(), max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(RenewalDistribution::exponential(0.0).is_err());
        assert!(RenewalDistribution::gamma(-1.0, 1.0).is_err());
        assert!(RenewalDistribution::uniform(1.0, 1.0).is_err());
        assert!(RenewalDistribution::uniform(-0.5, 1.0).is_err());
        assert!(RenewalDistribution::deterministic(f64::NAN).is_err());
    }

    #[test]
    fn expectation_of_zero_matrix_is_identity() {
        for d in [
            RenewalDistribution::exponential(1.0).unwrap(),
            RenewalDistribution::gamma(0.5, 2.0).unwrap(),
            RenewalDistribution::lognormal(0.0, 0.5).unwrap(),
            RenewalDistribution::deterministic(1.3).unwrap(),
            RenewalDistribution::uniform(0.2, 1.0).unwrap(),
        ] {
            for measure in [Measure::Interval, Measure::Timer] {
                let e = expect_matrix_exp(&d, &Matrix::zeros(2, 2), measure, &spec()).unwrap();
                assert_relative_eq!(e, Matrix::identity(2, 2), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn exponential_resolvent() {
        let lambda = 1.3;
        let d = RenewalDistribution::exponential(lambda).unwrap();
        let m = Matrix::from_row_slice(2, 2, &[-0.7, 0.4, 0.2, -1.1]);
        let e = expect_matrix_exp(&d, &m, Measure::Interval, &spec()).unwrap();
        let closed = (Matrix::identity(2, 2) * lambda - &m)
            .try_inverse()
            .unwrap()
            * lambda;
        assert_relative_eq!(e, closed, max_relative = 1e-9);
    }

    #[test]
    fn lognormal_positive_abscissa_diverges() {
        let d = RenewalDistribution::lognormal(0.0, 0.5).unwrap();
        let m = Matrix::from_element(1, 1, 0.1);
        assert!(matches!(
            expect_matrix_exp(&d, &m, Measure::Interval, &spec()),
            Err(NcsError::Divergent { .. })
        ));
    }

    #[test]
    fn exponential_rate_exceeded_diverges() {
        let d = RenewalDistribution::exponential(1.0).unwrap();
        let m = Matrix::from_element(1, 1, 1.0);
        assert!(matches!(
            expect_matrix_exp(&d, &m, Measure::Timer, &spec()),
            Err(NcsError::Divergent { .. })
        ));
    }

    #[test]
    fn deterministic_timer_block() {
        let d = RenewalDistribution::deterministic(2.0).unwrap();
        let m = Matrix::from_element(1, 1, -1.0);
        let e = expect_matrix_exp(&d, &m, Measure::Timer, &spec()).unwrap();
        assert_relative_eq!(e[(0, 0)], (1.0 - (-2f64).exp()) / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn expect_phi_examples() {
        let d = RenewalDistribution::exponential(1.0).unwrap();
        let a = Matrix::from_element(1, 1, -1.0);
        let zero = expect_phi(&d, &a, &Vector::zeros(1), Measure::Interval, &spec()).unwrap();
        assert_eq!(zero[0], 0.0);
        let v = expect_phi(
            &d,
            &a,
            &Vector::from_element(1, 1.0),
            Measure::Interval,
            &spec(),
        )
        .unwrap();
        assert_relative_eq!(v[0], 0.5, max_relative = 1e-10);
        let g = RenewalDistribution::gamma(3.0, 0.4).unwrap();
        let a0 = Matrix::zeros(2, 2);
        let a_hat = Vector::from_vec(vec![1.0, -2.0]);
        let v = expect_phi(&g, &a0, &a_hat, Measure::Interval, &spec()).unwrap();
        assert_relative_eq!(v, a_hat * g.mean(), max_relative = 1e-9);
    }

    #[test]
    fn mgf_matches_quadrature() {
        let s = -0.8;
        for d in [
            RenewalDistribution::exponential(1.5).unwrap(),
            RenewalDistribution::gamma(2.0, 0.7).unwrap(),
            RenewalDistribution::uniform(0.3, 2.0).unwrap(),
        ] {
            let q = expect_matrix_exp(
                &d,
                &Matrix::from_element(1, 1, s),
                Measure::Interval,
                &spec(),
            )
            .unwrap()[(0, 0)];
            assert_relative_eq!(d.mgf(s, &spec()).unwrap(), q, max_relative = 1e-9);
        }
    }

    #[test]
    fn serde_kind_tag() {
        let d: RenewalDistribution =
            serde_json::from_str(r#"{"kind":"gamma","shape":2.0,"scale":0.5}"#).unwrap();
        assert_eq!(
            d,
            RenewalDistribution::Gamma {
                shape: 2.0,
                scale: 0.5
            }
        );
        let d: RenewalDistribution =
            serde_json::from_str(r#"{"kind":"lognormal","location":0.0,"scale":0.5}"#).unwrap();
        assert_eq!(d.name(), "lognormal");
        assert!(serde_json::from_str::<RenewalDistribution>(
            r#"{"kind":"exponential","rate":1.0,"bogus":1}"#
        )
        .is_err());
    }
}
