//! Globally adaptive 7/15-point Gauss–Kronrod quadrature for vector-valued
//! integrands.
//!
//! The error estimate per panel is the raw `|K15 − G7|` difference, which
//! over-estimates the true error of the Kronrod value for smooth integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::QuadratureSpec;
use crate::error::{NcsError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub value: Vec<f64>,
    /// Entrywise error bound.
    pub error: Vec<f64>,
    pub evaluations: usize,
    pub subdivisions: usize,
}

impl Integral {
    pub fn max_error(&self) -> f64 {
        self.error.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn accumulate(&mut self, other: &Integral) {
        for (v, o) in self.value.iter_mut().zip(&other.value) {
            *v += o;
        }
        for (e, o) in self.error.iter_mut().zip(&other.error) {
            *e += o;
        }
        self.evaluations += other.evaluations;
        self.subdivisions += other.subdivisions;
    }
}

struct Panel {
    lo: f64,
    hi: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    priority: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn gauss_kronrod<F>(g: &F, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = g(centre)?;
    let len = fc.len();
    let mut kron: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut gauss: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for (j, (&x, &wk)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let f1 = g(centre - half * x)?;
        let f2 = g(centre + half * x)?;
        if f1.len() != len || f2.len() != len {
            return Err(NcsError::Dimension(
                "integrand changed output length".into(),
            ));
        }
        for i in 0..len {
            let s = f1[i] + f2[i];
            kron[i] += wk * s;
            if j % 2 == 1 {
                gauss[i] += WG[j / 2] * s;
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|v| v * half).collect();
    let error: Vec<f64> = kron
        .iter()
        .zip(&gauss)
        .map(|(k, g)| (half * (k - g)).abs())
        .collect();
    if value.iter().chain(&error).any(|v| !v.is_finite()) {
        return Err(NcsError::NonFinite(format!("integrand on [{lo}, {hi}]")));
    }
    Ok((value, error))
}

fn tolerance(spec: &QuadratureSpec, value: f64) -> f64 {
    spec.absolute_tolerance
        .max(spec.relative_tolerance * value.abs())
}

fn priority(spec: &QuadratureSpec, totals: &[f64], error: &[f64]) -> f64 {
    error
        .iter()
        .zip(totals)
        .map(|(e, t)| e / tolerance(spec, *t))
        .fold(0.0, f64::max)
}

/// Integrates `g` over the partition given by `breakpoints` (sorted,
/// at least two points), refining panels until every entry satisfies
/// `error ≤ max(abs_tol, rel_tol·|value|)`.
pub fn integrate<F>(g: F, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<Integral>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if breakpoints.len() < 2 {
        return Err(NcsError::InvalidParameter(
            "need at least two breakpoints".into(),
        ));
    }
    if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(NcsError::InvalidParameter(format!(
            "breakpoints must be strictly increasing: {breakpoints:?}"
        )));
    }

    let mut panels = Vec::with_capacity(breakpoints.len() - 1);
    let mut evaluations = 0;
    for w in breakpoints.windows(2) {
        let (value, error) = gauss_kronrod(&g, w[0], w[1])?;
        evaluations += 15;
        panels.push((w[0], w[1], value, error));
    }
    let len = panels[0].2.len();
    let mut total = vec![0.0; len];
    let mut total_err = vec![0.0; len];
    for (_, _, v, e) in &panels {
        for i in 0..len {
            total[i] += v[i];
            total_err[i] += e[i];
        }
    }

    let mut heap = BinaryHeap::new();
    // Panels too narrow to split further; they still count toward the error.
    let mut frozen: Vec<Panel> = Vec::new();
    for (lo, hi, value, error) in panels {
        let p = priority(spec, &total, &error);
        heap.push(Panel {
            lo,
            hi,
            value,
            error,
            priority: p,
        });
    }

    let converged = |total: &[f64], err: &[f64]| {
        total
            .iter()
            .zip(err)
            .all(|(t, e)| *e <= tolerance(spec, *t))
    };

    let mut subdivisions = 0;
    while !converged(&total, &total_err) {
        if subdivisions >= spec.max_subdivisions {
            return Err(NcsError::NonConvergence {
                estimate: total,
                error: total_err.iter().copied().fold(0.0, f64::max),
                subdivisions,
            });
        }
        let Some(worst) = heap.pop() else {
            return Err(NcsError::NonConvergence {
                estimate: total,
                error: total_err.iter().copied().fold(0.0, f64::max),
                subdivisions,
            });
        };
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            frozen.push(worst);
            continue;
        }
        let (lv, le) = gauss_kronrod(&g, worst.lo, mid)?;
        let (rv, re) = gauss_kronrod(&g, mid, worst.hi)?;
        evaluations += 30;
        subdivisions += 1;
        for i in 0..len {
            total[i] += lv[i] + rv[i] - worst.value[i];
            total_err[i] += le[i] + re[i] - worst.error[i];
            total_err[i] = total_err[i].max(0.0);
        }
        let lp = priority(spec, &total, &le);
        let rp = priority(spec, &total, &re);
        heap.push(Panel {
            lo: worst.lo,
            hi: mid,
            value: lv,
            error: le,
            priority: lp,
        });
        heap.push(Panel {
            lo: mid,
            hi: worst.hi,
            value: rv,
            error: re,
            priority: rp,
        });
    }

    // Re-sum from the panels to shed accumulated cancellation in the
    // running totals.
    let mut value = vec![0.0; len];
    let mut error = vec![0.0; len];
    for p in heap.iter().chain(&frozen) {
        for i in 0..len {
            value[i] += p.value[i];
            error[i] += p.error[i];
        }
    }
    Ok(Integral {
        value,
        error,
        evaluations,
        subdivisions,
    })
}

/// `∫₀^upper g(τ) dτ`.
pub fn adaptive_integrate<F>(g: F, upper: f64, spec: &QuadratureSpec) -> Result<Integral>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if !(upper > 0.0) || !upper.is_finite() {
        return Err(NcsError::InvalidParameter(format!(
            "upper limit must be finite and positive, got {upper}"
        )));
    }
    integrate(g, &[0.0, upper], spec)
}
