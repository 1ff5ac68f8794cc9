//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Degree selection follows the backward-error bounds for the 1-norm: the
//! smallest of the degrees 3, 5, 7, 9 whose threshold covers `‖M‖₁` is used,
//! otherwise the matrix is scaled by `2^-s` until degree 13 applies.

use super::{Matrix, Vector};
use crate::error::{NcsError, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_230e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// `e^{M t}`.
pub fn matrix_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(NcsError::Dimension(format!(
            "matrix_exp needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !t.is_finite() || m.iter().any(|v| !v.is_finite()) {
        return Err(NcsError::NonFinite("matrix_exp input".into()));
    }
    let a = m * t;
    Ok(expm(&a))
}

fn one_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn expm(a: &Matrix) -> Matrix {
    let n = a.nrows();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    if n == 1 {
        return Matrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return Matrix::identity(n, n);
    }
    let eye = Matrix::identity(n, n);
    let a2 = a * a;

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, &a2, &eye, coeffs);
        }
    }

    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = 2f64.powi(-s);
    let a = a * scale;
    let a2 = a2 * (scale * scale);
    let mut r = pade13(&a, &a2, &eye);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_low(a: &Matrix, a2: &Matrix, eye: &Matrix, b: &[f64]) -> Matrix {
    // Even powers A^0, A^2, A^4, ... up to the degree.
    let mut powers = vec![eye.clone(), a2.clone()];
    while powers.len() <= (b.len() - 1) / 2 {
        let next = powers.last().unwrap() * a2;
        powers.push(next);
    }
    let n = a.nrows();
    let mut u = Matrix::zeros(n, n);
    let mut v = Matrix::zeros(n, n);
    for (j, &bj) in b.iter().enumerate() {
        if j % 2 == 1 {
            u += &powers[j / 2] * bj;
        } else {
            v += &powers[j / 2] * bj;
        }
    }
    let u = a * u;
    solve_pade(&(&v - &u), &(&v + &u))
}

fn pade13(a: &Matrix, a2: &Matrix, eye: &Matrix) -> Matrix {
    let b = &B13;
    let a4 = a2 * a2;
    let a6 = &a4 * a2;
    let w1 = &a6 * b[13] + &a4 * b[11] + a2 * b[9];
    let w2 = &a6 * b[7] + &a4 * b[5] + a2 * b[3] + eye * b[1];
    let u = a * (&a6 * w1 + w2);
    let z1 = &a6 * b[12] + &a4 * b[10] + a2 * b[8];
    let z2 = &a6 * b[6] + &a4 * b[4] + a2 * b[2] + eye * b[0];
    let v = &a6 * z1 + z2;
    solve_pade(&(&v - &u), &(&v + &u))
}

fn solve_pade(q: &Matrix, p: &Matrix) -> Matrix {
    // Q is well conditioned for the chosen degree/scaling; LU cannot fail
    // short of NaN input, which matrix_exp rejects.
    q.clone()
        .lu()
        .solve(p)
        .expect("Padé denominator is nonsingular for scaled arguments")
}

/// `e^{Aτ}∫₀^τ e^{−Ar} â dr`, read off the top-right block of
/// `exp([[A, â], [0, 0]] τ)` so that singular `A` needs no special casing.
pub fn phi_flow(a: &Matrix, a_hat: &Vector, tau: f64) -> Result<Vector> {
    let n = a.nrows();
    if !a.is_square() || a_hat.len() != n {
        return Err(NcsError::Dimension(format!(
            "phi_flow: A is {}x{}, â has length {}",
            a.nrows(),
            a.ncols(),
            a_hat.len()
        )));
    }
    if tau < 0.0 {
        return Err(NcsError::Domain(format!("phi_flow at negative τ = {tau}")));
    }
    let aug = augment(a, a_hat);
    let e = matrix_exp(&aug, tau)?;
    Ok(e.view((0, n), (n, 1)).column(0).into_owned())
}

/// `[[A, â], [0, 0]]`.
pub fn augment(a: &Matrix, a_hat: &Vector) -> Matrix {
    let n = a.nrows();
    let mut aug = Matrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, 1)).copy_from(a_hat);
    aug
}
