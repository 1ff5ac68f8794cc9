//! Lifted moment systems.
//!
//! Both lifts have the same shape: between transmissions the moment vector
//! `z` obeys `z' = ĉ + M z`, and at a transmission it jumps to `J z + R`.
//! The first lift tracks `y = [x; u]`; the second tracks
//! `μ = [x; u; vec(xxᵀ); vec(xuᵀ); vec(uuᵀ)]`.

use crate::error::{NcsError, Result};
use crate::model::NCSModel;
use crate::numerics::{Matrix, Vector};

/// `M_l ⊗ M_r`.
pub fn kron(l: &Matrix, r: &Matrix) -> Matrix {
    l.kronecker(r)
}

/// Column-stacking vectorisation.
pub fn vec(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(NcsError::Dimension(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Matrix::from_column_slice(rows, cols, v.as_slice()))
}

/// The `pq × pq` permutation with `vec(Xᵀ) = P·vec(X)` for `X` of size
/// `p × q`.
pub fn commutation(p: usize, q: usize) -> Matrix {
    let mut out = Matrix::zeros(p * q, p * q);
    for i in 0..p {
        for j in 0..q {
            // X[i,j] sits at i + j·p in vec(X) and at j + i·q in vec(Xᵀ).
            out[(j + i * q, i + j * p)] = 1.0;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstMomentSystem {
    pub n: usize,
    pub m: usize,
    pub a_hat_y: Vector,
    pub a_y: Matrix,
    pub j_y: Matrix,
    pub c_y: Matrix,
    pub d_y: Matrix,
}

impl FirstMomentSystem {
    pub fn dim(&self) -> usize {
        self.n + self.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentSystem {
    pub n: usize,
    pub m: usize,
    pub a_hat_mu: Vector,
    pub a_mu: Matrix,
    pub j_mu: Matrix,
    pub r_mu: Vector,
}

/// Offsets of the five blocks of `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuLayout {
    pub x: usize,
    pub u: usize,
    pub xx: usize,
    pub xu: usize,
    pub uu: usize,
    pub dim: usize,
}

impl MuLayout {
    pub fn new(n: usize, m: usize) -> Self {
        let x = 0;
        let u = n;
        let xx = n + m;
        let xu = xx + n * n;
        let uu = xu + n * m;
        MuLayout {
            x,
            u,
            xx,
            xu,
            uu,
            dim: uu + m * m,
        }
    }
}

impl SecondMomentSystem {
    pub fn dim(&self) -> usize {
        self.layout().dim
    }

    pub fn layout(&self) -> MuLayout {
        MuLayout::new(self.n, self.m)
    }

    /// Same system with the channel noise switched off.
    pub fn without_channel_noise(&self) -> Self {
        let mut out = self.clone();
        out.r_mu.fill(0.0);
        out
    }
}

/// `μ` for a point state `(x, u)`.
pub fn mu_of(x: &Vector, u: &Vector) -> Vector {
    let (n, m) = (x.len(), u.len());
    let lay = MuLayout::new(n, m);
    let mut out = Vector::zeros(lay.dim);
    out.rows_mut(lay.x, n).copy_from(x);
    out.rows_mut(lay.u, m).copy_from(u);
    out.rows_mut(lay.xx, n * n)
        .copy_from(&vec(&(x * x.transpose())));
    out.rows_mut(lay.xu, n * m)
        .copy_from(&vec(&(x * u.transpose())));
    out.rows_mut(lay.uu, m * m)
        .copy_from(&vec(&(u * u.transpose())));
    out
}

fn put(dst: &mut Matrix, row: usize, col: usize, src: &Matrix) {
    dst.view_mut((row, col), (src.nrows(), src.ncols()))
        .copy_from(src);
}

pub fn lift_first(model: &NCSModel) -> Result<FirstMomentSystem> {
    model.ensure_valid()?;
    let p = &model.plant;
    let (n, m) = (p.n, p.m);
    let dim = n + m;

    let mut a_y = Matrix::zeros(dim, dim);
    put(&mut a_y, 0, 0, &p.a);
    put(&mut a_y, 0, n, &p.b);

    let mut a_hat_y = Vector::zeros(dim);
    a_hat_y.rows_mut(0, n).copy_from(&p.a_hat);

    let mut j_y = Matrix::zeros(dim, dim);
    put(&mut j_y, 0, 0, &Matrix::identity(n, n));
    put(&mut j_y, n, 0, &model.reset.k);

    let mut c_y = Matrix::zeros(dim, dim);
    put(&mut c_y, 0, 0, &p.c);
    let mut d_y = Matrix::zeros(dim, dim);
    put(&mut d_y, 0, 0, &p.d);

    Ok(FirstMomentSystem {
        n,
        m,
        a_hat_y,
        a_y,
        j_y,
        c_y,
        d_y,
    })
}

pub fn lift_second(model: &NCSModel) -> Result<SecondMomentSystem> {
    model.ensure_valid()?;
    let p = &model.plant;
    let (n, m) = (p.n, p.m);
    let lay = MuLayout::new(n, m);
    let i_n = Matrix::identity(n, n);
    let i_m = Matrix::identity(m, m);
    let a_hat = Matrix::from_column_slice(n, 1, p.a_hat.as_slice());
    // Row sums of C: the diffusion is C + D x 𝟙ᵀ, so C𝟙 pairs with D x.
    let r = Matrix::from_column_slice(n, 1, p.c.column_sum().as_slice());

    let m1 = kron(&i_n, &a_hat) + kron(&a_hat, &i_n) + kron(&p.d, &r) + kron(&r, &p.d);
    let m2 = kron(&i_n, &p.a) + kron(&p.a, &i_n) + kron(&p.d, &p.d) * n as f64;
    // vec(B u xᵀ) = (I ⊗ B) vec(u xᵀ) = (I ⊗ B) P vec(x uᵀ).
    let m3 = kron(&i_n, &p.b) * commutation(n, m) + kron(&p.b, &i_n);

    let mut a_mu = Matrix::zeros(lay.dim, lay.dim);
    put(&mut a_mu, lay.x, lay.x, &p.a);
    put(&mut a_mu, lay.x, lay.u, &p.b);
    put(&mut a_mu, lay.xx, lay.x, &m1);
    put(&mut a_mu, lay.xx, lay.xx, &m2);
    put(&mut a_mu, lay.xx, lay.xu, &m3);
    put(&mut a_mu, lay.xu, lay.u, &kron(&i_m, &a_hat));
    put(&mut a_mu, lay.xu, lay.xu, &kron(&i_m, &p.a));
    put(&mut a_mu, lay.xu, lay.uu, &kron(&i_m, &p.b));

    let mut a_hat_mu = Vector::zeros(lay.dim);
    a_hat_mu.rows_mut(lay.x, n).copy_from(&p.a_hat);
    a_hat_mu
        .rows_mut(lay.xx, n * n)
        .copy_from(&vec(&(&p.c * p.c.transpose())));

    let k = &model.reset.k;
    let mut j_mu = Matrix::zeros(lay.dim, lay.dim);
    put(&mut j_mu, lay.x, lay.x, &i_n);
    put(&mut j_mu, lay.u, lay.x, k);
    put(&mut j_mu, lay.xx, lay.xx, &Matrix::identity(n * n, n * n));
    put(&mut j_mu, lay.xu, lay.xx, &kron(k, &i_n));
    put(&mut j_mu, lay.uu, lay.xx, &kron(k, k));

    let mut r_mu = Vector::zeros(lay.dim);
    r_mu.rows_mut(lay.uu, m * m)
        .copy_from(&vec(&model.reset.sigma));

    Ok(SecondMomentSystem {
        n,
        m,
        a_hat_mu,
        a_mu,
        j_mu,
        r_mu,
    })
}
