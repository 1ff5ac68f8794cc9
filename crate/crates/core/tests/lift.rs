use approx::assert_relative_eq;
use ncs_core::lift::{commutation, kron, lift_first, lift_second, mu_of, unvec, vec, MuLayout};
use ncs_core::numerics::{matrix_exp, phi_flow};
use ncs_core::{Matrix, NCSModel, Plant, RenewalDistribution, ResetLaw, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn mat(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-1.0..1.0f64, r * c)
        .prop_map(move |v| Matrix::from_row_slice(r, c, &v))
}

fn vector(n: usize) -> impl Strategy<Value = Vector> {
    proptest::collection::vec(-2.0..2.0f64, n).prop_map(Vector::from_vec)
}

proptest! {
    #[test]
    fn vec_kron_identity(a in mat(3, 3), b in mat(3, 3), c in mat(3, 3)) {
        let lhs = vec(&(&a * &b * &c));
        let rhs = kron(&c.transpose(), &a) * vec(&b);
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn vec_kron_rectangular(a in mat(2, 3), b in mat(3, 4), c in mat(4, 2)) {
        let lhs = vec(&(&a * &b * &c));
        let rhs = kron(&c.transpose(), &a) * vec(&b);
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn commutation_transposes(a in mat(2, 3)) {
        prop_assert_eq!(commutation(2, 3) * vec(&a), vec(&a.transpose()));
        prop_assert_eq!(unvec(&vec(&a), 2, 3).unwrap(), a);
    }

    /// Applying the jump map to `μ(x, u)` gives `E μ(x, Kx + η)`.
    #[test]
    fn jump_consistency(
        x in vector(2),
        u in vector(3),
        k in mat(3, 2),
        sigma in proptest::collection::vec(0.0..2.0f64, 3),
    ) {
        let model = model(2, 3, k.clone(), &sigma, Matrix::zeros(2, 2));
        let sys = lift_second(&model).unwrap();
        let jumped = &sys.j_mu * mu_of(&x, &u) + &sys.r_mu;
        let mut expected = mu_of(&x, &(&k * &x));
        let lay = MuLayout::new(2, 3);
        for (i, s) in sigma.iter().enumerate() {
            expected[lay.uu + i * 3 + i] += s;
        }
        prop_assert!((jumped - expected).amax() <= 1e-12);

        let first = lift_first(&model).unwrap();
        let y = Vector::from_iterator(5, x.iter().chain(u.iter()).copied());
        let y_plus = &first.j_y * y;
        prop_assert!((y_plus.rows(2, 3) - &k * &x).amax() <= 1e-14);
        prop_assert_eq!(y_plus.rows(0, 2).into_owned(), x);
    }
}

fn model(n: usize, m: usize, k: Matrix, sigma: &[f64], d: Matrix) -> NCSModel {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 10 + m as u64);
    let mut r = |rows, cols| Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let a = r(n, n) - Matrix::identity(n, n);
    let plant =
        Plant::with_multiplicative(r(n, 1).column(0).into_owned(), a, r(n, m), r(n, n) * 0.5, d)
            .unwrap();
    NCSModel::new(
        plant,
        ResetLaw::new(k, sigma),
        RenewalDistribution::exponential(1.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn scalar_lift_by_hand() {
    let (ah, a, b, c, k, s) = (1.0, -1.0, 0.5, 0.45, 0.5, 1.0);
    let m = ncs_core::scalar_model(
        ah,
        a,
        b,
        c,
        k,
        s,
        RenewalDistribution::exponential(1.0).unwrap(),
    )
    .unwrap();
    let sys = lift_second(&m).unwrap();
    #[rustfmt::skip]
    let a_mu = Matrix::from_row_slice(5, 5, &[
        a, b, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0,
        2.0 * ah, 0.0, 2.0 * a, 2.0 * b, 0.0,
        0.0, ah, 0.0, a, b,
        0.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    #[rustfmt::skip]
    let j_mu = Matrix::from_row_slice(5, 5, &[
        1.0, 0.0, 0.0, 0.0, 0.0,
        k, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, k, 0.0, 0.0,
        0.0, 0.0, k * k, 0.0, 0.0,
    ]);
    assert_eq!(sys.a_mu, a_mu);
    assert_eq!(sys.j_mu, j_mu);
    assert_eq!(sys.a_hat_mu.as_slice(), &[ah, 0.0, c * c, 0.0, 0.0]);
    assert_eq!(sys.r_mu.as_slice(), &[0.0, 0.0, 0.0, 0.0, s * s]);
}

/// Ensemble of Euler–Maruyama paths with `u` held, no resets.
struct Ensemble {
    mean: Vector,
    se: Vector,
}

fn ensemble_mu(
    model: &NCSModel,
    x0: &Vector,
    u0: &Vector,
    t: f64,
    dt: f64,
    paths: usize,
) -> Ensemble {
    let p = &model.plant;
    let (n, m) = (p.n, p.m);
    let steps = (t / dt).round() as usize;
    let sq = dt.sqrt();
    let dim = MuLayout::new(n, m).dim;
    let mut sum = Vector::zeros(dim);
    let mut sum2 = Vector::zeros(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let drift_const = &p.a_hat + &p.b * u0;
    let mut dw = Vector::zeros(n);
    for _ in 0..paths {
        let mut x = x0.clone();
        for _ in 0..steps {
            for w in dw.iter_mut() {
                *w = rng.sample::<f64, _>(StandardNormal) * sq;
            }
            let sum_dw: f64 = dw.sum();
            let dx = (&drift_const + &p.a * &x) * dt + &p.c * &dw + &p.d * &x * sum_dw;
            x += dx;
        }
        let mu = mu_of(&x, u0);
        sum += &mu;
        sum2 += mu.component_mul(&mu);
    }
    let k = paths as f64;
    let mean = &sum / k;
    let var = (&sum2 / k - mean.component_mul(&mean)) * (k / (k - 1.0));
    Ensemble {
        se: var.map(|v| (v.max(0.0) / k).sqrt()),
        mean,
    }
}

fn check_flow_against_mc(model: &NCSModel, x0: Vector, u0: Vector, paths: usize) {
    let t = 0.5;
    let sys = lift_second(model).unwrap();
    let mu0 = mu_of(&x0, &u0);
    let exact =
        matrix_exp(&sys.a_mu, t).unwrap() * &mu0 + phi_flow(&sys.a_mu, &sys.a_hat_mu, t).unwrap();
    let mc = ensemble_mu(model, &x0, &u0, t, 1e-3, paths);
    for i in 0..exact.len() {
        let gap = (exact[i] - mc.mean[i]).abs();
        assert!(
            gap <= 3.0 * mc.se[i] + 1e-12,
            "μ[{i}]: flow {} vs MC {} ± {}",
            exact[i],
            mc.mean[i],
            mc.se[i]
        );
    }
}

/// Second-moment flow against simulated paths, full `B` with `m = n`.
#[test]
fn moment_flow_matches_mc_additive() {
    let model = model(2, 2, Matrix::zeros(2, 2), &[0.0, 0.0], Matrix::zeros(2, 2));
    check_flow_against_mc(
        &model,
        Vector::from_vec(vec![0.8, -0.4]),
        Vector::from_vec(vec![0.5, 1.0]),
        100_000,
    );
}

/// Multiplicative noise and a rectangular `B`.
#[test]
fn moment_flow_matches_mc_multiplicative() {
    let d = Matrix::from_row_slice(2, 2, &[0.3, -0.2, 0.1, 0.25]);
    let model = model(2, 1, Matrix::zeros(1, 2), &[0.0], d);
    check_flow_against_mc(
        &model,
        Vector::from_vec(vec![1.0, 0.5]),
        Vector::from_vec(vec![-0.7]),
        40_000,
    );
}

#[test]
fn first_lift_blocks() {
    let k = Matrix::from_row_slice(1, 2, &[0.3, -0.1]);
    let m = model(2, 1, k.clone(), &[0.5], Matrix::zeros(2, 2));
    let f = lift_first(&m).unwrap();
    assert_eq!(f.a_y.view((0, 0), (2, 2)), m.plant.a);
    assert_eq!(f.a_y.view((0, 2), (2, 1)), m.plant.b);
    assert!(f.a_y.rows(2, 1).iter().all(|v| *v == 0.0));
    assert_eq!(f.j_y.view((2, 0), (1, 2)), k);
    assert_relative_eq!(f.a_hat_y[2], 0.0);
}
