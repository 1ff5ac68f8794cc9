use approx::assert_relative_eq;
use ncs_core::numerics::{
    adaptive_integrate, integrate, matrix_exp, phi_flow, spectral_radius, Matrix, QuadratureSpec,
    Vector,
};
use proptest::prelude::*;

fn square(n: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-1.0..1.0f64, n * n)
        .prop_map(move |v| Matrix::from_row_slice(n, n, &v) * scale)
}

fn taylor_exp(m: &Matrix, t: f64, terms: usize) -> Matrix {
    let n = m.nrows();
    let mt = m * t;
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..terms {
        term = &term * &mt / k as f64;
        sum += &term;
    }
    sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup(m in square(4, 1.5), s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let whole = matrix_exp(&m, s + t).unwrap();
        let split = matrix_exp(&m, s).unwrap() * matrix_exp(&m, t).unwrap();
        prop_assert!((&whole - &split).norm() <= 1e-9 * whole.norm());
    }

    #[test]
    fn exp_matches_series(m in square(4, 1.0)) {
        let e = matrix_exp(&m, 0.7).unwrap();
        let s = taylor_exp(&m, 0.7, 200);
        prop_assert!((&e - &s).norm() <= 1e-13 * s.norm());
    }

    #[test]
    fn exp_inverse(m in square(3, 2.0), t in 0.0..1.5f64) {
        let prod = matrix_exp(&m, t).unwrap() * matrix_exp(&m, -t).unwrap();
        prop_assert!((prod - Matrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn phi_solves_flow_ode(
        a in square(3, 1.0),
        a_hat in proptest::collection::vec(-1.0..1.0f64, 3),
        taus in proptest::collection::vec(0.05..3.0f64, 10),
    ) {
        let a_hat = Vector::from_vec(a_hat);
        prop_assert!(phi_flow(&a, &a_hat, 0.0).unwrap().norm() == 0.0);
        let h = 1e-5;
        for tau in taus {
            let v = phi_flow(&a, &a_hat, tau).unwrap();
            let dv = (phi_flow(&a, &a_hat, tau + h).unwrap() - phi_flow(&a, &a_hat, tau - h).unwrap()) / (2.0 * h);
            let rhs = &a * &v + &a_hat;
            prop_assert!((&dv - &rhs).norm() <= 1e-6 * rhs.norm().max(1.0), "τ = {tau}");
        }
    }

    #[test]
    fn radius_similarity_invariant(m in square(4, 1.0), p in square(4, 0.3)) {
        let p = p + Matrix::identity(4, 4);
        let Some(inv) = p.clone().try_inverse() else { return Ok(()) };
        let similar = &p * &m * inv;
        let r = spectral_radius(&m).unwrap();
        prop_assert!((spectral_radius(&similar).unwrap() - r).abs() <= 1e-7 * r.max(1.0));
    }
}

#[test]
fn phi_with_singular_a_is_linear() {
    let a = Matrix::zeros(2, 2);
    let a_hat = Vector::from_vec(vec![1.0, -2.0]);
    let v = phi_flow(&a, &a_hat, 2.5).unwrap();
    assert_relative_eq!(v[0], 2.5, epsilon = 1e-14);
    assert_relative_eq!(v[1], -5.0, epsilon = 1e-14);
}

#[test]
fn phi_scalar_closed_form() {
    let v = phi_flow(
        &Matrix::from_element(1, 1, -1.0),
        &Vector::from_element(1, 1.0),
        2.0,
    )
    .unwrap();
    assert_relative_eq!(v[0], 1.0 - (-2.0f64).exp(), max_relative = 1e-14);
}

#[test]
fn golden_ratio() {
    let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
    assert_relative_eq!(
        spectral_radius(&m).unwrap(),
        (1.0 + 5f64.sqrt()) / 2.0,
        max_relative = 1e-14
    );
}

/// Error bound dominates the true error for integrands with known integrals.
#[test]
fn quadrature_error_bounds() {
    type Case = (&'static str, Box<dyn Fn(f64) -> f64>, f64, f64);
    let cases: Vec<Case> = vec![
        (
            "geometric",
            Box::new(|t: f64| (-0.7 * t).exp()),
            80.0,
            (1.0 - (-56.0f64).exp()) / 0.7,
        ),
        ("cubic", Box::new(|t: f64| t * t * t - t), 2.0, 2.0),
        (
            "oscillatory",
            Box::new(|t: f64| (5.0 * t).sin()),
            3.0,
            (1.0 - 15f64.cos()) / 5.0,
        ),
        ("sqrt", Box::new(|t: f64| t.sqrt()), 1.0, 2.0 / 3.0),
        (
            "kink",
            Box::new(|t: f64| (t - 0.3).abs()),
            1.0,
            0.045 + 0.245,
        ),
        (
            "peak",
            Box::new(|t: f64| 1.0 / (1.0 + 100.0 * (t - 0.5).powi(2))),
            1.0,
            0.2 * 5f64.atan(),
        ),
    ];
    for tol in [1e-4, 1e-8, 1e-12] {
        let spec = QuadratureSpec {
            relative_tolerance: tol,
            absolute_tolerance: tol * 1e-3,
            ..QuadratureSpec::default()
        };
        for (name, g, upper, exact) in &cases {
            let r = adaptive_integrate(|t| Ok(vec![g(t)]), *upper, &spec).unwrap();
            let true_err = (r.value[0] - exact).abs();
            // Rounding in the exact value itself is a few ulps.
            let floor = 4.0 * f64::EPSILON * exact.abs();
            assert!(
                true_err <= r.error[0] + floor,
                "{name} at tol {tol}: true error {true_err:e} exceeds bound {:e}",
                r.error[0]
            );
            assert!(
                true_err <= (tol * exact.abs()).max(1e-14) * 10.0,
                "{name} at tol {tol}"
            );
        }
    }
}

#[test]
fn quadrature_breakpoints_and_vectors() {
    let spec = QuadratureSpec::default();
    let r = integrate(|t| Ok(vec![t.floor(), 1.0]), &[0.0, 1.0, 2.0, 3.0], &spec).unwrap();
    assert_relative_eq!(r.value[0], 3.0, max_relative = 1e-13);
    assert_relative_eq!(r.value[1], 3.0, max_relative = 1e-13);
    assert!(integrate(|_| Ok(vec![1.0]), &[0.0], &spec).is_err());
    assert!(integrate(|_| Ok(vec![1.0]), &[1.0, 0.0], &spec).is_err());
}
