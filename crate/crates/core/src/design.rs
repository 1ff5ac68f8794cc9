//! Gain synthesis from steady-state moments.
//!
//! Phase 1 drives the free entries of `K` onto the target mean by damped
//! Newton iteration. Phase 2, when free gains outnumber constraints, runs a
//! Nelder–Mead search over the remaining directions, projecting every
//! candidate back onto the mean constraint.

use log::{debug, warn};
use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::error::{NcsError, Result};
use crate::lift::lift_first;
use crate::model::NCSModel;
use crate::moments::{analyze, is_stable_radius, mean_fixed_point, StabilityReport};
use crate::numerics::{Matrix, QuadratureSpec, Vector};

const MAX_NEWTON: usize = 100;
const MAX_PROJECTION: usize = 50;

/// `k = −(â + a·x̄)/(b·x̄)`: the scalar gain whose steady mean is `x̄`.
/// Stability of the result is not checked.
pub fn scalar_gain_for_mean(a_hat: f64, a: f64, b: f64, desired_mean: f64) -> Result<f64> {
    if b == 0.0 {
        return Err(NcsError::Degenerate(
            "b = 0: the input does not reach the state".into(),
        ));
    }
    if desired_mean == 0.0 {
        return Err(NcsError::Infeasible(
            "zero mean is not reachable through k".into(),
        ));
    }
    if a_hat == 0.0 {
        warn!("â = 0: every stable gain gives zero mean; returning k = −a/b");
    }
    Ok(-(a_hat + a * desired_mean) / (b * desired_mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Objective {
    None,
    /// `tr Cov(x)`.
    TraceCovariance,
    /// `Var(x_i)`.
    ComponentVariance(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    /// Supplies the plant, intervals, noise, fixed gains and the starting
    /// values of the free gains.
    pub model: NCSModel,
    /// `(row, col)` positions of `K` the solver may change.
    pub free: Vec<(usize, usize)>,
    /// Desired `⟨x_i⟩`; `None` leaves component `i` unconstrained.
    pub target_mean: Vec<Option<f64>>,
    pub objective: Objective,
    pub mean_tolerance: f64,
}

impl DesignProblem {
    pub fn new(model: NCSModel, free: Vec<(usize, usize)>, target_mean: Vec<Option<f64>>) -> Self {
        DesignProblem {
            model,
            free,
            target_mean,
            objective: Objective::TraceCovariance,
            mean_tolerance: 1e-6,
        }
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.ensure_valid()?;
        let (n, m) = (self.model.n(), self.model.m());
        if self.target_mean.len() != n {
            return Err(NcsError::Dimension(format!(
                "target mean has {} entries, model has {n} states",
                self.target_mean.len()
            )));
        }
        if let Some(&(r, c)) = self.free.iter().find(|(r, c)| *r >= m || *c >= n) {
            return Err(NcsError::Dimension(format!(
                "free gain ({r}, {c}) outside {m}x{n} K"
            )));
        }
        let mut seen = self.free.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.free.len() {
            return Err(NcsError::InvalidParameter("duplicate free gain".into()));
        }
        let constrained = self.target_mean.iter().flatten().count();
        if self.free.len() < constrained {
            return Err(NcsError::InvalidParameter(format!(
                "{} free gains cannot meet {constrained} mean targets",
                self.free.len()
            )));
        }
        if self.target_mean.iter().flatten().any(|v| !v.is_finite()) {
            return Err(NcsError::NonFinite("target mean".into()));
        }
        if let Objective::ComponentVariance(i) = self.objective {
            if i >= n {
                return Err(NcsError::Dimension(format!(
                    "objective component {i} ≥ n = {n}"
                )));
            }
        }
        if !(self.mean_tolerance > 0.0) {
            return Err(NcsError::InvalidParameter(
                "mean tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn gain(&self, theta: &Vector) -> Matrix {
        let mut k = self.model.reset.k.clone();
        for (&(r, c), v) in self.free.iter().zip(theta.iter()) {
            k[(r, c)] = *v;
        }
        k
    }

    fn start(&self) -> Vector {
        Vector::from_iterator(
            self.free.len(),
            self.free.iter().map(|&rc| self.model.reset.k[rc]),
        )
    }

    fn constrained(&self) -> Vec<(usize, f64)> {
        self.target_mean
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub k: Matrix,
    pub achieved_mean: Vector,
    /// `None` when the second moments are unstable at `k`.
    pub achieved_covariance: Option<Matrix>,
    pub stability: StabilityReport,
    pub feasible: bool,
    /// Newton steps plus simplex iterations.
    pub iterations: usize,
    pub objective_value: Option<f64>,
    pub diagnostics: Vec<String>,
}

struct Evaluator<'a> {
    problem: &'a DesignProblem,
    spec: &'a QuadratureSpec,
    targets: Vec<(usize, f64)>,
}

impl Evaluator<'_> {
    /// Mean residual at `theta` and whether the first moment is stable.
    fn residual(&self, theta: &Vector) -> Result<(Vector, bool)> {
        let model = self.problem.model.with_gain(self.problem.gain(theta));
        let sys1 = lift_first(&model)?;
        let (mean, radius) = mean_fixed_point(&sys1, &model.intervals, self.spec)?;
        let r = Vector::from_iterator(
            self.targets.len(),
            self.targets.iter().map(|&(i, t)| mean[i] - t),
        );
        Ok((r, is_stable_radius(radius)))
    }

    fn jacobian(&self, theta: &Vector) -> Result<Matrix> {
        let mut jac = Matrix::zeros(self.targets.len(), theta.len());
        for j in 0..theta.len() {
            let h = 1e-6 * (1.0 + theta[j].abs());
            let mut plus = theta.clone();
            plus[j] += h;
            let mut minus = theta.clone();
            minus[j] -= h;
            let (rp, _) = self.residual(&plus)?;
            let (rm, _) = self.residual(&minus)?;
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        Ok(jac)
    }

    fn newton_tolerance(&self) -> f64 {
        let scale = self.targets.iter().fold(1.0f64, |m, (_, t)| m.max(t.abs()));
        1e-11 * scale
    }

    /// Free gains solving the held-input balance `â + (A + BK)x̄ = 0` in the
    /// least-squares sense, with unconstrained components of `x̄` taken from
    /// the formal mean at `theta`. Exact for scalar plants.
    fn balance_start(&self, theta: &Vector) -> Option<Vector> {
        let p = &self.problem.model.plant;
        let model = self.problem.model.with_gain(self.problem.gain(theta));
        let mut x = lift_first(&model)
            .and_then(|sys| mean_fixed_point(&sys, &model.intervals, self.spec))
            .map(|(y, _)| y.rows(0, p.n).into_owned())
            .unwrap_or_else(|_| Vector::zeros(p.n));
        for &(i, t) in &self.targets {
            x[i] = t;
        }
        let mut fixed = self.problem.model.reset.k.clone();
        for &rc in &self.problem.free {
            fixed[rc] = 0.0;
        }
        let rhs = -(&p.a_hat + &p.a * &x + &p.b * (&fixed * &x));
        let mut lhs = Matrix::zeros(p.n, self.problem.free.len());
        for (j, &(r, c)) in self.problem.free.iter().enumerate() {
            lhs.set_column(j, &(p.b.column(r) * x[c]));
        }
        min_norm_solve(&lhs, &rhs)
            .ok()
            .filter(|t| t.iter().all(|v| v.is_finite()))
    }

    /// [`Self::newton`] from `theta`, then from [`Self::balance_start`] if
    /// that stalls.
    fn phase1(&self, theta: Vector) -> Result<(Vector, usize)> {
        let first = match self.newton(theta.clone()) {
            Ok(done) => return Ok(done),
            Err(e) => e,
        };
        match self.balance_start(&theta) {
            Some(alt) if alt != theta => {
                debug!("phase 1 restarting from the balance gains: {first}");
                self.newton(alt).map_err(|e| {
                    NcsError::Infeasible(format!("{first}; from the balance gains: {e}"))
                })
            }
            _ => Err(first),
        }
    }

    /// Damped Newton with minimum-norm steps. Returns the solution and the
    /// number of iterations.
    fn newton(&self, mut theta: Vector) -> Result<(Vector, usize)> {
        if self.targets.is_empty() {
            return Ok((theta, 0));
        }
        let (mut r, mut stable) = self.residual(&theta).map_err(|e| {
            NcsError::Infeasible(format!("steady mean undefined at the starting gains: {e}"))
        })?;
        let tol = self.newton_tolerance();
        for it in 0..MAX_NEWTON {
            let norm = r.amax();
            if norm <= tol {
                return Ok((theta, it));
            }
            let jac = self.jacobian(&theta)?;
            let step = min_norm_solve(&jac, &(-&r))?;
            let mut lambda = 1.0;
            let mut accepted = None;
            let mut fallback = None;
            while lambda > 1e-10 {
                let trial = &theta + &step * lambda;
                if let Ok((rt, st)) = self.residual(&trial) {
                    if rt.amax() < norm {
                        if st || !stable {
                            accepted = Some((trial, rt, st));
                            break;
                        }
                        fallback.get_or_insert((trial, rt, st));
                    }
                }
                lambda *= 0.5;
            }
            match accepted.or(fallback) {
                Some((t, rt, st)) => {
                    debug!(
                        "newton {it}: |r| {norm:e} -> {:e} (λ = {lambda})",
                        rt.amax()
                    );
                    theta = t;
                    r = rt;
                    stable = st;
                }
                None if norm <= 1e-3 * self.problem.mean_tolerance => return Ok((theta, it)),
                None => {
                    return Err(NcsError::Infeasible(format!(
                        "Newton stalled at residual {norm:e} after {it} iterations"
                    )))
                }
            }
        }
        if r.amax() <= 1e-3 * self.problem.mean_tolerance {
            Ok((theta, MAX_NEWTON))
        } else {
            Err(NcsError::Infeasible(format!(
                "mean residual {:e} after {MAX_NEWTON} Newton iterations",
                r.amax()
            )))
        }
    }

    /// Pulls `theta` back onto the mean constraint with chord iterations
    /// using a fixed Jacobian.
    fn project(&self, mut theta: Vector, jac_pinv: &Matrix) -> Option<Vector> {
        let tol = self.newton_tolerance();
        for _ in 0..MAX_PROJECTION {
            let (r, _) = self.residual(&theta).ok()?;
            if r.amax() <= tol {
                return Some(theta);
            }
            theta -= jac_pinv * r;
        }
        let (r, _) = self.residual(&theta).ok()?;
        (r.amax() <= 1e-3 * self.problem.mean_tolerance).then_some(theta)
    }

    fn objective(&self, theta: &Vector) -> f64 {
        let model = self.problem.model.with_gain(self.problem.gain(theta));
        match analyze(&model, self.spec) {
            Ok(rep) => match self.problem.objective {
                Objective::TraceCovariance | Objective::None => rep.covariance.trace(),
                Objective::ComponentVariance(i) => rep.covariance[(i, i)],
            },
            Err(e) => {
                debug!("objective rejected gains: {e}");
                f64::INFINITY
            }
        }
    }
}

fn min_norm_solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    let svd = SVD::new(a.clone(), true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .map_err(|e| NcsError::Singular(format!("Newton step: {e}")))
}

fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    let svd = SVD::new(a.clone(), true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps)
        .map_err(|e| NcsError::Singular(format!("constraint Jacobian: {e}")))
}

/// Orthonormal basis of the null space of `a` (columns).
fn null_space(a: &Matrix) -> Matrix {
    let cols = a.ncols();
    // Pad to at least square so the thin SVD returns all of V.
    let mut padded = Matrix::zeros(a.nrows().max(cols), cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V");
    let tol = 1e-10 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let small: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    let mut out = Matrix::zeros(cols, small.len());
    for (j, &i) in small.iter().enumerate() {
        out.set_column(j, &v_t.row(i).transpose());
    }
    out
}

/// Nelder–Mead minimisation from `x0` with initial edge `step`.
pub(crate) fn nelder_mead<F>(
    f: F,
    x0: &Vector,
    step: f64,
    max_iter: usize,
    ftol: f64,
) -> (Vector, f64, usize)
where
    F: Fn(&Vector) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<(Vector, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.clone(), f(x0)));
    for i in 0..dim {
        let mut x = x0.clone();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut iterations = 0;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let size = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| (x - &simplex[0].0).amax())
            .fold(0.0, f64::max);
        if best.is_finite()
            && worst.is_finite()
            && (worst - best).abs() <= ftol * (1.0 + best.abs())
            && size < 1e-8
        {
            break;
        }
        if size < 1e-12 {
            break;
        }
        iterations += 1;
        let centroid = simplex[..dim]
            .iter()
            .fold(Vector::zeros(dim), |acc, (x, _)| acc + x)
            / dim as f64;
        let xw = simplex[dim].0.clone();
        let xr = &centroid + (&centroid - &xw);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = &centroid + (&centroid - &xw) * 2.0;
            let fe = f(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = &centroid + (&xr - &centroid) * 0.5;
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = &centroid + (&xw - &centroid) * 0.5;
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            *x = &x_best + (&*x - &x_best) * 0.5;
            *fx = f(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx, iterations)
}

/// Free gains meeting the mean targets, then (if an objective is set and
/// directions remain) the best such gains found by simplex search.
///
/// Fails with [`NcsError::Infeasible`] when no gains hitting the targets are
/// found. Gains that hit the targets but leave the second moments unstable
/// come back with `feasible = false`.
pub fn solve(problem: &DesignProblem, spec: &QuadratureSpec) -> Result<DesignResult> {
    problem.validate()?;
    let eval = Evaluator {
        problem,
        spec,
        targets: problem.constrained(),
    };
    let mut diagnostics = Vec::new();

    let (mut theta, mut iterations) = eval.phase1(problem.start())?;
    let mut objective_value = None;

    let (basis, pinv) = if eval.targets.is_empty() {
        let f = problem.free.len();
        (Matrix::identity(f, f), Matrix::zeros(f, 0))
    } else {
        let jac = eval.jacobian(&theta)?;
        (null_space(&jac), pseudo_inverse(&jac)?)
    };
    let dof = basis.ncols();
    if dof > 0 && problem.objective != Objective::None {
        let anchor = theta.clone();
        let step = 0.1 * anchor.amax().max(1.0);
        let point = |z: &Vector| {
            let t = &anchor + &basis * z;
            if eval.targets.is_empty() {
                Some(t)
            } else {
                eval.project(t, &pinv)
            }
        };
        let f = |z: &Vector| point(z).map_or(f64::INFINITY, |t| eval.objective(&t));
        let (z, fz, its) = nelder_mead(f, &Vector::zeros(dof), step, 200 * dof, 1e-10);
        iterations += its;
        if fz.is_finite() {
            theta = point(&z).expect("finite objective implies a projection");
            objective_value = Some(fz);
        } else {
            diagnostics.push("no stable gains found along the mean constraint".into());
        }
    }
    if dof == 0 && problem.objective != Objective::None {
        diagnostics.push("no residual degrees of freedom; objective not optimised".into());
    }

    let model = problem.model.with_gain(problem.gain(&theta));
    let k = model.reset.k.clone();
    match analyze(&model, spec) {
        Ok(rep) => {
            let hit = eval
                .targets
                .iter()
                .all(|&(i, t)| (rep.mean_x[i] - t).abs() <= problem.mean_tolerance);
            if !hit {
                diagnostics.push("achieved mean outside tolerance".into());
            }
            let value = match problem.objective {
                Objective::None => None,
                Objective::TraceCovariance => Some(rep.covariance.trace()),
                Objective::ComponentVariance(i) => Some(rep.covariance[(i, i)]),
            };
            Ok(DesignResult {
                k,
                achieved_mean: rep.mean_x,
                achieved_covariance: Some(rep.covariance),
                feasible: hit && rep.stability.second_moment_stable,
                stability: rep.stability,
                iterations,
                objective_value: objective_value.or(value),
                diagnostics,
            })
        }
        Err(NcsError::Unstable {
            report,
            spectral_radius,
        }) => {
            diagnostics.push(format!(
                "second moments unstable at the designed gains (ρ = {spectral_radius})"
            ));
            let stability = match report {
                Some(r) => *r,
                None => {
                    return Err(NcsError::Unstable {
                        spectral_radius,
                        report,
                    })
                }
            };
            let sys1 = lift_first(&model)?;
            let achieved_mean = mean_fixed_point(&sys1, &model.intervals, spec)
                .map(|(m, _)| m.rows(0, model.n()).into_owned())
                .unwrap_or_else(|_| Vector::from_element(model.n(), f64::NAN));
            Ok(DesignResult {
                k,
                achieved_mean,
                achieved_covariance: None,
                stability,
                feasible: false,
                iterations,
                objective_value: None,
                diagnostics,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::scalar_model;
    use crate::renewal::RenewalDistribution;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_gain_examples() {
        assert_relative_eq!(
            scalar_gain_for_mean(1.0, -1.0, 0.5, 4.0 / 3.0).unwrap(),
            0.5,
            max_relative = 1e-14
        );
        assert_relative_eq!(scalar_gain_for_mean(0.0, -1.0, 0.5, 2.0).unwrap(), 2.0);
        assert_relative_eq!(scalar_gain_for_mean(1.0, 0.0, 0.5, 4.0).unwrap(), -0.5);
        assert!(matches!(
            scalar_gain_for_mean(1.0, -1.0, 0.5, 0.0),
            Err(NcsError::Infeasible(_))
        ));
    }

    #[test]
    fn nelder_mead_quadratic() {
        let f = |x: &Vector| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let (x, fx, _) = nelder_mead(f, &Vector::zeros(2), 0.5, 1000, 1e-14);
        assert!(fx < 1e-10);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(x[1], -2.0, epsilon = 1e-4);
    }

    #[test]
    fn null_space_of_row() {
        let a = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&a);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).amax() < 1e-12);
    }

    #[test]
    fn scalar_design_round_trip() {
        let model = scalar_model(
            1.0,
            -1.0,
            0.5,
            0.45,
            0.0,
            1.0,
            RenewalDistribution::exponential(1.0).unwrap(),
        )
        .unwrap();
        let problem = DesignProblem::new(model, vec![(0, 0)], vec![Some(4.0 / 3.0)]);
        let r = solve(&problem, &QuadratureSpec::default()).unwrap();
        assert!(r.feasible);
        assert_relative_eq!(r.k[(0, 0)], 0.5, epsilon = 1e-8);
    }
}
