//! Monte Carlo estimates of the steady-state moments.
//!
//! Each trajectory integrates the plant SDE by Euler–Maruyama on a fixed
//! grid, splitting the step that straddles a transmission so resets land
//! exactly on the sampled renewal times. Steady-state moments are time
//! averages after burn-in, and confidence intervals come from the spread of
//! those averages across trajectories.

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NcsError, Result};
use crate::model::NCSModel;
use crate::numerics::{Matrix, Vector};

/// Norm beyond which a trajectory counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Fraction of diverged trajectories above which [`estimate`] refuses.
pub const MAX_DIVERGENT_FRACTION: f64 = 0.1;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Simulated time per trajectory; `200·⟨T⟩` when absent.
    pub horizon: Option<f64>,
    /// Discarded initial time; half the horizon when absent.
    pub burn_in: Option<f64>,
    pub trajectories: usize,
    pub seed: u64,
    /// Record every `record_stride`-th grid point.
    pub record_stride: usize,
    /// Worker threads; the global rayon pool when absent.
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: None,
            burn_in: None,
            trajectories: 1000,
            seed: 0,
            record_stride: 10,
            threads: None,
        }
    }
}

/// [`SimConfig`] with every default filled in for a particular model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub record_stride: usize,
}

impl SimConfig {
    pub fn resolve(&self, model: &NCSModel) -> Result<ResolvedSimConfig> {
        let mean_t = model.intervals.mean();
        let horizon = self.horizon.unwrap_or(200.0 * mean_t);
        let burn_in = self.burn_in.unwrap_or(0.5 * horizon);
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(NcsError::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(NcsError::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(burn_in >= 0.0 && burn_in < horizon) {
            return Err(NcsError::InvalidParameter(format!(
                "burn-in {burn_in} must lie in [0, horizon = {horizon})"
            )));
        }
        if self.trajectories == 0 || self.record_stride == 0 {
            return Err(NcsError::InvalidParameter(
                "trajectories and record_stride must be positive".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(NcsError::InvalidParameter(
                "threads must be positive".into(),
            ));
        }
        if self.dt > mean_t / 20.0 {
            warn!(
                "dt = {} is coarse against the mean interval {mean_t}",
                self.dt
            );
        }
        Ok(ResolvedSimConfig {
            dt: self.dt,
            horizon,
            burn_in,
            trajectories: self.trajectories,
            seed: self.seed,
            record_stride: self.record_stride,
        })
    }
}

/// Post-burn-in time averages of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub mean_x: Vector,
    /// Time average of `xxᵀ`.
    pub second: Matrix,
    pub samples: usize,
    pub resets: usize,
    /// Sum of all sampled inter-transmission intervals.
    pub interval_sum: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean_x: Vector,
    pub var_x: Matrix,
    /// Half-widths of the 95% intervals for `mean_x`.
    pub ci95_mean: Vector,
    /// Half-widths of the 95% intervals for `var_x`.
    pub ci95_var: Matrix,
    /// Trajectories that contributed (did not diverge).
    pub effective_samples: usize,
    pub divergent: usize,
    pub resets: usize,
    pub mean_interval: f64,
    /// Standard error of `mean_interval`.
    pub interval_se: f64,
}

/// Dense row-major copies of the model for the inner loop.
struct Kernel {
    n: usize,
    m: usize,
    a_hat: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    k: Vec<f64>,
    sigma_sd: Vec<f64>,
    has_d: bool,
}

fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl Kernel {
    fn new(model: &NCSModel) -> Self {
        let p = &model.plant;
        Kernel {
            n: p.n,
            m: p.m,
            a_hat: p.a_hat.as_slice().to_vec(),
            a: row_major(&p.a),
            b: row_major(&p.b),
            c: row_major(&p.c),
            d: row_major(&p.d),
            k: row_major(&model.reset.k),
            sigma_sd: model
                .reset
                .sigma
                .diagonal()
                .iter()
                .map(|v| v.sqrt())
                .collect(),
            has_d: p.d.iter().any(|v| *v != 0.0),
        }
    }

    /// One Euler–Maruyama step of length `h`.
    fn step(
        &self,
        x: &mut [f64],
        u: &[f64],
        h: f64,
        xi: &mut [f64],
        scratch: &mut [f64],
        rng: &mut ChaCha8Rng,
    ) {
        let n = self.n;
        let sq = h.sqrt();
        let mut xi_sum = 0.0;
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(rng);
            xi_sum += *v;
        }
        for i in 0..n {
            let mut drift = self.a_hat[i];
            let mut diff = 0.0;
            for j in 0..n {
                drift += self.a[i * n + j] * x[j];
                diff += self.c[i * n + j] * xi[j];
                if self.has_d {
                    diff += xi_sum * self.d[i * n + j] * x[j];
                }
            }
            for j in 0..self.m {
                drift += self.b[i * self.m + j] * u[j];
            }
            scratch[i] = drift * h + diff * sq;
        }
        for i in 0..n {
            x[i] += scratch[i];
        }
    }

    fn reset(&self, x: &[f64], u: &mut [f64], rng: &mut ChaCha8Rng) {
        for i in 0..self.m {
            let mut v = 0.0;
            for j in 0..self.n {
                v += self.k[i * self.n + j] * x[j];
            }
            if self.sigma_sd[i] > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                v += self.sigma_sd[i] * z;
            }
            u[i] = v;
        }
    }
}

fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_one(
    model: &NCSModel,
    kernel: &Kernel,
    cfg: &ResolvedSimConfig,
    index: usize,
) -> TrajectorySummary {
    let (n, m) = (kernel.n, kernel.m);
    let mut rng = trajectory_rng(cfg.seed, index);
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut xi = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut sum_x = vec![0.0; n];
    let mut sum_xx = vec![0.0; n * n];
    let mut samples = 0usize;
    let mut resets = 0usize;

    let d = &model.intervals;
    let first = d.sample(&mut rng);
    let mut interval_sum = first;
    let mut next_reset = first;

    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let burn_steps = (cfg.burn_in / cfg.dt).ceil() as usize;
    let mut diverged = false;

    for i in 0..steps {
        let t_end = (i + 1) as f64 * cfg.dt;
        let mut t = i as f64 * cfg.dt;
        while next_reset < t_end {
            let h = next_reset - t;
            if h > 0.0 {
                kernel.step(&mut x, &u, h, &mut xi, &mut scratch, &mut rng);
            }
            t = next_reset;
            kernel.reset(&x, &mut u, &mut rng);
            resets += 1;
            let gap = d.sample(&mut rng);
            interval_sum += gap;
            next_reset += gap;
        }
        kernel.step(&mut x, &u, t_end - t, &mut xi, &mut scratch, &mut rng);

        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if !(norm2.sqrt() <= DIVERGENCE_NORM) {
            diverged = true;
            break;
        }
        if i + 1 >= burn_steps && (i + 1) % cfg.record_stride == 0 {
            samples += 1;
            for p in 0..n {
                sum_x[p] += x[p];
                for q in 0..n {
                    sum_xx[p + q * n] += x[p] * x[q];
                }
            }
        }
    }

    let scale = if samples > 0 {
        1.0 / samples as f64
    } else {
        f64::NAN
    };
    TrajectorySummary {
        mean_x: Vector::from_vec(sum_x) * scale,
        second: Matrix::from_vec(n, n, sum_xx) * scale,
        samples,
        resets,
        interval_sum,
        diverged,
    }
}

/// One trajectory, reproducible from `(cfg.seed, index)` alone.
pub fn simulate_trajectory(
    model: &NCSModel,
    cfg: &SimConfig,
    index: usize,
) -> Result<TrajectorySummary> {
    model.ensure_valid()?;
    let resolved = cfg.resolve(model)?;
    Ok(run_one(model, &Kernel::new(model), &resolved, index))
}

/// All trajectories, in index order.
pub fn run_trajectories(model: &NCSModel, cfg: &SimConfig) -> Result<Vec<TrajectorySummary>> {
    model.ensure_valid()?;
    let resolved = cfg.resolve(model)?;
    let kernel = Kernel::new(model);
    let work = || -> Vec<TrajectorySummary> {
        (0..resolved.trajectories)
            .into_par_iter()
            .map(|i| run_one(model, &kernel, &resolved, i))
            .collect()
    };
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| NcsError::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Reduces trajectory summaries in order; the result depends only on the
/// summaries, not on how they were produced.
pub fn aggregate(runs: &[TrajectorySummary]) -> Result<EnsembleStats> {
    let total = runs.len();
    let divergent = runs.iter().filter(|r| r.diverged).count();
    if total == 0 {
        return Err(NcsError::InvalidParameter("no trajectories".into()));
    }
    if divergent as f64 > MAX_DIVERGENT_FRACTION * total as f64 {
        return Err(NcsError::SimulationDiverged { divergent, total });
    }
    let good: Vec<&TrajectorySummary> = runs
        .iter()
        .filter(|r| !r.diverged && r.samples > 0)
        .collect();
    let count = good.len();
    if count < 2 {
        return Err(NcsError::InvalidParameter(
            "need at least two trajectories with recorded samples".into(),
        ));
    }
    let n = good[0].mean_x.len();
    let nf = count as f64;

    let mean_x = good.iter().fold(Vector::zeros(n), |acc, r| acc + &r.mean_x) / nf;
    let mean_second = good
        .iter()
        .fold(Matrix::zeros(n, n), |acc, r| acc + &r.second)
        / nf;
    let var_x = &mean_second - &mean_x * mean_x.transpose();

    let sd_factor = Z95 / nf.sqrt();
    let ci95_mean = Vector::from_fn(n, |p, _| {
        let ss: f64 = good.iter().map(|r| (r.mean_x[p] - mean_x[p]).powi(2)).sum();
        (ss / (nf - 1.0)).sqrt() * sd_factor
    });
    // Delta method: var = E[S2] − E[S1]E[S1]ᵀ, linearised per trajectory.
    let ci95_var = Matrix::from_fn(n, n, |p, q| {
        let z: Vec<f64> = good
            .iter()
            .map(|r| r.second[(p, q)] - mean_x[p] * r.mean_x[q] - mean_x[q] * r.mean_x[p])
            .collect();
        let zm = z.iter().sum::<f64>() / nf;
        let ss: f64 = z.iter().map(|v| (v - zm).powi(2)).sum();
        (ss / (nf - 1.0)).sqrt() * sd_factor
    });

    let resets: usize = runs.iter().map(|r| r.resets + 1).sum();
    let interval_sum: f64 = runs.iter().map(|r| r.interval_sum).sum();
    let mean_interval = interval_sum / resets as f64;
    let per_traj: Vec<f64> = runs
        .iter()
        .map(|r| r.interval_sum / (r.resets + 1) as f64)
        .collect();
    let pm = per_traj.iter().sum::<f64>() / total as f64;
    let interval_se = if total > 1 {
        (per_traj.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / (total as f64 - 1.0)).sqrt()
            / (total as f64).sqrt()
    } else {
        f64::NAN
    };

    Ok(EnsembleStats {
        mean_x,
        var_x: (&var_x + var_x.transpose()) * 0.5,
        ci95_mean,
        ci95_var,
        effective_samples: count,
        divergent,
        resets,
        mean_interval,
        interval_se,
    })
}

/// Ensemble statistics over `cfg.trajectories` independent trajectories.
/// Refuses when more than 10% of them diverge.
pub fn estimate(model: &NCSModel, cfg: &SimConfig) -> Result<EnsembleStats> {
    let resolved = cfg.resolve(model)?;
    info!(
        "simulating {} trajectories: dt {}, horizon {}, burn-in {}, stride {}, seed {}",
        resolved.trajectories,
        resolved.dt,
        resolved.horizon,
        resolved.burn_in,
        resolved.record_stride,
        resolved.seed
    );
    aggregate(&run_trajectories(model, cfg)?)
}
