//! JSON run configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "plant": { "n": 1, "m": 1, "a_hat": [1.0], "A": [[-1.0]], "B": [[0.5]],
//!              "C": [[0.45]], "D": [[0.0]] },
//!   "reset": { "K": [[0.5]], "sigma_diag": [1.0] },
//!   "intervals": { "kind": "exponential", "rate": 1.0 },
//!   "simulate": { "trajectories": 1000, "seed": 1 },
//!   "sweep": { "parameter": "mean_interval", "start": 0.05, "stop": 3.0, "points": 30 }
//! }
//! ```
//!
//! Matrices are row-major nested arrays. `D` may be omitted (zero). Unknown
//! keys anywhere are rejected. Instead of the inline `plant`, `reset` and
//! `intervals` blocks a config may name `"model_file"`, another config whose
//! model is used; relative paths resolve against the referring file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{DesignProblem, Objective};
use crate::error::{NcsError, Result};
use crate::model::{NCSModel, Plant, ResetLaw};
use crate::numerics::{Matrix, QuadratureSpec, Vector};
use crate::renewal::RenewalDistribution;
use crate::sim::SimConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub n: usize,
    pub m: usize,
    pub a_hat: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetConfig {
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    /// Diagonal of the channel-noise covariance Σ.
    pub sigma_diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// `[row, col]` entries of K the solver may change; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free: Option<Vec<[usize; 2]>>,
    /// One entry per state; `null` leaves it unconstrained.
    pub target_mean: Vec<Option<f64>>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default = "default_mean_tolerance")]
    pub mean_tolerance: f64,
    /// Where to write the model with the designed K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_objective() -> Objective {
    Objective::TraceCovariance
}

fn default_mean_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Rescale the interval law to each mean, keeping its shape.
    MeanInterval,
    /// Gamma intervals at the configured mean with each CV² (0 = periodic).
    Cv2,
    /// One entry of K, given by `entry`.
    Gain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// K entry for [`SweepParameter::Gain`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<[usize; 2]>,
    /// Add Monte Carlo columns using the `simulate` block.
    #[serde(default)]
    pub monte_carlo: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl SweepConfig {
    /// Explicit `values`, or `points` evenly spaced from `start` to `stop`.
    pub fn grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(p)) => match p {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..p)
                    .map(|i| a + (b - a) * i as f64 / (p - 1) as f64)
                    .collect(),
            },
            _ => {
                return Err(NcsError::InvalidParameter(
                    "sweep needs either `values` or all of `start`, `stop`, `points`".into(),
                ))
            }
        };
        if grid.is_empty() {
            return Err(NcsError::InvalidParameter("sweep grid is empty".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(NcsError::NonFinite("sweep grid".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset: Option<ResetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<RenewalDistribution>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let shape: Vec<usize> = rows.iter().map(|r| r.len()).collect();
        return Err(NcsError::Dimension(format!(
            "{name} must be {nrows}x{ncols}, got rows of lengths {shape:?}"
        )));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn nested(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| NcsError::InvalidParameter(format!("config: {e}")))?;
        cfg.check_version()?;
        Ok(cfg)
    }

    /// Reads a config and inlines any `model_file` it names.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NcsError::InvalidParameter(format!("reading {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(file) = cfg.model_file.take() {
            if cfg.plant.is_some() || cfg.reset.is_some() || cfg.intervals.is_some() {
                return Err(NcsError::InvalidParameter(
                    "give either `model_file` or inline plant/reset/intervals, not both".into(),
                ));
            }
            let target = path.parent().unwrap_or(Path::new(".")).join(&file);
            if target == path {
                return Err(NcsError::InvalidParameter(
                    "config names itself as model_file".into(),
                ));
            }
            let inner = Self::from_path(&target)?;
            cfg.plant = inner.plant;
            cfg.reset = inner.reset;
            cfg.intervals = inner.intervals;
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    fn check_version(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(NcsError::InvalidParameter(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(())
    }

    /// Validated model.
    pub fn model(&self) -> Result<NCSModel> {
        self.check_version()?;
        self.quadrature.validate()?;
        if self.model_file.is_some() {
            return Err(NcsError::InvalidParameter(
                "`model_file` is only resolved when loading from a path".into(),
            ));
        }
        let missing =
            |what: &str| NcsError::InvalidParameter(format!("config has no `{what}` block"));
        let p = self.plant.as_ref().ok_or_else(|| missing("plant"))?;
        let r = self.reset.as_ref().ok_or_else(|| missing("reset"))?;
        let intervals = self.intervals.ok_or_else(|| missing("intervals"))?;
        let (n, m) = (p.n, p.m);
        if p.a_hat.len() != n {
            return Err(NcsError::Dimension(format!("a_hat must have {n} entries")));
        }
        let d = match &p.d {
            Some(d) => matrix("D", d, n, n)?,
            None => Matrix::zeros(n, n),
        };
        let plant = Plant::with_multiplicative(
            Vector::from_column_slice(&p.a_hat),
            matrix("A", &p.a, n, n)?,
            matrix("B", &p.b, n, m)?,
            matrix("C", &p.c, n, n)?,
            d,
        )?;
        if r.sigma_diag.len() != m {
            return Err(NcsError::Dimension(format!(
                "sigma_diag must have {m} entries"
            )));
        }
        let reset = ResetLaw::new(matrix("K", &r.k, m, n)?, &r.sigma_diag);
        NCSModel::new(plant, reset, intervals)
    }

    /// Configuration describing `model`, with no command blocks.
    pub fn from_model(model: &NCSModel) -> Self {
        let p = &model.plant;
        RunConfig {
            schema_version: SCHEMA_VERSION,
            model_file: None,
            plant: Some(PlantConfig {
                n: p.n,
                m: p.m,
                a_hat: p.a_hat.iter().copied().collect(),
                a: nested(&p.a),
                b: nested(&p.b),
                c: nested(&p.c),
                d: p.d.iter().any(|v| *v != 0.0).then(|| nested(&p.d)),
            }),
            reset: Some(ResetConfig {
                k: nested(&model.reset.k),
                sigma_diag: model.reset.sigma_diag(),
            }),
            intervals: Some(model.intervals),
            quadrature: QuadratureSpec::default(),
            design: None,
            simulate: None,
            sweep: None,
        }
    }

    pub fn design_problem(&self) -> Result<DesignProblem> {
        let model = self.model()?;
        let block = self
            .design
            .as_ref()
            .ok_or_else(|| NcsError::InvalidParameter("config has no `design` block".into()))?;
        let free = match &block.free {
            Some(f) => f.iter().map(|[r, c]| (*r, *c)).collect(),
            None => (0..model.m())
                .flat_map(|r| (0..model.n()).map(move |c| (r, c)))
                .collect(),
        };
        let problem = DesignProblem {
            model,
            free,
            target_mean: block.target_mean.clone(),
            objective: block.objective,
            mean_tolerance: block.mean_tolerance,
        };
        problem.validate()?;
        Ok(problem)
    }
}
