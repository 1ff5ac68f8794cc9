//! `ncs`: analyse, design, simulate and sweep renewal-transmission control
//! systems described by JSON configs.

mod report;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use ncs_core::config::RunConfig;
use ncs_core::sim::SimConfig;
use ncs_core::{design, sim, NcsError};

#[derive(Parser, Debug)]
#[command(
    name = "ncs",
    version,
    about = "Steady-state moments of networked control systems with renewal transmissions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stability and exact steady-state moments (exit 2 when unstable).
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the `design` block for K and write the designed model.
    Design {
        #[command(flatten)]
        common: Common,
        /// Overrides `design.output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo estimate with the analytic values alongside.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mc: McOverrides,
    },
    /// Evaluate the `sweep` block and write one CSV row per grid point.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mc: McOverrides,
        /// Overrides `sweep.output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON)
    config: PathBuf,
    /// Relative tolerance for the renewal quadratures.
    #[arg(long)]
    quad_tol: Option<f64>,
    /// Machine-readable JSON on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct McOverrides {
    /// Overrides `simulate.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `simulate.trajectories`
    #[arg(long)]
    trajectories: Option<usize>,
}

impl McOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.seed.is_none() && self.trajectories.is_none() {
            return;
        }
        let sim = cfg.simulate.get_or_insert_with(SimConfig::default);
        if let Some(seed) = self.seed {
            sim.seed = seed;
        }
        if let Some(t) = self.trajectories {
            sim.trajectories = t;
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, NcsError> {
    let mut cfg = RunConfig::from_path(&common.config)?;
    if let Some(tol) = common.quad_tol {
        cfg.quadrature.relative_tolerance = tol;
    }
    Ok(cfg)
}

fn log_resolved(cfg: &RunConfig) {
    info!(
        "resolved config: {}",
        serde_json::to_string(cfg).expect("config serialises")
    );
}

fn resolve_output(
    flag: &Option<PathBuf>,
    from_config: Option<&str>,
    config: &Path,
) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| from_config.map(|p| config.parent().unwrap_or(Path::new(".")).join(p)))
}

fn run(cli: Cli) -> Result<ExitCode, NcsError> {
    match cli.command {
        Command::Analyze { common } => {
            let cfg = load(&common)?;
            log_resolved(&cfg);
            let model = cfg.model()?;
            let (out, stable) = match ncs_core::analyze(&model, &cfg.quadrature) {
                Ok(r) => (report::analysis(&r.stability, Some(&r), common.json), true),
                Err(NcsError::Unstable {
                    report: Some(s), ..
                }) => (report::analysis(&s, None, common.json), false),
                Err(e) => return Err(e),
            };
            println!("{out}");
            Ok(if stable {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Design { common, output } => {
            let cfg = load(&common)?;
            let problem = cfg.design_problem()?;
            log_resolved(&cfg);
            let result = design::solve(&problem, &cfg.quadrature)?;
            println!("{}", report::design(&result, common.json));
            if !result.feasible {
                return Ok(ExitCode::from(2));
            }
            let target = resolve_output(
                &output,
                cfg.design.as_ref().and_then(|d| d.output.as_deref()),
                &common.config,
            );
            if let Some(path) = target {
                let designed = RunConfig::from_model(&problem.model.with_gain(result.k.clone()));
                write_file(&path, &designed.to_json())?;
                info!("wrote designed model to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { common, mc } => {
            let mut cfg = load(&common)?;
            mc.apply(&mut cfg);
            let sim_cfg = cfg.simulate.get_or_insert_with(SimConfig::default).clone();
            let model = cfg.model()?;
            log_resolved(&cfg);
            info!("resolved simulation: {:?}", sim_cfg.resolve(&model)?);
            let stats = sim::estimate(&model, &sim_cfg)?;
            let analytic = match ncs_core::analyze(&model, &cfg.quadrature) {
                Ok(r) => Some(r),
                Err(NcsError::Unstable { .. }) => None,
                Err(e) => return Err(e),
            };
            println!(
                "{}",
                report::simulation(&stats, analytic.as_ref(), common.json)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common, mc, output } => {
            let mut cfg = load(&common)?;
            mc.apply(&mut cfg);
            let block = cfg
                .sweep
                .clone()
                .ok_or_else(|| NcsError::InvalidParameter("config has no `sweep` block".into()))?;
            if block.monte_carlo {
                cfg.simulate.get_or_insert_with(SimConfig::default);
            }
            let path = resolve_output(&output, block.output.as_deref(), &common.config)
                .ok_or_else(|| {
                    NcsError::InvalidParameter(
                        "sweep needs an output path (-o or sweep.output)".into(),
                    )
                })?;
            let model = cfg.model()?;
            log_resolved(&cfg);
            let rows = sweep::run(&model, &block, &cfg.quadrature, cfg.simulate.as_ref())?;
            let csv = sweep::to_csv(model.n(), &rows)?;
            write_file(&path, &csv)?;
            info!("wrote {} rows to {}", rows.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), NcsError> {
    std::fs::write(path, text)
        .map_err(|e| NcsError::InvalidParameter(format!("writing {}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
