use log::warn;
use ncs_core::config::{SweepConfig, SweepParameter};
use ncs_core::sim::{self, SimConfig};
use ncs_core::{
    analyze, MomentReport, NCSModel, NcsError, QuadratureSpec, RenewalDistribution, Result,
};
use rayon::prelude::*;

pub struct Row {
    pub value: f64,
    pub radius_first: f64,
    pub radius_second: f64,
    /// `None` when the second moments are unstable.
    pub moments: Option<MomentReport>,
    /// Monte Carlo variance of the first state and its 95% interval.
    pub mc: Option<(f64, f64, f64)>,
}

fn model_at(base: &NCSModel, block: &SweepConfig, value: f64) -> Result<NCSModel> {
    Ok(match block.parameter {
        SweepParameter::MeanInterval => base.with_intervals(base.intervals.with_mean(value)?),
        SweepParameter::Cv2 => base.with_intervals(RenewalDistribution::gamma_from_mean_cv2(
            base.intervals.mean(),
            value,
        )?),
        SweepParameter::Gain => {
            let [r, c] = block
                .entry
                .ok_or_else(|| NcsError::InvalidParameter("gain sweep needs `entry`".into()))?;
            if r >= base.m() || c >= base.n() {
                return Err(NcsError::Dimension(format!(
                    "gain entry [{r}, {c}] outside K ({}x{})",
                    base.m(),
                    base.n()
                )));
            }
            let mut k = base.reset.k.clone();
            k[(r, c)] = value;
            base.with_gain(k)
        }
    })
}

pub fn run(
    base: &NCSModel,
    block: &SweepConfig,
    spec: &QuadratureSpec,
    sim_cfg: Option<&SimConfig>,
) -> Result<Vec<Row>> {
    let grid = block.grid()?;
    let models = grid
        .iter()
        .map(|&v| model_at(base, block, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = grid
        .par_iter()
        .zip(models.par_iter())
        .map(|(&value, model)| match analyze(model, spec) {
            Ok(r) => Ok(Row {
                value,
                radius_first: r.stability.first_spectral_radius,
                radius_second: r.stability.second_spectral_radius,
                moments: Some(r),
                mc: None,
            }),
            Err(NcsError::Unstable {
                report: Some(s), ..
            }) => Ok(Row {
                value,
                radius_first: s.first_spectral_radius,
                radius_second: s.second_spectral_radius,
                moments: None,
                mc: None,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    if block.monte_carlo {
        let cfg = sim_cfg.cloned().unwrap_or_default();
        for (row, model) in rows.iter_mut().zip(&models) {
            match sim::estimate(model, &cfg) {
                Ok(s) => {
                    let (v, h) = (s.var_x[(0, 0)], s.ci95_var[(0, 0)]);
                    row.mc = Some((v, v - h, v + h));
                }
                Err(e) => warn!(
                    "monte carlo at {} = {}: {e}",
                    label(block.parameter),
                    row.value
                ),
            }
        }
    }
    Ok(rows)
}

fn label(p: SweepParameter) -> &'static str {
    match p {
        SweepParameter::MeanInterval => "mean_interval",
        SweepParameter::Cv2 => "cv2",
        SweepParameter::Gain => "gain",
    }
}

fn suffix(n: usize, i: usize, j: usize) -> String {
    if n < 10 {
        format!("{}{}", i + 1, j + 1)
    } else {
        format!("{}_{}", i + 1, j + 1)
    }
}

pub fn header(n: usize) -> Vec<String> {
    let mut h = vec!["sweep_value".to_owned()];
    h.extend((0..n).map(|i| format!("mean_x_{}", i + 1)));
    for part in ["total", "channel", "disturbance"] {
        for i in 0..n {
            for j in 0..n {
                h.push(format!("var_{part}_{}", suffix(n, i, j)));
            }
        }
    }
    h.extend(
        [
            "spectral_radius_1",
            "spectral_radius_2",
            "mc_var",
            "mc_ci_lo",
            "mc_ci_hi",
        ]
        .map(String::from),
    );
    h
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn to_csv(n: usize, rows: &[Row]) -> Result<String> {
    let io = |e: csv::Error| NcsError::InvalidParameter(format!("csv: {e}"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header(n)).map_err(io)?;
    for row in rows {
        let mut rec = vec![num(row.value)];
        match &row.moments {
            Some(r) => {
                rec.extend(r.mean_x.iter().map(|&v| num(v)));
                for m in [&r.covariance, &r.variance_channel, &r.variance_disturbance] {
                    for i in 0..n {
                        for j in 0..n {
                            rec.push(num(m[(i, j)]));
                        }
                    }
                }
            }
            None => rec.extend(std::iter::repeat_n(String::new(), n + 3 * n * n)),
        }
        rec.push(num(row.radius_first));
        rec.push(num(row.radius_second));
        match row.mc {
            Some((v, lo, hi)) => rec.extend([num(v), num(lo), num(hi)]),
            None => rec.extend(std::iter::repeat_n(String::new(), 3)),
        }
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| NcsError::InvalidParameter(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
