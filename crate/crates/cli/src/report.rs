use std::fmt::Write;

use ncs_core::design::DesignResult;
use ncs_core::sim::EnsembleStats;
use ncs_core::{Matrix, MomentReport, StabilityReport, Vector};
use serde::Serialize;
use serde_json::json;

fn nested(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn flat(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Serialize)]
struct MomentsJson {
    mean_x: Vec<f64>,
    mean_u: Vec<f64>,
    second_raw: Vec<Vec<f64>>,
    covariance: Vec<Vec<f64>>,
    variance_channel: Vec<Vec<f64>>,
    variance_disturbance: Vec<Vec<f64>>,
}

impl From<&MomentReport> for MomentsJson {
    fn from(r: &MomentReport) -> Self {
        MomentsJson {
            mean_x: flat(&r.mean_x),
            mean_u: flat(&r.mean_u),
            second_raw: nested(&r.second_raw),
            covariance: nested(&r.covariance),
            variance_channel: nested(&r.variance_channel),
            variance_disturbance: nested(&r.variance_disturbance),
        }
    }
}

fn matrix_lines(out: &mut String, label: &str, m: &Matrix) {
    for (i, row) in m.row_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>16.10e}")).collect();
        let head = if i == 0 { label } else { "" };
        let _ = writeln!(out, "  {head:<22}{}", cells.join(" "));
    }
}

fn vector_line(out: &mut String, label: &str, v: &Vector) {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:>16.10e}")).collect();
    let _ = writeln!(out, "  {label:<22}{}", cells.join(" "));
}

fn stability_text(out: &mut String, s: &StabilityReport) {
    let verdict = |stable: bool| if stable { "stable" } else { "UNSTABLE" };
    let _ = writeln!(out, "stability");
    let _ = writeln!(
        out,
        "  first moment          {} (spectral radius {:.10})",
        verdict(s.first_moment_stable),
        s.first_spectral_radius
    );
    let _ = writeln!(
        out,
        "  second moment         {} (spectral radius {:.10})",
        verdict(s.second_moment_stable),
        s.second_spectral_radius
    );
    if !s.expectation_exists {
        let _ = writeln!(out, "  interval expectation of the flow diverges");
    }
    if s.marginal {
        let _ = writeln!(
            out,
            "  warning: a spectral radius is within the margin of 1"
        );
    }
}

pub fn analysis(s: &StabilityReport, moments: Option<&MomentReport>, json: bool) -> String {
    if json {
        let value = json!({
            "stability": s,
            "moments": moments.map(MomentsJson::from),
        });
        return serde_json::to_string_pretty(&value).expect("report serialises");
    }
    let mut out = String::new();
    stability_text(&mut out, s);
    match moments {
        Some(r) => {
            let _ = writeln!(out, "steady-state moments");
            vector_line(&mut out, "mean x", &r.mean_x);
            vector_line(&mut out, "mean u", &r.mean_u);
            matrix_lines(&mut out, "covariance", &r.covariance);
            matrix_lines(&mut out, "  from channel noise", &r.variance_channel);
            matrix_lines(&mut out, "  from disturbance", &r.variance_disturbance);
        }
        None => {
            let _ = writeln!(
                out,
                "no steady-state moments: second moments are not stable"
            );
        }
    }
    out.trim_end().to_owned()
}

pub fn design(r: &DesignResult, json: bool) -> String {
    if json {
        let value = json!({
            "k": nested(&r.k),
            "achieved_mean": flat(&r.achieved_mean),
            "achieved_covariance": r.achieved_covariance.as_ref().map(nested),
            "stability": r.stability,
            "feasible": r.feasible,
            "iterations": r.iterations,
            "objective_value": r.objective_value,
            "diagnostics": r.diagnostics,
        });
        return serde_json::to_string_pretty(&value).expect("report serialises");
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "design {}",
        if r.feasible { "feasible" } else { "INFEASIBLE" }
    );
    matrix_lines(&mut out, "K", &r.k);
    vector_line(&mut out, "achieved mean x", &r.achieved_mean);
    if let Some(c) = &r.achieved_covariance {
        matrix_lines(&mut out, "covariance", c);
    }
    if let Some(v) = r.objective_value {
        let _ = writeln!(out, "  objective             {v:.10e}");
    }
    let _ = writeln!(out, "  iterations            {}", r.iterations);
    stability_text(&mut out, &r.stability);
    for d in &r.diagnostics {
        let _ = writeln!(out, "  note: {d}");
    }
    out.trim_end().to_owned()
}

#[derive(Serialize)]
struct Overlay {
    quantity: String,
    analytic: Option<f64>,
    monte_carlo: f64,
    ci95_lo: f64,
    ci95_hi: f64,
    inside: Option<bool>,
}

fn overlay(stats: &EnsembleStats, analytic: Option<&MomentReport>) -> Vec<Overlay> {
    let n = stats.mean_x.len();
    let mut rows = Vec::new();
    let mut push = |quantity: String, a: Option<f64>, mc: f64, half: f64| {
        let (lo, hi) = (mc - half, mc + half);
        rows.push(Overlay {
            quantity,
            analytic: a,
            monte_carlo: mc,
            ci95_lo: lo,
            ci95_hi: hi,
            inside: a.map(|a| a >= lo && a <= hi),
        });
    };
    for i in 0..n {
        push(
            format!("mean_x_{}", i + 1),
            analytic.map(|r| r.mean_x[i]),
            stats.mean_x[i],
            stats.ci95_mean[i],
        );
    }
    for i in 0..n {
        for j in i..n {
            push(
                format!("var_{}{}", i + 1, j + 1),
                analytic.map(|r| r.covariance[(i, j)]),
                stats.var_x[(i, j)],
                stats.ci95_var[(i, j)],
            );
        }
    }
    rows
}

pub fn simulation(stats: &EnsembleStats, analytic: Option<&MomentReport>, json: bool) -> String {
    let rows = overlay(stats, analytic);
    if json {
        let value = json!({
            "overlay": rows,
            "effective_samples": stats.effective_samples,
            "divergent": stats.divergent,
            "resets": stats.resets,
            "mean_interval": stats.mean_interval,
            "interval_se": stats.interval_se,
        });
        return serde_json::to_string_pretty(&value).expect("report serialises");
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "monte carlo: {} trajectories ({} diverged), {} resets, mean interval {:.6} ± {:.2e}",
        stats.effective_samples,
        stats.divergent,
        stats.resets,
        stats.mean_interval,
        stats.interval_se
    );
    if analytic.is_none() {
        let _ = writeln!(out, "no analytic overlay: second moments are not stable");
    }
    let _ = writeln!(
        out,
        "  {:<12}{:>18}{:>18}{:>32}  inside",
        "quantity", "analytic", "monte carlo", "95% interval"
    );
    for r in rows {
        let a = r.analytic.map_or("n/a".to_owned(), |v| format!("{v:.8e}"));
        let inside = match r.inside {
            Some(true) => "yes",
            Some(false) => "NO",
            None => "-",
        };
        let _ = writeln!(
            out,
            "  {:<12}{a:>18}{:>18.8e}   [{:.6e}, {:.6e}]  {inside}",
            r.quantity, r.monte_carlo, r.ci95_lo, r.ci95_hi
        );
    }
    out.trim_end().to_owned()
}
