//! CSV and JSON writers.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that every value parses back to the same `f64`.

use std::path::Path;

use implicit_lqg::sim::AggregateReport;
use serde::Serialize;

use crate::CliError;

/// `1.2345678901234567e2`-style rendering.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn aggregate_csv(reports: &[AggregateReport]) -> String {
    write_rows(
        &[
            "policy",
            "runs",
            "mean_total_cost",
            "std_total_cost",
            "standard_error",
            "mean_final_z_norm",
            "final_sigma_trace",
        ],
        reports.iter().map(|r| {
            vec![
                r.policy.clone(),
                r.runs.to_string(),
                float(r.mean_total_cost),
                float(r.std_total_cost),
                float(r.standard_error()),
                float(r.mean_final_z_norm()),
                float(r.mean_sigma_traces.last().copied().unwrap_or(0.0)),
            ]
        }),
    )
}

/// Per-step means; the stage cost at `t = n` is the terminal cost.
fn stage_or_terminal(r: &AggregateReport, t: usize) -> f64 {
    r.mean_stage_costs.get(t).copied().unwrap_or(r.mean_terminal_cost)
}

pub fn series_csv(r: &AggregateReport) -> String {
    write_rows(
        &["t", "mean_z_norm", "sigma_trace", "mean_stage_cost"],
        (0..=r.horizon()).map(|t| {
            vec![
                t.to_string(),
                float(r.mean_z_norms[t]),
                float(r.mean_sigma_traces[t]),
                float(stage_or_terminal(r, t)),
            ]
        }),
    )
}

pub const PLOT_METRICS: [&str; 3] = ["z_norm", "sigma_trace", "stage_cost"];

/// Long-format series: one row per policy, step and metric.
pub fn emit_plot_series(reports: &[AggregateReport]) -> Result<String, CliError> {
    if let Some(first) = reports.first() {
        if let Some(r) = reports.iter().find(|r| r.horizon() != first.horizon()) {
            return Err(CliError::HorizonMismatch {
                expected: first.horizon(),
                policy: r.policy.clone(),
                found: r.horizon(),
            });
        }
    }
    let mut rows = Vec::new();
    for r in reports {
        for t in 0..=r.horizon() {
            let values = [r.mean_z_norms[t], r.mean_sigma_traces[t], stage_or_terminal(r, t)];
            for (metric, v) in PLOT_METRICS.iter().zip(values) {
                rows.push(vec![r.policy.clone(), t.to_string(), metric.to_string(), float(v)]);
            }
        }
    }
    Ok(write_rows(&["policy", "t", "metric", "value"], rows))
}

/// Details of how an implicit-communication schedule was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerInfo {
    pub method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exhausted: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_costate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub policy: String,
    pub runs: usize,
    pub mean_total_cost: f64,
    pub std_total_cost: f64,
    /// `Tr Sigma_n / Tr Sigma_0`.
    pub achieved_terminal_ratio: f64,
    pub wall_time_s: f64,
    /// Expected cost over the target prior; only reported for sampled targets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_expected_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerInfo>,
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("summary serializes") + "\n"
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
