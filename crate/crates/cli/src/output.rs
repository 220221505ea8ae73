//! Result files: `results.csv`, `results.json` and per-metric curve files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rfan_core::metrics::{MetricsReport, Summary};
use rfan_core::StepTrace;

/// Per-seed acquisition history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed: u64,
    pub realized_switch_step: usize,
    pub steps: Vec<StepTrace>,
}

/// One design evaluated at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub design: String,
    pub sweep_value: Option<usize>,
    pub report: MetricsReport,
    pub traces: Vec<SeedTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub sweep_over: Option<String>,
    pub subgroups: Vec<String>,
    pub rows: Vec<DesignRow>,
}

pub const CSV_HEADER: [&str; 12] = [
    "design",
    "sweep_value",
    "policy_value",
    "policy_value_sem",
    "wc_policy_value",
    "wc_policy_value_sem",
    "success_rate",
    "policy_error_pct",
    "sqrt_pehe",
    "sqrt_pehe_sem",
    "ptmb",
    "ptf",
];

/// Six significant digits, ties to even, in the style of C's `%g`.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let body = if !(-4..6).contains(&exp) {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        trim_zeros(&mut m);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else if exp >= 0 {
        let split = exp as usize + 1;
        let mut m = format!("{}.{}", &digits[..split], &digits[split..]);
        trim_zeros(&mut m);
        m
    } else {
        let mut m = format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits);
        trim_zeros(&mut m);
        m
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

fn trim_zeros(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

fn sem_cell(s: &Summary) -> String {
    s.sem.map(fmt_sig).unwrap_or_default()
}

fn sweep_cell(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_results_csv(path: &Path, rows: &[DesignRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let a = &row.report.aggregate;
        w.write_record([
            row.design.clone(),
            sweep_cell(row.sweep_value),
            fmt_sig(a.policy_value.mean),
            sem_cell(&a.policy_value),
            fmt_sig(a.worst_case_policy_value.mean),
            sem_cell(&a.worst_case_policy_value),
            fmt_sig(a.success_rate.mean),
            fmt_sig(a.policy_error_rate.mean),
            fmt_sig(a.sqrt_pehe.mean),
            sem_cell(&a.sqrt_pehe),
            fmt_sig(row.report.ptmb),
            fmt_sig(row.report.ptf),
        ])?;
    }
    w.flush()
}

pub fn write_results_json(path: &Path, results: &ResultsFile) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(results).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

type MetricFn = fn(&MetricsReport) -> (f64, Option<f64>);

pub const CURVE_METRICS: [(&str, MetricFn); 7] = [
    ("policy_value", |r| (r.aggregate.policy_value.mean, r.aggregate.policy_value.sem)),
    ("wc_policy_value", |r| {
        (r.aggregate.worst_case_policy_value.mean, r.aggregate.worst_case_policy_value.sem)
    }),
    ("success_rate", |r| (r.aggregate.success_rate.mean, r.aggregate.success_rate.sem)),
    ("policy_error_pct", |r| (r.aggregate.policy_error_rate.mean, r.aggregate.policy_error_rate.sem)),
    ("sqrt_pehe", |r| (r.aggregate.sqrt_pehe.mean, r.aggregate.sqrt_pehe.sem)),
    ("ptmb", |r| (r.ptmb, None)),
    ("ptf", |r| (r.ptf, None)),
];

/// Writes `curve_<metric>.csv` files with one row per (design, sweep value).
pub fn write_curves(dir: &Path, sweep_name: &str, rows: &[DesignRow]) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, metric) in CURVE_METRICS {
        let path = dir.join(format!("curve_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["design", sweep_name, "mean", "sem"])?;
        for row in rows {
            let (mean, sem) = metric(&row.report);
            w.write_record([
                row.design.clone(),
                sweep_cell(row.sweep_value),
                fmt_sig(mean),
                sem.map(fmt_sig).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
