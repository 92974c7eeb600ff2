//! CSV and JSON output.
//!
//! Every CSV written by the tools shares one header, [`CSV_HEADER`]. Numbers
//! are plain decimals rounded to six significant digits and never depend on
//! the locale.

use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::harness::{ExperimentResult, StrategySummary};

pub const CSV_HEADER: [&str; 15] = [
    "scenario",
    "axis",
    "value",
    "strategy",
    "n_drops",
    "ase_one_mean",
    "ase_one_std",
    "ase_two_mean",
    "ase_two_std",
    "ase_best_mean",
    "ase_best_std",
    "min_se_mean",
    "one_infeasible_rate",
    "two_infeasible_rate",
    "failed_drops",
];

/// Plain decimal with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = if decimals == 0 {
        let unit = 10f64.powi(exp + 1 - digits as i32);
        format!("{:.0}", (x / unit).round() * unit)
    } else {
        format!("{x:.decimals$}")
    };
    // "-0" and "-0.000" come from tiny negatives
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

/// One line of the summary table.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub axis: String,
    pub value: String,
    pub summary: StrategySummary,
}

impl SummaryRow {
    pub fn from_result(scenario: &str, axis: &str, value: &str, result: &ExperimentResult) -> Vec<Self> {
        result
            .summaries
            .iter()
            .map(|s| Self {
                scenario: scenario.to_string(),
                axis: axis.to_string(),
                value: value.to_string(),
                summary: s.clone(),
            })
            .collect()
    }

    fn fields(&self) -> Vec<String> {
        let s = &self.summary;
        let f = |x: f64| format_sig(x, 6);
        vec![
            self.scenario.clone(),
            self.axis.clone(),
            self.value.clone(),
            s.strategy.to_string(),
            s.n_drops.to_string(),
            f(s.ase_one.mean),
            f(s.ase_one.std),
            f(s.ase_two.mean),
            f(s.ase_two.std),
            f(s.ase_best.mean),
            f(s.ase_best.std),
            f(s.min_se_best.mean),
            f(s.one_infeasible_rate),
            f(s.two_infeasible_rate),
            s.failed_drops.to_string(),
        ]
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv output: {e}"))
}

pub fn write_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.fields()).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("csv output: {e}")))
}

pub fn csv_string(rows: &[SummaryRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(format!("json output: {e}")))
}
