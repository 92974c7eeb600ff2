use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mcast_core::config::{ScenarioConfig, Strategy};
use mcast_core::harness::ExperimentResult;
use mcast_core::report::{format_sig, write_csv, SummaryRow};
use serde::Serialize;

use crate::{Common, Failure};

/// One experiment of a command: a scenario, optionally at one sweep value.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub scenario: String,
    pub axis: String,
    pub value: String,
    pub config_hash: String,
    pub strategies: Vec<Strategy>,
    pub config: ScenarioConfig,
}

impl Cell {
    pub fn new(scenario: String, axis: &str, value: &str, config: ScenarioConfig, strategies: Vec<Strategy>) -> Self {
        Self {
            scenario,
            axis: axis.to_string(),
            value: value.to_string(),
            config_hash: config.content_hash(),
            strategies,
            config,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    /// Hash of the resolved base config.
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub overrides: Vec<String>,
    pub full_scale: bool,
    pub workers: usize,
    pub cells: Vec<Cell>,
    pub timestamp_unix: u64,
    pub version: &'static str,
}

impl Manifest {
    pub fn new(command: &str, common: &Common, base: &ScenarioConfig, cells: &[Cell], workers: usize) -> Self {
        Self {
            command: command.to_string(),
            config_path: common.config.clone(),
            output_dir: common.out.clone(),
            config_hash: base.content_hash(),
            config: base.clone(),
            overrides: common.overrides.clone(),
            full_scale: common.full_scale,
            workers,
            cells: cells.to_vec(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Serialize)]
struct CellResult {
    scenario: String,
    axis: String,
    value: String,
    config_hash: String,
    result: ExperimentResult,
}

#[derive(Debug, Serialize)]
struct Results<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    trend: Option<&'a str>,
    cells: &'a [CellResult],
}

/// Accumulates results and writes them next to the manifest.
pub struct Output {
    dir: PathBuf,
    command: String,
    rows: Vec<SummaryRow>,
    cells: Vec<CellResult>,
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

impl Output {
    /// Creates the output directory and writes the manifest.
    pub fn create(dir: &Path, manifest: &Manifest) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(manifest).map_err(|e| io_failure(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
        Ok(Self { dir: dir.to_path_buf(), command: manifest.command.clone(), rows: Vec::new(), cells: Vec::new() })
    }

    pub fn push(&mut self, cell: Cell, result: ExperimentResult) {
        self.rows
            .extend(SummaryRow::from_result(&cell.scenario, &cell.axis, &cell.value, &result));
        self.cells.push(CellResult {
            scenario: cell.scenario,
            axis: cell.axis,
            value: cell.value,
            config_hash: cell.config_hash,
            result,
        });
    }

    /// Direction of the first strategy's mean best-schedule ASE across cells.
    pub fn trend(&self) -> String {
        let means: Vec<f64> = self
            .cells
            .iter()
            .filter_map(|c| c.result.summaries.first().map(|s| s.ase_best.mean))
            .collect();
        let up = means.windows(2).all(|w| w[1] >= w[0]);
        let down = means.windows(2).all(|w| w[1] <= w[0]);
        match (up, down) {
            (true, true) => "constant",
            (true, false) => "non-decreasing",
            (false, true) => "non-increasing",
            (false, false) => "mixed",
        }
        .to_string()
    }

    pub fn finish(&self, trend: Option<&str>) -> Result<(), Failure> {
        let csv_path = self.dir.join("results.csv");
        let file = fs::File::create(&csv_path).map_err(|e| io_failure(&csv_path, e))?;
        write_csv(&self.rows, std::io::BufWriter::new(file)).map_err(|e| io_failure(&csv_path, e))?;

        let json_path = self.dir.join("results.json");
        let results = Results { command: &self.command, trend, cells: &self.cells };
        let text = serde_json::to_string_pretty(&results).map_err(|e| io_failure(&json_path, e))?;
        fs::write(&json_path, text + "\n").map_err(|e| io_failure(&json_path, e))?;
        Ok(())
    }

    /// Mean ± std of the ASE per scenario and strategy.
    pub fn print_table(&self) {
        println!(
            "{:<20} {:<8} {:<14} {:>22} {:>22} {:>22}",
            "scenario", "value", "strategy", "one-interval", "two-interval", "best"
        );
        let cell = |m: f64, s: f64| format!("{} ± {}", format_sig(m, 4), format_sig(s, 3));
        for row in &self.rows {
            let s = &row.summary;
            println!(
                "{:<20} {:<8} {:<14} {:>22} {:>22} {:>22}",
                row.scenario,
                row.value,
                s.strategy.to_string(),
                cell(s.ase_one.mean, s.ase_one.std),
                cell(s.ase_two.mean, s.ase_two.std),
                cell(s.ase_best.mean, s.ase_best.std),
            );
        }
        println!("results written to {}", self.dir.display());
    }
}
