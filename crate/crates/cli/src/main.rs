//! `mcast-sim`: runs, sweeps and compares multicast massive MIMO scenarios
//! described by a TOML config file.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcast_core::config::{ConfigDocument, ScenarioConfig, Strategy};
use mcast_core::harness::run_experiment_with;

use output::{Cell, Manifest, Output};

#[derive(Parser, Debug)]
#[command(name = "mcast-sim", version, about = "Multicast massive MIMO link-level Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario with every configured strategy.
    Run(Common),
    /// Re-run a scenario for each value of one numeric parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary.
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values, e.g. `16,32,64`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Run every `[[compare.scenarios]]` entry with every strategy.
    CompareConfigs(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for drop-level parallelism (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override a config key, `KEY=VALUE`; repeatable and applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Large Monte Carlo run (50 drops x 50 realizations).
    #[arg(long)]
    full_scale: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    #[value(name = "M")]
    M,
    #[value(name = "K")]
    K,
    #[value(name = "n_clusters")]
    NClusters,
    #[value(name = "G")]
    G,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::M => "M",
            Axis::K => "K",
            Axis::NClusters => "n_clusters",
            Axis::G => "G",
        }
    }
}

/// Failure classes, mapped to exit codes 2 and 3.
#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<mcast_core::Error> for Failure {
    fn from(e: mcast_core::Error) -> Self {
        match e {
            mcast_core::Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("config error: {msg}"),
                Failure::Runtime(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(common) => run(&common),
        Command::Sweep { common, axis, values } => sweep(&common, axis, &values),
        Command::CompareConfigs(common) => compare(&common),
    }
}

/// Reads the config file and applies `--seed` and `--set`, which take
/// precedence over scenario-level keys.
fn load(common: &Common) -> Result<ConfigDocument, Failure> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let mut doc = ConfigDocument::parse(&text)?;
    let mut assignments = common.overrides.clone();
    if let Some(seed) = common.seed {
        assignments.push(format!("seed={seed}"));
    }
    for a in &assignments {
        doc.set(a)?;
        let (key, value) = a.split_once('=').expect("validated by set");
        for s in &mut doc.scenarios {
            s.keys.insert(key.trim().to_string(), mcast_core::config::parse_value(value.trim()));
        }
    }
    Ok(doc)
}

fn finalize(mut cfg: ScenarioConfig, common: &Common) -> ScenarioConfig {
    if common.full_scale {
        cfg.full_scale();
    }
    cfg
}

fn workers(common: &Common) -> Result<usize, Failure> {
    match common.workers {
        Some(0) => Err(Failure::Config("--workers must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn execute(common: &Common, command: &str, base: &ScenarioConfig, cells: Vec<Cell>) -> Result<Output, Failure> {
    let workers = workers(common)?;
    let manifest = Manifest::new(command, common, base, &cells, workers);
    let mut out = Output::create(&common.out, &manifest)?;
    for cell in cells {
        log::info!("{} {}={}: {} drops", cell.scenario, cell.axis, cell.value, cell.config.n_drops);
        let result = run_experiment_with(&cell.config, &cell.strategies, workers)?;
        out.push(cell, result);
    }
    Ok(out)
}

fn run(common: &Common) -> Result<(), Failure> {
    let cfg = finalize(load(common)?.resolve()?, common);
    let strategies = cfg.strategies_or(&Strategy::ALL);
    let cell = Cell::new(stem(&common.config), "none", "", cfg.clone(), strategies);
    let out = execute(common, "run", &cfg, vec![cell])?;
    out.finish(None)?;
    out.print_table();
    Ok(())
}

fn apply_axis(cfg: &mut ScenarioConfig, axis: Axis, value: usize) -> Result<Option<Strategy>, Failure> {
    match axis {
        Axis::M => cfg.antennas = value,
        Axis::NClusters => {
            cfg.n_clusters = value;
            cfg.users = None;
        }
        Axis::K => {
            // Uncorrelated layouts grow the cluster count, clustered ones the cluster size.
            if cfg.users_per_cluster == 1 {
                cfg.n_clusters = value;
            } else if value % cfg.n_clusters == 0 {
                cfg.users_per_cluster = value / cfg.n_clusters;
            } else {
                return Err(Failure::Config(format!(
                    "K={value} is not a multiple of n_clusters={}",
                    cfg.n_clusters
                )));
            }
            cfg.users = None;
        }
        Axis::G => {
            if value == 0 {
                return Err(Failure::Config("G values must be positive".into()));
            }
            return Ok(Some(Strategy::Fixed(value)));
        }
    }
    cfg.validate()?;
    Ok(None)
}

fn sweep(common: &Common, axis: Axis, values: &[String]) -> Result<(), Failure> {
    let values: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Config("--values: at least one value is required".into()));
    }
    let base = finalize(load(common)?.resolve()?, common);
    let scenario = stem(&common.config);
    let mut cells = Vec::with_capacity(values.len());
    for raw in values {
        let value: usize = raw
            .parse()
            .map_err(|_| Failure::Config(format!("--values: `{raw}` is not a non-negative integer")))?;
        let mut cfg = base.clone();
        let strategies = match apply_axis(&mut cfg, axis, value)? {
            Some(fixed) => vec![fixed],
            None => cfg.strategies_or(&[Strategy::OptimalG]),
        };
        cells.push(Cell::new(scenario.clone(), axis.name(), raw, cfg, strategies));
    }
    let out = execute(common, "sweep", &base, cells)?;
    let trend = out.trend();
    out.finish(Some(&trend))?;
    out.print_table();
    println!("ase_best trend over {}: {}", axis.name(), trend);
    Ok(())
}

fn compare(common: &Common) -> Result<(), Failure> {
    let doc = load(common)?;
    let base = finalize(doc.resolve()?, common);
    let mut scenarios = doc.resolve_scenarios()?;
    if scenarios.is_empty() {
        scenarios.push((stem(&common.config), base.clone()));
    }
    let cells = scenarios
        .into_iter()
        .map(|(name, cfg)| {
            let cfg = finalize(cfg, common);
            let strategies = cfg.strategies_or(&Strategy::ALL);
            Cell::new(name, "scenario", "", cfg, strategies)
        })
        .collect();
    let out = execute(common, "compare-configs", &base, cells)?;
    out.finish(None)?;
    out.print_table();
    Ok(())
}
