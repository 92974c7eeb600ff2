//! Monte Carlo orchestration over spatial drops.
//!
//! Each drop owns the RNG streams keyed by its index, so a drop's record
//! depends only on the master seed and the configuration. Drops run on a
//! rayon pool and are merged in index order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::channel::{correlation_matrix, nominal_angle, path_loss_db, sample_shadowing, ArrayGeometry, UserProfile};
use crate::config::{ScenarioConfig, Strategy};
use crate::error::{Error, Result};
use crate::grouping::{optimal_group_count, CandidateRow, GroupCountTable};
use crate::pipeline::DropContext;
use crate::rng::{self, domain};
use crate::schedule::{evaluate_schedules, ScheduleEvaluation};

/// Thermal noise power in watts for a PSD in dBm/Hz, a bandwidth in Hz
/// and a receiver noise figure in dB.
pub fn noise_power(psd_dbm_hz: f64, bandwidth_hz: f64, nf_db: f64) -> f64 {
    10f64.powf((psd_dbm_hz + 10.0 * bandwidth_hz.log10() + nf_db - 30.0) / 10.0)
}

fn uniform_in_disc<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let t = 2.0 * PI * rng.random::<f64>();
    [r * t.cos(), r * t.sin()]
}

/// Places clustered users in the cell and builds their statistics.
///
/// Cluster centers are uniform in the cell at least `min_distance_m` from
/// the base station; users are uniform within `cluster_radius_m` of their
/// center. All random draws happen before the antenna count is used, so
/// scenarios differing only in `M` see the same geometry and shadowing.
pub fn generate_drop<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Vec<UserProfile>> {
    let geom = ArrayGeometry::new(config.antennas, config.antenna_spacing)?;
    let mut positions = Vec::with_capacity(config.user_count());
    let mut cluster_of = Vec::with_capacity(config.user_count());
    for c in 0..config.n_clusters {
        let center = loop {
            let p = uniform_in_disc(config.cell_radius_m, rng);
            if p[0].hypot(p[1]) >= config.min_distance_m {
                break p;
            }
        };
        for _ in 0..config.users_per_cluster {
            let offset = uniform_in_disc(config.cluster_radius_m, rng);
            positions.push([center[0] + offset[0], center[1] + offset[1]]);
            cluster_of.push(c);
        }
    }
    let shadowing = sample_shadowing(
        &cluster_of,
        config.shadowing_var_db.sqrt(),
        config.shadowing_intra_corr,
        rng,
    )?;
    let asd = config.asd_deg.to_radians();
    positions
        .into_iter()
        .zip(shadowing)
        .map(|(position, shadowing_db)| {
            let d = position[0].hypot(position[1]);
            let beta_db = -path_loss_db(config.f_ghz, d)? + shadowing_db;
            let beta = 10f64.powf(beta_db / 10.0);
            let phi = nominal_angle(position);
            Ok(UserProfile {
                position,
                nominal_angle: phi,
                asd,
                shadowing_db,
                beta,
                correlation: correlation_matrix(phi, asd, beta, &geom, config.n_rays)?,
            })
        })
        .collect()
}

/// Outcome of one strategy on one drop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    /// Group count behind the one- and two-interval figures (they can differ
    /// for the optimal-G strategy).
    pub groups_one: usize,
    pub groups_two: usize,
    pub ase_one: f64,
    pub ase_two: f64,
    pub ase_best: f64,
    pub min_se_best: f64,
    pub one_feasible: bool,
    pub two_feasible: bool,
}

impl StrategyOutcome {
    fn infeasible(strategy: Strategy) -> Self {
        Self {
            strategy,
            groups_one: 0,
            groups_two: 0,
            ase_one: 0.0,
            ase_two: 0.0,
            ase_best: 0.0,
            min_se_best: 0.0,
            one_feasible: false,
            two_feasible: false,
        }
    }

    fn from_rows(strategy: Strategy, one: &CandidateRow, two: &CandidateRow) -> Self {
        let (ase_one, ase_two) = (one.evaluation.ase_one, two.evaluation.ase_two);
        let min_se_best = if ase_two > ase_one {
            two.evaluation.min_se_two
        } else {
            one.evaluation.min_se_one
        };
        Self {
            strategy,
            groups_one: one.groups,
            groups_two: two.groups,
            ase_one,
            ase_two,
            ase_best: ase_one.max(ase_two),
            min_se_best,
            one_feasible: one.evaluation.one_feasible,
            two_feasible: two.evaluation.two_feasible,
        }
    }
}

/// Everything recorded for one spatial drop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropRecord {
    pub drop: usize,
    pub outcomes: Vec<StrategyOutcome>,
    /// Evaluations per group count, for inspection.
    pub evaluations: BTreeMap<usize, ScheduleEvaluation>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Mean and sample standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Per-strategy aggregates over all drops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub n_drops: usize,
    pub ase_one: Stats,
    pub ase_two: Stats,
    pub ase_best: Stats,
    pub min_se_best: Stats,
    pub one_infeasible_rate: f64,
    pub two_infeasible_rate: f64,
    pub failed_drops: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub summaries: Vec<StrategySummary>,
    pub drops: Vec<DropRecord>,
}

impl ExperimentResult {
    pub fn summary(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }
}

fn evaluate_drop(config: &ScenarioConfig, strategies: &[Strategy], drop: usize) -> Result<DropRecord> {
    let seed = config.seed;
    let mut rng = rng::stream(seed, &[domain::DROP_GEOMETRY, drop as u64]);
    let users = generate_drop(config, &mut rng)?;
    let k = users.len();
    let ctx = DropContext::new(users, config.link_params(), config.n_realizations, seed, drop as u64)?;

    let mut rows: BTreeMap<usize, CandidateRow> = BTreeMap::new();
    let mut optimal: Option<GroupCountTable> = None;
    if strategies.contains(&Strategy::OptimalG) {
        let (_, table) = optimal_group_count(&ctx, &config.candidates())?;
        for row in &table.rows {
            rows.insert(row.groups, row.clone());
        }
        optimal = Some(table);
    }

    let mut outcomes = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let fixed = match strategy {
            Strategy::SingleGroup => Some(1),
            Strategy::PerCluster => Some(config.n_clusters),
            Strategy::Unicast => Some(k),
            Strategy::Fixed(g) => Some(g),
            Strategy::OptimalG => None,
        };
        let outcome = match fixed {
            Some(g) if g > k => StrategyOutcome::infeasible(strategy),
            Some(g) => {
                if !rows.contains_key(&g) {
                    let assignment = ctx.cluster(g)?;
                    let evaluation = evaluate_schedules(&ctx, &assignment)?;
                    rows.insert(g, CandidateRow { groups: g, assignment, evaluation });
                }
                let row = &rows[&g];
                StrategyOutcome::from_rows(strategy, row, row)
            }
            None => {
                let table = optimal.as_ref().expect("optimal table computed");
                let one = table.argmax_by(|e| e.ase_one).expect("non-empty candidates");
                let two = table.argmax_by(|e| e.ase_two).expect("non-empty candidates");
                StrategyOutcome::from_rows(strategy, one, two)
            }
        };
        outcomes.push(outcome);
    }
    Ok(DropRecord {
        drop,
        outcomes,
        evaluations: rows.into_iter().map(|(g, r)| (g, r.evaluation)).collect(),
        error: None,
    })
}

fn summarize(strategy: Strategy, drops: &[DropRecord]) -> StrategySummary {
    let outcomes: Vec<&StrategyOutcome> = drops
        .iter()
        .filter_map(|d| d.outcomes.iter().find(|o| o.strategy == strategy))
        .collect();
    let n = drops.len();
    let failed = drops.iter().filter(|d| d.error.is_some()).count();
    // Failed drops count as zero ASE and infeasible.
    let column = |f: &dyn Fn(&StrategyOutcome) -> f64| {
        let mut v: Vec<f64> = outcomes.iter().map(|o| f(o)).collect();
        v.extend(std::iter::repeat_n(0.0, n - outcomes.len()));
        Stats::of(&v)
    };
    let rate = |f: &dyn Fn(&StrategyOutcome) -> bool| {
        let bad = outcomes.iter().filter(|o| !f(o)).count() + (n - outcomes.len());
        if n == 0 { 0.0 } else { bad as f64 / n as f64 }
    };
    StrategySummary {
        strategy,
        n_drops: n,
        ase_one: column(&|o| o.ase_one),
        ase_two: column(&|o| o.ase_two),
        ase_best: column(&|o| o.ase_best),
        min_se_best: column(&|o| o.min_se_best),
        one_infeasible_rate: rate(&|o| o.one_feasible),
        two_infeasible_rate: rate(&|o| o.two_feasible),
        failed_drops: failed,
    }
}

/// Runs every drop of `config` for `strategies` on `workers` threads.
///
/// A drop that fails (for example no grouping can be precoded at all) is
/// recorded with its error and does not abort the experiment. The result
/// does not depend on `workers`.
pub fn run_experiment_with(config: &ScenarioConfig, strategies: &[Strategy], workers: usize) -> Result<ExperimentResult> {
    config.validate()?;
    if strategies.is_empty() {
        return Err(Error::Config("strategies: must not be empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    let mut drops: Vec<DropRecord> = pool.install(|| {
        (0..config.n_drops)
            .into_par_iter()
            .map(|d| {
                evaluate_drop(config, strategies, d).unwrap_or_else(|e| {
                    log::warn!("drop {d} failed: {e}");
                    DropRecord { drop: d, outcomes: Vec::new(), evaluations: BTreeMap::new(), error: Some(e.to_string()) }
                })
            })
            .collect()
    });
    drops.sort_by_key(|d| d.drop);
    let summaries = strategies.iter().map(|&s| summarize(s, &drops)).collect();
    Ok(ExperimentResult { config_hash: config.content_hash(), summaries, drops })
}

/// [`run_experiment_with`] using the configured strategies (all four by
/// default) on every available core.
pub fn run_experiment(config: &ScenarioConfig) -> Result<ExperimentResult> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    run_experiment_with(config, &config.strategies_or(&Strategy::ALL), workers)
}
