//! Scenario configuration: a flat TOML document, strictly parsed.
//!
//! ```toml
//! M = 64
//! n_clusters = 2
//! users_per_cluster = 10
//! seed = 7
//!
//! # optional, used by `compare-configs`
//! [[compare.scenarios]]
//! name = "2x10"
//!
//! [[compare.scenarios]]
//! name = "20 uncorrelated"
//! n_clusters = 20
//! users_per_cluster = 1
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pipeline::{BudgetMode, LinkParams, ThetaPolicy};

/// Group counts tried by the optimal-G search when none are configured,
/// clipped to `[1, K]`; `n_clusters` and `K` are always added.
pub const AUTO_G_CANDIDATES: [usize; 19] = [1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 24, 32, 40, 48, 64, 80, 96, 128];

/// Monte Carlo sizes selected by `--full-scale`.
pub const FULL_SCALE_DROPS: usize = 50;
pub const FULL_SCALE_REALIZATIONS: usize = 50;

/// How the number of spatial subgroups is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    /// One multicast group for everybody.
    SingleGroup,
    /// As many groups as geographic clusters.
    PerCluster,
    /// One group per user.
    Unicast,
    /// ASE-maximizing group count among the candidates.
    OptimalG,
    /// A fixed group count.
    Fixed(usize),
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::SingleGroup, Strategy::PerCluster, Strategy::Unicast, Strategy::OptimalG];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::SingleGroup => f.write_str("single-group"),
            Strategy::PerCluster => f.write_str("per-cluster"),
            Strategy::Unicast => f.write_str("unicast"),
            Strategy::OptimalG => f.write_str("optimal-g"),
            Strategy::Fixed(g) => write!(f, "fixed-{g}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-group" => Ok(Strategy::SingleGroup),
            "per-cluster" => Ok(Strategy::PerCluster),
            "unicast" => Ok(Strategy::Unicast),
            "optimal-g" => Ok(Strategy::OptimalG),
            other => other
                .strip_prefix("fixed-")
                .and_then(|g| g.parse().ok())
                .filter(|&g| g > 0)
                .map(Strategy::Fixed)
                .ok_or_else(|| Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaMode {
    Grid,
    Fixed,
}

/// Every knob of an experiment. Field names are the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    #[serde(rename = "M")]
    pub antennas: usize,
    /// Optional; must equal `n_clusters * users_per_cluster` when given.
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub users: Option<usize>,
    pub n_clusters: usize,
    pub users_per_cluster: usize,
    pub antenna_spacing: f64,
    pub cell_radius_m: f64,
    pub cluster_radius_m: f64,
    pub min_distance_m: f64,
    pub asd_deg: f64,
    pub n_rays: usize,
    pub f_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    #[serde(rename = "P_DL_w")]
    pub p_dl_w: f64,
    pub pilot_power_w: f64,
    pub tau_c: usize,
    /// Shadowing variance in dB^2.
    pub shadowing_var_db: f64,
    pub shadowing_intra_corr: f64,
    pub n_drops: usize,
    pub n_realizations: usize,
    /// Empty selects [`AUTO_G_CANDIDATES`].
    #[serde(rename = "G_candidates")]
    pub g_candidates: Vec<usize>,
    pub theta_policy: ThetaMode,
    pub theta: f64,
    pub budget_mode: BudgetMode,
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<Strategy>>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            antennas: 64,
            users: None,
            n_clusters: 2,
            users_per_cluster: 10,
            antenna_spacing: 0.5,
            cell_radius_m: 200.0,
            cluster_radius_m: 2.0,
            min_distance_m: 10.0,
            asd_deg: 10.0,
            n_rays: crate::channel::DEFAULT_RAYS,
            f_ghz: 2.0,
            bandwidth_hz: 2e7,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 7.0,
            p_dl_w: 2.0,
            pilot_power_w: 1.0,
            tau_c: 200,
            shadowing_var_db: 10.0,
            shadowing_intra_corr: 0.99,
            n_drops: 10,
            n_realizations: 10,
            g_candidates: Vec::new(),
            theta_policy: ThetaMode::Grid,
            theta: 0.5,
            budget_mode: BudgetMode::Full,
            eps: crate::power::DEFAULT_EPS,
            strategies: None,
            seed: 1,
        }
    }
}

fn field_error(field: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ScenarioConfig {
    pub fn user_count(&self) -> usize {
        self.n_clusters * self.users_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("antenna_spacing", self.antenna_spacing),
            ("cell_radius_m", self.cell_radius_m),
            ("f_ghz", self.f_ghz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("P_DL_w", self.p_dl_w),
            ("pilot_power_w", self.pilot_power_w),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(field_error(name, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("cluster_radius_m", self.cluster_radius_m),
            ("min_distance_m", self.min_distance_m),
            ("asd_deg", self.asd_deg),
            ("shadowing_var_db", self.shadowing_var_db),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(field_error(name, format!("must be non-negative, got {v}")));
            }
        }
        if !self.noise_psd_dbm_hz.is_finite() || !self.noise_figure_db.is_finite() {
            return Err(field_error("noise_psd_dbm_hz", "noise parameters must be finite"));
        }
        let counts = [
            ("M", self.antennas),
            ("n_clusters", self.n_clusters),
            ("users_per_cluster", self.users_per_cluster),
            ("n_rays", self.n_rays),
            ("n_drops", self.n_drops),
            ("n_realizations", self.n_realizations),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(field_error(name, "must be at least 1"));
            }
        }
        if self.tau_c < 2 {
            return Err(field_error("tau_c", "must be at least 2"));
        }
        if let Some(k) = self.users {
            if k != self.user_count() {
                return Err(field_error(
                    "K",
                    format!("{k} != n_clusters * users_per_cluster = {}", self.user_count()),
                ));
            }
        }
        if self.min_distance_m >= self.cell_radius_m {
            return Err(field_error("min_distance_m", "must be smaller than cell_radius_m"));
        }
        if !(0.0..=1.0).contains(&self.shadowing_intra_corr) {
            return Err(field_error("shadowing_intra_corr", "must lie in [0, 1]"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(field_error("theta", "must lie in (0, 1)"));
        }
        if let Some(&bad) = self.g_candidates.iter().find(|&&g| g == 0) {
            return Err(field_error("G_candidates", format!("group count {bad} is not positive")));
        }
        if let Some(strategies) = &self.strategies {
            if strategies.is_empty() {
                return Err(field_error("strategies", "must not be empty"));
            }
        }
        Ok(())
    }

    /// Candidate group counts for the optimal-G search, ascending.
    pub fn candidates(&self) -> Vec<usize> {
        let k = self.user_count();
        let mut c: Vec<usize> = if self.g_candidates.is_empty() {
            let mut auto: Vec<usize> = AUTO_G_CANDIDATES.iter().copied().filter(|&g| g <= k).collect();
            auto.push(self.n_clusters.min(k));
            auto.push(k);
            auto
        } else {
            self.g_candidates.iter().copied().filter(|&g| g <= k).collect()
        };
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn strategies_or(&self, default: &[Strategy]) -> Vec<Strategy> {
        self.strategies.clone().unwrap_or_else(|| default.to_vec())
    }

    /// Receiver noise power, watts.
    pub fn noise_w(&self) -> f64 {
        crate::harness::noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz, self.noise_figure_db)
    }

    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            p_dl: self.p_dl_w,
            pilot_power: self.pilot_power_w,
            noise: self.noise_w(),
            tau_c: self.tau_c,
            eps: self.eps,
            theta: match self.theta_policy {
                ThetaMode::Grid => ThetaPolicy::Grid,
                ThetaMode::Fixed => ThetaPolicy::Fixed(self.theta),
            },
            budget: self.budget_mode,
        }
    }

    pub fn full_scale(&mut self) {
        self.n_drops = FULL_SCALE_DROPS;
        self.n_realizations = FULL_SCALE_REALIZATIONS;
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Strictly deserializes a table of config keys and validates it.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One named scenario of a comparison run: overrides on top of the base keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOverride {
    pub name: String,
    pub keys: toml::Table,
}

/// Parsed config document before the scenario keys are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDocument {
    pub base: toml::Table,
    pub scenarios: Vec<ScenarioOverride>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let mut base: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut scenarios = Vec::new();
        if let Some(compare) = base.remove("compare") {
            let toml::Value::Table(mut compare) = compare else {
                return Err(Error::Config("compare: must be a table".into()));
            };
            let list = compare.remove("scenarios").unwrap_or(toml::Value::Array(Vec::new()));
            if let Some(key) = compare.keys().next() {
                return Err(Error::Config(format!("compare: unknown key `{key}`")));
            }
            let toml::Value::Array(list) = list else {
                return Err(Error::Config("compare.scenarios: must be an array of tables".into()));
            };
            for (i, entry) in list.into_iter().enumerate() {
                let toml::Value::Table(mut keys) = entry else {
                    return Err(Error::Config(format!("compare.scenarios[{i}]: must be a table")));
                };
                let name = match keys.remove("name") {
                    Some(toml::Value::String(s)) => s,
                    Some(_) => return Err(Error::Config(format!("compare.scenarios[{i}].name: must be a string"))),
                    None => format!("scenario-{i}"),
                };
                scenarios.push(ScenarioOverride { name, keys });
            }
        }
        Ok(Self { base, scenarios })
    }

    /// Applies a `KEY=VALUE` override to the base keys. The value is read as
    /// a TOML literal, falling back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override `{assignment}` has an empty key")));
        }
        let value = parse_value(value.trim());
        self.base.insert(key.to_string(), value);
        Ok(())
    }

    /// The base scenario.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        ScenarioConfig::from_table(self.base.clone())
    }

    /// Every comparison scenario with its overrides merged over the base.
    pub fn resolve_scenarios(&self) -> Result<Vec<(String, ScenarioConfig)>> {
        self.scenarios
            .iter()
            .map(|s| {
                let mut table = self.base.clone();
                table.extend(s.keys.clone());
                ScenarioConfig::from_table(table)
                    .map(|c| (s.name.clone(), c))
                    .map_err(|e| Error::Config(format!("scenario `{}`: {e}", s.name)))
            })
            .collect()
    }
}

pub fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
