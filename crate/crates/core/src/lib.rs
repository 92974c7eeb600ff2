//! Link-level Monte Carlo simulator for multicast massive MIMO downlink.
//!
//! The chain per spatial drop: correlated Rayleigh channels from a local
//! scattering model, shared-pilot MMSE estimation of each subgroup's
//! composite channel, zero-forcing precoding, max-min fair power control
//! by bisection, and a comparison of serving all subgroups in one
//! time/frequency interval against splitting them into two.

pub mod channel;
pub mod config;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod pilot;
pub mod pipeline;
pub mod power;
pub mod precoding;
pub mod report;
pub mod rng;
pub mod schedule;

pub use channel::{ArrayGeometry, CMat, CVec, UserProfile};
pub use config::{ScenarioConfig, Strategy};
pub use error::{Error, Result};
pub use grouping::{cluster_users, optimal_group_count, schedule_split, SimilarityMatrix};
pub use harness::{run_experiment, ExperimentResult};
pub use pipeline::{BudgetMode, DropContext, LinkParams, ThetaPolicy};
pub use power::{max_min_power, PowerAllocation, SinrCoefficients};
pub use precoding::{zf_precoders, PrecoderSet};
pub use schedule::{evaluate_schedules, Schedule, ScheduleEvaluation};
