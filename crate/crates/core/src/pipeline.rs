//! Per-drop link chain: pilots, MMSE estimation, ZF precoding, SINR
//! coefficients and max-min power control for one set of co-scheduled
//! subgroups.

use serde::{Deserialize, Serialize};

use crate::channel::{CMat, CVec, ChannelFactor, UserProfile};
use crate::error::{Error, Result};
use crate::grouping::{cluster_users, SimilarityMatrix};
use crate::pilot::{despread, make_pilots, ul_pilot_observation, GroupEstimator};
use crate::power::{group_min_sinr, max_min_power, prelog, CoefficientAccumulator, PowerAllocation, SinrCoefficients};
use crate::precoding::zf_precoders;
use crate::rng::{self, domain};

/// How the fraction of resources given to interval 0 is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "theta")]
pub enum ThetaPolicy {
    /// Best of `theta in {0.1, ..., 0.9}`.
    Grid,
    Fixed(f64),
}

/// Downlink budget available to each interval of a two-interval schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetMode {
    /// The whole `P_DL` in every interval.
    Full,
    /// `P_DL / 2` per interval.
    Split,
}

/// Link-level constants shared by every evaluation in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub p_dl: f64,
    pub pilot_power: f64,
    /// Receiver noise power, watts.
    pub noise: f64,
    pub tau_c: usize,
    pub eps: f64,
    pub theta: ThetaPolicy,
    pub budget: BudgetMode,
}

/// Outcome of the chain for one set of co-scheduled groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalOutcome {
    pub groups: Vec<Vec<usize>>,
    pub coefficients: SinrCoefficients,
    pub allocation: PowerAllocation,
    /// Worst-user SINR of each group.
    pub min_sinr: Vec<f64>,
    /// `(1 - G/tau_c) sum_g K_g log2(1 + gamma_g)`, before any time sharing.
    pub ase: f64,
}

impl IntervalOutcome {
    pub fn tau_p(&self) -> usize {
        self.groups.len()
    }
}

/// One spatial drop: user statistics plus the channel realizations shared
/// by every grouping evaluated on it.
#[derive(Debug, Clone)]
pub struct DropContext {
    users: Vec<UserProfile>,
    channels: Vec<Vec<CVec>>,
    similarity: SimilarityMatrix,
    params: LinkParams,
    seed: u64,
    drop_index: u64,
}

impl DropContext {
    /// Draws `n_realizations` channel vectors for every user.
    pub fn new(
        users: Vec<UserProfile>,
        params: LinkParams,
        n_realizations: usize,
        seed: u64,
        drop_index: u64,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidInput("drop has no users".into()));
        }
        if n_realizations == 0 {
            return Err(Error::InvalidInput("need at least one channel realization".into()));
        }
        let m = users[0].correlation.nrows();
        if users.iter().any(|u| u.correlation.nrows() != m) {
            return Err(Error::InvalidInput("users disagree on antenna count".into()));
        }
        let factors = users
            .iter()
            .map(|u| ChannelFactor::new(&u.correlation))
            .collect::<Result<Vec<_>>>()?;
        let channels = (0..n_realizations as u64)
            .map(|r| {
                let mut rng = rng::stream(seed, &[domain::CHANNEL, drop_index, r]);
                factors.iter().map(|f| f.sample(&mut rng)).collect()
            })
            .collect();
        let similarity = SimilarityMatrix::from_profiles(&users)?;
        Ok(Self { users, channels, similarity, params, seed, drop_index })
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn antennas(&self) -> usize {
        self.users[0].correlation.nrows()
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn similarity(&self) -> &SimilarityMatrix {
        &self.similarity
    }

    pub fn realizations(&self) -> usize {
        self.channels.len()
    }

    /// Channel of every user in realization `r`.
    pub fn channels(&self, r: usize) -> &[CVec] {
        &self.channels[r]
    }

    /// K-medoids grouping into `g` subgroups, seeded per drop and group count.
    pub fn cluster(&self, g: usize) -> Result<Vec<usize>> {
        let mut rng = rng::stream(self.seed, &[domain::CLUSTERING, self.drop_index, g as u64]);
        cluster_users(&self.similarity, g, &mut rng)
    }

    /// Runs estimation, precoding, coefficient estimation and power control
    /// with `groups` sharing one time/frequency interval and budget `p_budget`.
    pub fn evaluate_interval(&self, groups: &[Vec<usize>], p_budget: f64) -> Result<IntervalOutcome> {
        let g = groups.len();
        let m = self.antennas();
        if g == 0 || groups.iter().any(|members| members.is_empty()) {
            return Err(Error::InvalidInput("every scheduled group needs members".into()));
        }
        if g > m {
            return Err(Error::RankDeficient { groups: g, antennas: m, condition: f64::INFINITY });
        }
        if g >= self.params.tau_c {
            return Err(Error::PilotOverhead { tau_p: g, tau_c: self.params.tau_c });
        }
        let q = self.params.pilot_power;
        let pilots = make_pilots(g)?;
        let estimators = groups
            .iter()
            .map(|members| {
                let stats: Vec<(f64, &CMat)> =
                    members.iter().map(|&u| (q, &self.users[u].correlation)).collect();
                GroupEstimator::new(&stats, g, self.params.noise)
            })
            .collect::<Result<Vec<_>>>()?;

        let scheduled: Vec<usize> = groups.iter().flatten().copied().collect();
        let local_assignment: Vec<usize> = groups
            .iter()
            .enumerate()
            .flat_map(|(gi, members)| std::iter::repeat_n(gi, members.len()))
            .collect();
        let powers = vec![q; scheduled.len()];
        let mut tags = vec![domain::PILOT_NOISE, self.drop_index];
        for members in groups {
            tags.push(u64::MAX);
            tags.extend(members.iter().map(|&u| u as u64));
        }
        let noise_stream = rng::stream_id(&tags);

        let mut acc = CoefficientAccumulator::new(groups);
        let mut c_hat = CMat::zeros(m, g);
        for r in 0..self.channels.len() {
            let channels = &self.channels[r];
            let local: Vec<CVec> = scheduled.iter().map(|&u| channels[u].clone()).collect();
            let mut rng = rng::stream(self.seed, &[noise_stream, r as u64]);
            let y = ul_pilot_observation(&local, &local_assignment, &pilots, &powers, self.params.noise, &mut rng)?;
            for (gi, est) in estimators.iter().enumerate() {
                let yg = despread(&y, &pilots.pilot(gi));
                c_hat.set_column(gi, &est.composite(&yg));
            }
            let precoders = zf_precoders(&c_hat)?;
            acc.add(channels, &precoders);
        }

        let coefficients = acc.finish(self.params.noise)?;
        let allocation = max_min_power(&coefficients, p_budget, self.params.eps)?;
        let min_sinr = group_min_sinr(&coefficients, &allocation.powers, None);
        let ase = prelog(g, self.params.tau_c)
            * groups
                .iter()
                .zip(&min_sinr)
                .map(|(members, gamma)| members.len() as f64 * (1.0 + gamma).log2())
                .sum::<f64>();
        Ok(IntervalOutcome { groups: groups.to_vec(), coefficients, allocation, min_sinr, ase })
    }
}

/// Profile for a user with a given correlation matrix and no geometry
/// model behind it; `beta` is taken from the trace.
pub fn synthetic_user(position: [f64; 2], correlation: CMat) -> UserProfile {
    let beta = crate::channel::large_scale_coefficient(&correlation);
    UserProfile {
        position,
        nominal_angle: crate::channel::nominal_angle(position),
        asd: 0.0,
        shadowing_db: 0.0,
        beta,
        correlation,
    }
}
