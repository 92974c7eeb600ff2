//! Shared-pilot uplink training and MMSE channel estimation.
//!
//! All users of a subgroup transmit the same pilot, so the base station
//! only ever observes their pilot-power-weighted sum (the composite
//! channel). Pilots of different subgroups are mutually orthogonal and
//! `tau_p = G`.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

use crate::channel::{standard_complex_normal, CMat, CVec};
use crate::error::{Error, Result};

/// `tau_p x G` pilot matrix with `Psi^H Psi = tau_p I`.
#[derive(Debug, Clone)]
pub struct PilotBook {
    psi: CMat,
}

impl PilotBook {
    pub fn tau_p(&self) -> usize {
        self.psi.nrows()
    }

    pub fn groups(&self) -> usize {
        self.psi.ncols()
    }

    pub fn matrix(&self) -> &CMat {
        &self.psi
    }

    /// Pilot sequence of group `g`.
    pub fn pilot(&self, g: usize) -> CVec {
        self.psi.column(g).into_owned()
    }
}

/// Discrete-Fourier pilot family of length `G` for `G` groups.
pub fn make_pilots(groups: usize) -> Result<PilotBook> {
    if groups == 0 {
        return Err(Error::InvalidInput("need at least one pilot".into()));
    }
    let n = groups as f64;
    let psi = CMat::from_fn(groups, groups, |t, g| {
        Complex64::from_polar(1.0, -2.0 * PI * ((t * g) % groups) as f64 / n)
    });
    Ok(PilotBook { psi })
}

/// Received uplink pilot block `Y = sum_k sqrt(q_k) h_k psi_{g(k)}^T + N`.
///
/// `assignment[k]` is the group of user `k`; noise entries are `CN(0, sigma2)`.
pub fn ul_pilot_observation<R: Rng + ?Sized>(
    channels: &[CVec],
    assignment: &[usize],
    pilots: &PilotBook,
    pilot_power: &[f64],
    sigma2: f64,
    rng: &mut R,
) -> Result<CMat> {
    if channels.len() != assignment.len() || channels.len() != pilot_power.len() {
        return Err(Error::InvalidInput(
            "channels, assignment and pilot powers must have one entry per user".into(),
        ));
    }
    if channels.is_empty() {
        return Err(Error::InvalidInput("no users".into()));
    }
    let m = channels[0].len();
    let groups = pilots.groups();
    let mut summed = CMat::zeros(m, groups);
    for ((h, &g), &q) in channels.iter().zip(assignment).zip(pilot_power) {
        if g >= groups {
            return Err(Error::InvalidInput(format!("group {g} has no pilot")));
        }
        if h.len() != m {
            return Err(Error::InvalidInput("channel dimensions differ".into()));
        }
        let mut col = summed.column_mut(g);
        col.axpy(Complex64::new(q.sqrt(), 0.0), h, Complex64::new(1.0, 0.0));
    }
    let mut y = summed * pilots.matrix().transpose();
    if sigma2 > 0.0 {
        let scale = Complex64::new(sigma2.sqrt(), 0.0);
        let noise = standard_complex_normal(m * pilots.tau_p(), rng);
        for (y, n) in y.iter_mut().zip(noise.iter()) {
            *y += n * scale;
        }
    }
    Ok(y)
}

/// Correlates the pilot block with `conj(psi_g)`.
pub fn despread(y: &CMat, psi_g: &CVec) -> CVec {
    y * psi_g.map(|z| z.conj())
}

/// Per-group MMSE estimator.
///
/// Holds `T = tau_p sum_k q_k R_k` and a Cholesky factor of `T + sigma2 I`,
/// which only change with the large-scale statistics, so one instance serves
/// every coherence block of a drop.
#[derive(Debug, Clone)]
pub struct GroupEstimator {
    tau_p: usize,
    weighted: CMat,
    system: Cholesky<Complex64, nalgebra::Dyn>,
}

impl GroupEstimator {
    /// `members` lists `(q_k, R_k)` for every user sharing the pilot.
    pub fn new(members: &[(f64, &CMat)], tau_p: usize, sigma2: f64) -> Result<Self> {
        let Some(&(_, first)) = members.first() else {
            return Err(Error::InvalidInput("empty pilot group".into()));
        };
        if tau_p == 0 {
            return Err(Error::InvalidInput("tau_p must be positive".into()));
        }
        let m = first.nrows();
        let mut weighted = CMat::zeros(m, m);
        for &(q, r) in members {
            if r.nrows() != m || r.ncols() != m {
                return Err(Error::InvalidInput("correlation matrix dimensions differ".into()));
            }
            weighted += r * Complex64::new(tau_p as f64 * q, 0.0);
        }
        let mut system = weighted.clone();
        for i in 0..m {
            system[(i, i)] += Complex64::new(sigma2, 0.0);
        }
        let system = Cholesky::new(system).ok_or_else(|| {
            Error::Factorization("MMSE system matrix is not positive definite".into())
        })?;
        Ok(Self { tau_p, weighted, system })
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p
    }

    /// Composite estimate `T (T + sigma2 I)^{-1} y`.
    pub fn composite(&self, y: &CVec) -> CVec {
        &self.weighted * self.system.solve(y)
    }

    /// Estimate of one member's channel, `sqrt(q) R (T + sigma2 I)^{-1} y`.
    pub fn user(&self, q: f64, r: &CMat, y: &CVec) -> CVec {
        r * self.system.solve(y) * Complex64::new(q.sqrt(), 0.0)
    }
}

/// MMSE estimate of one user's channel from its group's despread observation.
pub fn mmse_user_estimate(
    q_user: f64,
    r_user: &CMat,
    group: &[(f64, &CMat)],
    y: &CVec,
    sigma2: f64,
    tau_p: usize,
) -> Result<CVec> {
    Ok(GroupEstimator::new(group, tau_p, sigma2)?.user(q_user, r_user, y))
}

/// MMSE estimate of a group's composite channel.
pub fn mmse_composite_estimate(
    group: &[(f64, &CMat)],
    y: &CVec,
    sigma2: f64,
    tau_p: usize,
) -> Result<CVec> {
    Ok(GroupEstimator::new(group, tau_p, sigma2)?.composite(y))
}
