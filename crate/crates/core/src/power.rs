//! Max-min fairness downlink power control.
//!
//! SINR coefficients are sample means over channel realizations. For a
//! fixed target `Gamma` the SINR constraints are linear in the group
//! powers, and the smallest power vector meeting them is the limit of a
//! monotone fixed-point iteration started at zero. Bisection over `Gamma`
//! on top of that feasibility test gives the max-min allocation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::CVec;
use crate::error::{Error, Result};
use crate::precoding::PrecoderSet;

pub const DEFAULT_EPS: f64 = 1e-4;
pub const FEASIBILITY_MAX_ITER: usize = 10_000;
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Expectation terms of the effective SINR, indexed `[g][k]` (and `[g][k][g']`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrCoefficients {
    /// `|E[h_gk^H w_g]|^2`
    pub a: Vec<Vec<f64>>,
    /// `E[|h_gk^H w_g'|^2]` off the diagonal, the gain variance for `g' = g`.
    pub b: Vec<Vec<Vec<f64>>>,
    /// Receiver noise power of each user, watts.
    pub noise: Vec<Vec<f64>>,
    pub n_samples: usize,
}

impl SinrCoefficients {
    pub fn groups(&self) -> usize {
        self.a.len()
    }

    fn validate(&self) -> Result<()> {
        let g = self.groups();
        if g == 0 {
            return Err(Error::InvalidInput("no groups".into()));
        }
        if self.b.len() != g || self.noise.len() != g {
            return Err(Error::InvalidInput("coefficient tables disagree on group count".into()));
        }
        for gi in 0..g {
            let k = self.a[gi].len();
            if k == 0 {
                return Err(Error::InvalidInput(format!("group {gi} is empty")));
            }
            if self.b[gi].len() != k || self.noise[gi].len() != k {
                return Err(Error::InvalidInput(format!("group {gi} has ragged coefficients")));
            }
            if self.b[gi].iter().any(|row| row.len() != g) {
                return Err(Error::InvalidInput(format!("group {gi} interference row has wrong length")));
            }
        }
        let finite = self.a.iter().flatten().all(|x| x.is_finite())
            && self.b.iter().flatten().flatten().all(|x| x.is_finite())
            && self.noise.iter().flatten().all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("SINR coefficients"));
        }
        Ok(())
    }
}

/// Running sums for the coefficient sample means. Accumulators over
/// disjoint realization sets merge exactly.
#[derive(Debug, Clone)]
pub struct CoefficientAccumulator {
    members: Vec<Vec<usize>>,
    gain_sum: Vec<Vec<Complex64>>,
    power_sum: Vec<Vec<Vec<f64>>>,
    count: usize,
}

impl CoefficientAccumulator {
    /// `members[g]` lists the user indices of group `g`.
    pub fn new(members: &[Vec<usize>]) -> Self {
        let g = members.len();
        Self {
            members: members.to_vec(),
            gain_sum: members.iter().map(|m| vec![Complex64::new(0.0, 0.0); m.len()]).collect(),
            power_sum: members.iter().map(|m| vec![vec![0.0; g]; m.len()]).collect(),
            count: 0,
        }
    }

    /// Adds one realization; `channels` is indexed by user.
    pub fn add(&mut self, channels: &[CVec], precoders: &PrecoderSet) {
        let groups = self.members.len();
        debug_assert_eq!(precoders.groups(), groups);
        let w = precoders.matrix();
        for (g, users) in self.members.iter().enumerate() {
            for (slot, &user) in users.iter().enumerate() {
                let h = &channels[user];
                for gp in 0..groups {
                    let z = h.dotc(&w.column(gp));
                    self.power_sum[g][slot][gp] += z.norm_sqr();
                    if gp == g {
                        self.gain_sum[g][slot] += z;
                    }
                }
            }
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.members, other.members, "accumulators over different groupings");
        for (a, b) in self.gain_sum.iter_mut().flatten().zip(other.gain_sum.iter().flatten()) {
            *a += b;
        }
        for (a, b) in self
            .power_sum
            .iter_mut()
            .flatten()
            .flatten()
            .zip(other.power_sum.iter().flatten().flatten())
        {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sample means with common noise power `noise` for every user.
    pub fn finish(&self, noise: f64) -> Result<SinrCoefficients> {
        if self.count == 0 {
            return Err(Error::InvalidInput("no channel realizations accumulated".into()));
        }
        let n = self.count as f64;
        let mut a = Vec::with_capacity(self.members.len());
        let mut b = Vec::with_capacity(self.members.len());
        for g in 0..self.members.len() {
            let mut ag = Vec::new();
            let mut bg = Vec::new();
            for slot in 0..self.members[g].len() {
                let mean_gain = self.gain_sum[g][slot] / n;
                let a_gk = mean_gain.norm_sqr();
                let mut row: Vec<f64> = self.power_sum[g][slot].iter().map(|s| s / n).collect();
                // Finite-sample variance can dip below zero.
                row[g] = (row[g] - a_gk).max(0.0);
                ag.push(a_gk);
                bg.push(row);
            }
            a.push(ag);
            b.push(bg);
        }
        let noise = self.members.iter().map(|m| vec![noise; m.len()]).collect();
        let coeffs = SinrCoefficients { a, b, noise, n_samples: self.count };
        coeffs.validate()?;
        Ok(coeffs)
    }
}

/// Estimates the coefficients from `(channels per user, precoders)` realizations.
pub fn estimate_coefficients(
    members: &[Vec<usize>],
    realizations: &[(Vec<CVec>, PrecoderSet)],
    noise: f64,
) -> Result<SinrCoefficients> {
    let mut acc = CoefficientAccumulator::new(members);
    for (channels, precoders) in realizations {
        acc.add(channels, precoders);
    }
    acc.finish(noise)
}

/// SINR of user `k` in group `g`, counting interference only from groups
/// with `active[g'] == true`. `active = None` means all groups interfere.
pub fn sinr(coeffs: &SinrCoefficients, powers: &[f64], g: usize, k: usize, active: Option<&[bool]>) -> f64 {
    let b = &coeffs.b[g][k];
    let interference: f64 = (0..coeffs.groups())
        .filter(|&gp| gp == g || active.is_none_or(|mask| mask[gp]))
        .map(|gp| powers[gp] * b[gp])
        .sum();
    powers[g] * coeffs.a[g][k] / (interference + coeffs.noise[g][k])
}

/// Worst-user SINR of each group.
pub fn group_min_sinr(coeffs: &SinrCoefficients, powers: &[f64], active: Option<&[bool]>) -> Vec<f64> {
    (0..coeffs.groups())
        .map(|g| {
            (0..coeffs.a[g].len())
                .map(|k| sinr(coeffs, powers, g, k, active))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Outcome of the linear feasibility test at a fixed SINR target.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Minimal power vector meeting every constraint.
    Feasible { powers: Vec<f64>, iterations: usize },
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// Is there `p >= 0`, `sum p <= p_dl` with `p_g a_gk >= gamma (sum_g' p_g' b_gkg' + noise_gk)`?
///
/// Iterates `p_g <- gamma max_k (sum_g' p_g' b_gkg' + noise_gk) / a_gk` from
/// zero. The iterates are non-decreasing, so the test stops as soon as the
/// sum leaves the budget.
pub fn feasibility_check(gamma: f64, coeffs: &SinrCoefficients, p_dl: f64) -> Result<Feasibility> {
    coeffs.validate()?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("SINR target must be non-negative, got {gamma}")));
    }
    let groups = coeffs.groups();
    if gamma == 0.0 {
        return Ok(Feasibility::Feasible { powers: vec![0.0; groups], iterations: 0 });
    }
    if coeffs.a.iter().flatten().any(|&a| a <= 0.0) {
        return Ok(Feasibility::Infeasible);
    }
    let budget = p_dl * (1.0 + 1e-12);
    let mut p = vec![0.0; groups];
    let mut next = vec![0.0; groups];
    for iter in 1..=FEASIBILITY_MAX_ITER {
        for (g, slot) in next.iter_mut().enumerate() {
            let mut need: f64 = 0.0;
            for k in 0..coeffs.a[g].len() {
                let interference: f64 = coeffs.b[g][k].iter().zip(&p).map(|(b, p)| b * p).sum();
                need = need.max((interference + coeffs.noise[g][k]) / coeffs.a[g][k]);
            }
            *slot = gamma * need;
        }
        if next.iter().sum::<f64>() > budget {
            return Ok(Feasibility::Infeasible);
        }
        let scale = next.iter().fold(0.0f64, |m, &x| m.max(x));
        let delta = next.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut p, &mut next);
        if delta <= FEASIBILITY_TOL * scale {
            return Ok(Feasibility::Feasible { powers: p, iterations: iter });
        }
    }
    Ok(Feasibility::Infeasible)
}

/// Result of the max-min power control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
    /// Smallest user SINR achieved by `powers`.
    pub gamma_star: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Bisection on the common SINR target over `[0, min_gk p_dl a_gk / noise_gk]`.
///
/// The last feasible minimal power vector is scaled up to spend the whole
/// budget, which can only raise every SINR.
pub fn max_min_power(coeffs: &SinrCoefficients, p_dl: f64, eps: f64) -> Result<PowerAllocation> {
    coeffs.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("bisection tolerance must be positive, got {eps}")));
    }
    if !(p_dl > 0.0 && p_dl.is_finite()) {
        return Err(Error::InvalidInput(format!("power budget must be positive, got {p_dl}")));
    }
    let groups = coeffs.groups();
    if coeffs.a.iter().flatten().all(|&a| a <= 0.0) {
        return Ok(PowerAllocation {
            powers: vec![0.0; groups],
            gamma_star: 0.0,
            converged: false,
            iterations: 0,
        });
    }

    let mut lo = 0.0;
    let mut hi = coeffs
        .a
        .iter()
        .flatten()
        .zip(coeffs.noise.iter().flatten())
        .map(|(a, n)| p_dl * a / n)
        .fold(f64::INFINITY, f64::min);
    let mut best = vec![0.0; groups];
    let mut iterations = 0;
    loop {
        let gamma = 0.5 * (lo + hi);
        iterations += 1;
        match feasibility_check(gamma, coeffs, p_dl)? {
            Feasibility::Feasible { powers, .. } => {
                lo = gamma;
                best = powers;
            }
            Feasibility::Infeasible => hi = gamma,
        }
        if hi - lo <= eps {
            break;
        }
    }

    let used: f64 = best.iter().sum();
    if used > 0.0 {
        let c = p_dl / used;
        best.iter_mut().for_each(|p| *p *= c);
    } else {
        best = vec![p_dl / groups as f64; groups];
    }
    let mut gamma_star = min_sinr(coeffs, &best);
    if let Some(balanced) = balance(coeffs, &best, p_dl) {
        let g = min_sinr(coeffs, &balanced);
        if g >= gamma_star {
            best = balanced;
            gamma_star = g;
        }
    }
    Ok(PowerAllocation {
        powers: best,
        gamma_star,
        converged: true,
        iterations,
    })
}

fn min_sinr(coeffs: &SinrCoefficients, powers: &[f64]) -> f64 {
    group_min_sinr(coeffs, powers, None).into_iter().fold(f64::INFINITY, f64::min)
}

/// Normalized fixed point `p <- p_dl I(p) / sum I(p)` with
/// `I_g(p) = max_k (sum_g' p_g' b_gkg' + noise_gk) / a_gk`. Its limit spends
/// the full budget with every group at the same worst-user SINR.
fn balance(coeffs: &SinrCoefficients, start: &[f64], p_dl: f64) -> Option<Vec<f64>> {
    if coeffs.a.iter().flatten().any(|&a| a <= 0.0) {
        return None;
    }
    let mut p = start.to_vec();
    for _ in 0..FEASIBILITY_MAX_ITER {
        let need: Vec<f64> = (0..coeffs.groups())
            .map(|g| {
                (0..coeffs.a[g].len())
                    .map(|k| {
                        let i: f64 = coeffs.b[g][k].iter().zip(&p).map(|(b, p)| b * p).sum();
                        (i + coeffs.noise[g][k]) / coeffs.a[g][k]
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let total: f64 = need.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let next: Vec<f64> = need.iter().map(|n| p_dl * n / total).collect();
        let delta = next.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        p = next;
        if delta <= 1e-13 * p_dl {
            return Some(p);
        }
    }
    None
}

/// Spectral efficiency with the pilot overhead removed, bits/s/Hz.
pub fn se_from_sinr(gamma: f64, tau_p: usize, tau_c: usize) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("SINR must be non-negative, got {gamma}")));
    }
    if tau_p == 0 || tau_p >= tau_c {
        return Err(Error::InvalidInput(format!(
            "need 0 < tau_p < tau_c, got tau_p = {tau_p}, tau_c = {tau_c}"
        )));
    }
    Ok(prelog(tau_p, tau_c) * (1.0 + gamma).log2())
}

/// `1 - tau_p / tau_c`
pub fn prelog(tau_p: usize, tau_c: usize) -> f64 {
    1.0 - tau_p as f64 / tau_c as f64
}

/// A multicast group is served at the rate of its weakest member.
pub fn group_se(per_user: &[f64]) -> Result<f64> {
    per_user
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidInput("group has no users".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CMat;
    use crate::precoding::zf_precoders;
    use approx::assert_abs_diff_eq;

    /// Single-user groups without interference.
    fn diagonal(a: &[f64], noise: f64) -> SinrCoefficients {
        let g = a.len();
        SinrCoefficients {
            a: a.iter().map(|&x| vec![x]).collect(),
            b: (0..g).map(|_| vec![vec![0.0; g]]).collect(),
            noise: vec![vec![noise]; g],
            n_samples: 1,
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn deterministic_channel_has_no_gain_variance() {
        let h = CVec::from_vec(vec![c(1.0, 0.5), c(-0.3, 2.0), c(0.0, 1.0)]);
        let w = zf_precoders(&CMat::from_columns(&[h.clone()])).unwrap();
        let coeffs = estimate_coefficients(&[vec![0]], &[(vec![h.clone()], w)], 1.0).unwrap();
        assert_eq!(coeffs.b[0][0][0], 0.0);
        assert_abs_diff_eq!(coeffs.a[0][0], h.norm_squared(), epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_perfect_csi_has_no_cross_interference() {
        let h0 = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let h1 = CVec::from_vec(vec![c(0.0, 0.0), c(0.0, 2.0), c(1.0, 0.0)]);
        let w = zf_precoders(&CMat::from_columns(&[h0.clone(), h1.clone()])).unwrap();
        let coeffs =
            estimate_coefficients(&[vec![0], vec![1]], &[(vec![h0, h1], w)], 1.0).unwrap();
        assert!(coeffs.b[0][0][1] < 1e-24);
        assert!(coeffs.b[1][0][0] < 1e-24);
    }

    #[test]
    fn two_realization_toy_sample_means() {
        // Fixed precoders w0 = e0, w1 = e1; h^H w picks conj(h_i).
        let w = zf_precoders(&CMat::identity(2, 2)).unwrap();
        let r1 = vec![CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)])];
        let r2 = vec![CVec::from_vec(vec![c(3.0, 0.0), c(2.0, 0.0)])];
        let coeffs = estimate_coefficients(
            &[vec![0], vec![]],
            &[(r1, w.clone()), (r2, w)],
            0.5,
        );
        // The empty second group is rejected.
        assert!(coeffs.is_err());

        let w = zf_precoders(&CMat::identity(2, 2)).unwrap();
        let h_a = |x: Complex64, y: Complex64| CVec::from_vec(vec![x, y]);
        let reals = vec![
            (vec![h_a(c(1.0, 0.0), c(0.0, 1.0)), h_a(c(0.0, 0.0), c(1.0, 0.0))], w.clone()),
            (vec![h_a(c(3.0, 0.0), c(2.0, 0.0)), h_a(c(0.0, 1.0), c(1.0, 1.0))], w),
        ];
        let coeffs = estimate_coefficients(&[vec![0], vec![1]], &reals, 0.5).unwrap();
        // user 0: z_own = conj(1), conj(3) -> mean 2 -> a = 4; E|z|^2 = (1 + 9)/2 = 5 -> b_self = 1
        assert_abs_diff_eq!(coeffs.a[0][0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs.b[0][0][0], 1.0, epsilon = 1e-12);
        // cross: |conj(j)|^2 = 1, |2|^2 = 4 -> 2.5
        assert_abs_diff_eq!(coeffs.b[0][0][1], 2.5, epsilon = 1e-12);
        // user 1: z_own = conj(1), conj(1+j) -> mean (2 - j)/2 -> a = 1.25
        assert_abs_diff_eq!(coeffs.a[1][0], 1.25, epsilon = 1e-12);
        // E|z|^2 = (1 + 2)/2 = 1.5 -> b_self = 0.25
        assert_abs_diff_eq!(coeffs.b[1][0][1], 0.25, epsilon = 1e-12);
        // cross: |0|^2, |conj(j)|^2 -> 0.5
        assert_abs_diff_eq!(coeffs.b[1][0][0], 0.5, epsilon = 1e-12);
        assert_eq!(coeffs.noise[1][0], 0.5);
        assert_eq!(coeffs.n_samples, 2);
    }

    #[test]
    fn accumulators_merge_exactly() {
        let w = zf_precoders(&CMat::identity(2, 2)).unwrap();
        let h = |x: f64, y: f64| vec![CVec::from_vec(vec![c(x, y), c(y, x)]), CVec::from_vec(vec![c(y, 0.0), c(x, 1.0)])];
        let members = [vec![0], vec![1]];
        let mut whole = CoefficientAccumulator::new(&members);
        let mut left = CoefficientAccumulator::new(&members);
        let mut right = CoefficientAccumulator::new(&members);
        for (i, (x, y)) in [(1.0, 2.0), (0.5, -1.0), (3.0, 0.1)].into_iter().enumerate() {
            whole.add(&h(x, y), &w);
            if i < 1 { left.add(&h(x, y), &w) } else { right.add(&h(x, y), &w) }
        }
        left.merge(&right);
        assert_eq!(left.finish(1.0).unwrap(), whole.finish(1.0).unwrap());
    }

    #[test]
    fn zero_target_is_trivially_feasible() {
        let coeffs = diagonal(&[2.0, 1.0], 1.0);
        assert_eq!(
            feasibility_check(0.0, &coeffs, 3.0).unwrap(),
            Feasibility::Feasible { powers: vec![0.0, 0.0], iterations: 0 }
        );
    }

    #[test]
    fn interference_free_boundary() {
        let coeffs = diagonal(&[2.0, 1.0], 1.0);
        match feasibility_check(2.0, &coeffs, 3.0).unwrap() {
            Feasibility::Feasible { powers, .. } => {
                assert_abs_diff_eq!(powers[0], 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(powers[1], 2.0, epsilon = 1e-12);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
        assert_eq!(feasibility_check(2.1, &coeffs, 3.0).unwrap(), Feasibility::Infeasible);
    }

    #[test]
    fn zero_gain_is_infeasible_for_positive_target() {
        let coeffs = diagonal(&[2.0, 0.0], 1.0);
        assert_eq!(feasibility_check(0.1, &coeffs, 3.0).unwrap(), Feasibility::Infeasible);
        assert!(feasibility_check(-1.0, &coeffs, 3.0).is_err());
    }

    #[test]
    fn bisection_reproduces_interference_free_optimum() {
        let coeffs = diagonal(&[2.0, 1.0], 1.0);
        let alloc = max_min_power(&coeffs, 3.0, 1e-6).unwrap();
        assert!((alloc.gamma_star - 2.0).abs() <= 1e-6);
        assert_abs_diff_eq!(alloc.powers[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(alloc.powers[1], 2.0, epsilon = 1e-6);
        assert!(alloc.converged);
    }

    #[test]
    fn single_group_uses_full_power() {
        let coeffs = SinrCoefficients {
            a: vec![vec![1.5]],
            b: vec![vec![vec![0.2]]],
            noise: vec![vec![0.3]],
            n_samples: 10,
        };
        let alloc = max_min_power(&coeffs, 2.0, 1e-4).unwrap();
        let expected = 2.0 * 1.5 / (2.0 * 0.2 + 0.3);
        assert!((alloc.gamma_star - expected).abs() <= 1e-4);
        assert_abs_diff_eq!(alloc.powers[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn all_zero_gains_return_zero_allocation() {
        let coeffs = diagonal(&[0.0, 0.0], 1.0);
        let alloc = max_min_power(&coeffs, 2.0, 1e-4).unwrap();
        assert_eq!(alloc.powers, vec![0.0, 0.0]);
        assert_eq!(alloc.gamma_star, 0.0);
        assert!(!alloc.converged);
    }

    #[test]
    fn spectral_efficiency_examples() {
        assert_eq!(se_from_sinr(0.0, 1, 200).unwrap(), 0.0);
        assert_abs_diff_eq!(se_from_sinr(1.0, 1, 200).unwrap(), 0.995, epsilon = 1e-15);
        assert_abs_diff_eq!(se_from_sinr(3.0, 2, 200).unwrap(), 1.98, epsilon = 1e-15);
        assert!(se_from_sinr(1.0, 200, 200).is_err());
        assert!(se_from_sinr(-1.0, 1, 200).is_err());
        // More pilots always cost prelog.
        for g in 1..199 {
            assert!(prelog(g + 1, 200) < prelog(g, 200));
        }
    }

    #[test]
    fn group_rate_is_the_minimum() {
        assert_eq!(group_se(&[1.0]).unwrap(), 1.0);
        assert_eq!(group_se(&[2.0, 0.5, 1.1]).unwrap(), 0.5);
        assert_eq!(group_se(&[0.7, 0.7, 0.7]).unwrap(), 0.7);
        assert!(group_se(&[]).is_err());
    }
}
