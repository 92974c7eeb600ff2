//! One-interval versus two-interval time/frequency scheduling of subgroups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{members, schedule_split};
use crate::pipeline::{BudgetMode, DropContext, IntervalOutcome, ThetaPolicy};
use crate::power::prelog;

/// Resource fractions tried by [`ThetaPolicy::Grid`].
pub const THETA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    One,
    Two,
}

/// `(1 - tau_p/tau_c) sum_g theta_g K_g log2(1 + gamma_g)`.
pub fn aggregated_se(
    group_sizes: &[usize],
    fractions: &[f64],
    min_sinr: &[f64],
    tau_p: usize,
    tau_c: usize,
) -> Result<f64> {
    if group_sizes.len() != fractions.len() || group_sizes.len() != min_sinr.len() {
        return Err(Error::InvalidInput("per-group inputs differ in length".into()));
    }
    if tau_p == 0 || tau_p >= tau_c {
        return Err(Error::PilotOverhead { tau_p, tau_c });
    }
    if fractions.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidInput("resource fractions must lie in (0, 1]".into()));
    }
    if min_sinr.iter().any(|&g| !(g >= 0.0)) {
        return Err(Error::InvalidInput("SINR must be non-negative".into()));
    }
    let sum: f64 = group_sizes
        .iter()
        .zip(fractions)
        .zip(min_sinr)
        .map(|((&k, &t), &g)| t * k as f64 * (1.0 + g).log2())
        .sum();
    Ok(prelog(tau_p, tau_c) * sum)
}

/// Summary of one interval's chain, kept in the per-drop records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub groups: Vec<Vec<usize>>,
    pub powers: Vec<f64>,
    pub min_sinr: Vec<f64>,
    pub ase: f64,
}

impl From<&IntervalOutcome> for IntervalSummary {
    fn from(o: &IntervalOutcome) -> Self {
        Self {
            groups: o.groups.clone(),
            powers: o.allocation.powers.clone(),
            min_sinr: o.min_sinr.clone(),
            ase: o.ase,
        }
    }
}

/// Both schedules for one grouping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleEvaluation {
    pub groups: usize,
    pub ase_one: f64,
    pub one_feasible: bool,
    pub ase_two: f64,
    /// True when at least one interval of the split could be served.
    pub two_feasible: bool,
    /// Fraction of resources given to interval 0 (the weaker groups).
    pub theta_used: f64,
    /// Interval of every group under the two-interval split; empty for `G = 1`.
    pub interval_of: Vec<usize>,
    pub chosen: Schedule,
    /// Effective SE of each group under the chosen schedule.
    pub per_group_se: Vec<f64>,
    pub min_se_one: f64,
    pub min_se_two: f64,
    pub one: Option<IntervalSummary>,
    pub two: [Option<IntervalSummary>; 2],
}

impl ScheduleEvaluation {
    pub fn ase_best(&self) -> f64 {
        self.ase_one.max(self.ase_two)
    }

    pub fn min_se_best(&self) -> f64 {
        match self.chosen {
            Schedule::One => self.min_se_one,
            Schedule::Two => self.min_se_two,
        }
    }
}

fn infeasible_as_none(res: Result<IntervalOutcome>) -> Result<Option<IntervalOutcome>> {
    match res {
        Ok(o) => Ok(Some(o)),
        Err(e) if e.is_infeasible() => Ok(None),
        Err(e) => Err(e),
    }
}

fn choose_theta(policy: ThetaPolicy, ase0: f64, ase1: f64) -> Result<f64> {
    match policy {
        ThetaPolicy::Fixed(t) if t > 0.0 && t < 1.0 => Ok(t),
        ThetaPolicy::Fixed(t) => Err(Error::InvalidInput(format!("theta must lie in (0, 1), got {t}"))),
        ThetaPolicy::Grid => Ok(THETA_GRID
            .iter()
            .copied()
            .map(|t| (t, t * ase0 + (1.0 - t) * ase1))
            .fold((0.5f64, f64::NEG_INFINITY), |best, (t, v)| {
                let closer = (t - 0.5).abs() < (best.0 - 0.5).abs();
                if v > best.1 || (v == best.1 && closer) {
                    (t, v)
                } else {
                    best
                }
            })
            .0),
    }
}

/// Serves `assignment`'s groups in one interval and, for `G >= 2`, split
/// into two intervals by large-scale fading.
///
/// In the split, each interval trains its own pilots (`tau_p` equal to its
/// group count), builds its own precoders and runs power control
/// independently, so interference only comes from co-scheduled groups.
pub fn evaluate_schedules(ctx: &DropContext, assignment: &[usize]) -> Result<ScheduleEvaluation> {
    if assignment.len() != ctx.users().len() {
        return Err(Error::InvalidInput("assignment must cover every user".into()));
    }
    let groups = members(assignment);
    if groups.iter().any(|m| m.is_empty()) {
        return Err(Error::InvalidInput("group labels must be contiguous".into()));
    }
    let g = groups.len();
    let params = *ctx.params();
    let tau_c = params.tau_c;

    let one = infeasible_as_none(ctx.evaluate_interval(&groups, params.p_dl))?;
    let ase_one = one.as_ref().map_or(0.0, |o| o.ase);
    let min_se_one = one.as_ref().map_or(0.0, |o| {
        let worst = o.min_sinr.iter().copied().fold(f64::INFINITY, f64::min);
        prelog(g, tau_c) * (1.0 + worst).log2()
    });

    let mut eval = ScheduleEvaluation {
        groups: g,
        ase_one,
        one_feasible: one.is_some(),
        ase_two: 0.0,
        two_feasible: false,
        theta_used: 1.0,
        interval_of: Vec::new(),
        chosen: Schedule::One,
        per_group_se: vec![0.0; g],
        min_se_one,
        min_se_two: 0.0,
        one: one.as_ref().map(IntervalSummary::from),
        two: [None, None],
    };

    if g >= 2 {
        let worst_beta: Vec<f64> = groups
            .iter()
            .map(|m| m.iter().map(|&u| ctx.users()[u].beta).fold(f64::INFINITY, f64::min))
            .collect();
        let interval_of = schedule_split(&worst_beta)?;
        let budget = match params.budget {
            BudgetMode::Full => params.p_dl,
            BudgetMode::Split => 0.5 * params.p_dl,
        };
        let mut parts: [Option<IntervalOutcome>; 2] = [None, None];
        for (slot, part) in parts.iter_mut().enumerate() {
            let subset: Vec<Vec<usize>> = groups
                .iter()
                .zip(&interval_of)
                .filter(|(_, &i)| i == slot)
                .map(|(m, _)| m.clone())
                .collect();
            *part = infeasible_as_none(ctx.evaluate_interval(&subset, budget))?;
        }
        let ase_part = |i: usize| parts[i].as_ref().map_or(0.0, |o| o.ase);
        let theta = choose_theta(params.theta, ase_part(0), ase_part(1))?;
        let fraction = [theta, 1.0 - theta];
        eval.ase_two = fraction[0] * ase_part(0) + fraction[1] * ase_part(1);
        eval.two_feasible = parts.iter().any(Option::is_some);
        eval.theta_used = theta;

        let mut se_two = vec![0.0; g];
        let mut min_se_two = f64::INFINITY;
        for (slot, part) in parts.iter().enumerate() {
            let ids: Vec<usize> = (0..g).filter(|&gi| interval_of[gi] == slot).collect();
            for (pos, &gi) in ids.iter().enumerate() {
                let se = part.as_ref().map_or(0.0, |o| {
                    fraction[slot] * prelog(ids.len(), tau_c) * (1.0 + o.min_sinr[pos]).log2()
                });
                se_two[gi] = se;
                min_se_two = min_se_two.min(se);
            }
        }
        eval.min_se_two = min_se_two;
        eval.interval_of = interval_of;
        eval.two = [parts[0].as_ref().map(IntervalSummary::from), parts[1].as_ref().map(IntervalSummary::from)];
        if eval.ase_two > eval.ase_one {
            eval.chosen = Schedule::Two;
            eval.per_group_se = se_two;
        }
    }

    if eval.chosen == Schedule::One {
        if let Some(o) = &one {
            eval.per_group_se = o
                .min_sinr
                .iter()
                .map(|gamma| prelog(g, tau_c) * (1.0 + gamma).log2())
                .collect();
        }
    }
    Ok(eval)
}
