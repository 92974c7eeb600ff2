//! Spatial subgrouping of multicast users and the two-interval split.
//!
//! Users are compared through the normalized variance of their channel
//! inner product, `tr(R_a R_b) / (M^2 beta_a beta_b)`. Large values mean
//! nearly parallel channel subspaces and strong mutual interference, so
//! such users share a pilot and a precoder. Partitioning uses K-medoids
//! on `1 - S`, which needs no vector embedding of the matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{large_scale_coefficient, CMat, UserProfile};
use crate::error::{Error, Result};
use crate::pipeline::DropContext;
use crate::schedule::{evaluate_schedules, ScheduleEvaluation};

/// Independent K-medoids restarts per clustering call.
pub const CLUSTER_RESTARTS: usize = 10;
const MAX_SWEEPS: usize = 100;

/// `tr(R_a R_b) / (M^2 beta_a beta_b)`.
pub fn orthogonality_metric(r_a: &CMat, beta_a: f64, r_b: &CMat, beta_b: f64) -> Result<f64> {
    if r_a.shape() != r_b.shape() || !r_a.is_square() {
        return Err(Error::InvalidInput("correlation matrices must be square and equal-sized".into()));
    }
    if !(beta_a > 0.0 && beta_b > 0.0) {
        return Err(Error::InvalidInput("large-scale coefficients must be positive".into()));
    }
    let m = r_a.nrows() as f64;
    // tr(A B) = sum_ij A_ij conj(B_ij) for Hermitian B. Normalizing each
    // entry first keeps `beta I` inputs exact.
    let trace: f64 = r_a
        .iter()
        .zip(r_b.iter())
        .map(|(a, b)| ((a / beta_a) * (b / beta_b).conj()).re)
        .sum();
    Ok(trace / (m * m))
}

/// Metric with each `beta` taken from the matrix trace.
pub fn similarity(r_a: &CMat, r_b: &CMat) -> Result<f64> {
    orthogonality_metric(r_a, large_scale_coefficient(r_a), r_b, large_scale_coefficient(r_b))
}

/// Symmetric `K x K` table of pairwise orthogonality metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    k: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_profiles(users: &[UserProfile]) -> Result<Self> {
        let k = users.len();
        let mut values = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let s = orthogonality_metric(
                    &users[i].correlation,
                    users[i].beta,
                    &users[j].correlation,
                    users[j].beta,
                )?;
                values[i * k + j] = s;
                values[j * k + i] = s;
            }
        }
        Ok(Self { k, values })
    }

    /// Builds from a dense row-major table, which must be symmetric.
    pub fn from_values(k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * k {
            return Err(Error::InvalidInput(format!("expected {} similarity values", k * k)));
        }
        for i in 0..k {
            for j in 0..i {
                if values[i * k + j] != values[j * k + i] {
                    return Err(Error::InvalidInput("similarity matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self { k, values })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            1.0 - self.get(i, j)
        }
    }
}

/// Assigns every point to its closest medoid. Returns the total distance.
fn assign(s: &SimilarityMatrix, medoids: &[usize], labels: &mut [usize]) -> f64 {
    let mut cost = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        if let Some(own) = medoids.iter().position(|&m| m == i) {
            *label = own;
            continue;
        }
        let (best, d) = medoids
            .iter()
            .enumerate()
            .map(|(c, &m)| (c, s.distance(i, m)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        *label = best;
        cost += d;
    }
    cost
}

/// k-medoids++ seeding.
fn seed_medoids<R: Rng + ?Sized>(s: &SimilarityMatrix, g: usize, rng: &mut R) -> Vec<usize> {
    let k = s.len();
    let mut medoids = vec![rng.random_range(0..k)];
    let mut nearest: Vec<f64> = (0..k).map(|i| s.distance(i, medoids[0])).collect();
    while medoids.len() < g {
        let weights: Vec<f64> = (0..k)
            .map(|i| if medoids.contains(&i) { 0.0 } else { nearest[i].max(0.0).powi(2) })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..k).filter(|i| !medoids.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        medoids.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(s.distance(i, next));
        }
    }
    medoids
}

fn run_kmedoids<R: Rng + ?Sized>(s: &SimilarityMatrix, g: usize, rng: &mut R) -> (f64, Vec<usize>) {
    let k = s.len();
    let mut medoids = seed_medoids(s, g, rng);
    let mut labels = vec![0; k];
    let mut cost = assign(s, &medoids, &mut labels);
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for (c, medoid) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..k).filter(|&i| labels[i] == c).collect();
            let within = |cand: usize| members.iter().map(|&j| s.distance(cand, j)).sum::<f64>();
            let mut best = (*medoid, within(*medoid));
            for &cand in &members {
                let d = within(cand);
                if d < best.1 - 1e-15 {
                    best = (cand, d);
                }
            }
            if best.0 != *medoid {
                *medoid = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let next = assign(s, &medoids, &mut labels);
        if next >= cost - 1e-15 {
            cost = next;
            break;
        }
        cost = next;
    }
    (cost, labels)
}

/// Relabels groups in order of their smallest member index.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Partitions users into exactly `g` non-empty groups.
///
/// Runs [`CLUSTER_RESTARTS`] K-medoids restarts on `d = 1 - S` and keeps
/// the cheapest. Group labels are canonical: group 0 contains user 0 and
/// so on.
pub fn cluster_users<R: Rng + ?Sized>(s: &SimilarityMatrix, g: usize, rng: &mut R) -> Result<Vec<usize>> {
    let k = s.len();
    if g == 0 {
        return Err(Error::InvalidInput("need at least one group".into()));
    }
    if g > k {
        return Err(Error::InvalidInput(format!("cannot form {g} groups from {k} users")));
    }
    if g == 1 {
        return Ok(vec![0; k]);
    }
    if g == k {
        return Ok((0..k).collect());
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..CLUSTER_RESTARTS {
        let (cost, labels) = run_kmedoids(s, g, rng);
        if best.as_ref().is_none_or(|(c, _)| cost < *c - 1e-12) {
            best = Some((cost, labels));
        }
    }
    Ok(canonical_labels(&best.expect("at least one restart").1))
}

/// User indices of each group.
pub fn members(assignment: &[usize]) -> Vec<Vec<usize>> {
    let g = assignment.iter().max().map_or(0, |&x| x + 1);
    let mut out = vec![Vec::new(); g];
    for (user, &group) in assignment.iter().enumerate() {
        out[group].push(user);
    }
    out
}

/// Splits groups into two intervals by exact 1-D 2-means on `10 log10(beta)`.
///
/// Interval 0 holds the weaker groups. Among equal-cost thresholds the most
/// balanced one wins, so equal inputs split at the median.
pub fn schedule_split(betas: &[f64]) -> Result<Vec<usize>> {
    let n = betas.len();
    if n < 2 {
        return Err(Error::InvalidInput("a two-interval split needs at least two groups".into()));
    }
    if betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidInput("large-scale coefficients must be positive and finite".into()));
    }
    let db: Vec<f64> = betas.iter().map(|b| 10.0 * b.log10()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| db[i].total_cmp(&db[j]).then(i.cmp(&j)));
    let sorted: Vec<f64> = order.iter().map(|&i| db[i]).collect();

    let sse = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, usize::MAX, 0usize);
    for t in 1..n {
        let cost = sse(&sorted[..t]) + sse(&sorted[t..]);
        let imbalance = (2 * t).abs_diff(n);
        let tol = 1e-9 * (1.0 + best.0.abs().min(cost.abs()));
        let better = cost < best.0 - tol || ((cost - best.0).abs() <= tol && imbalance < best.1);
        if better {
            best = (cost, imbalance, t);
        }
    }
    let mut split = vec![1; n];
    for &i in &order[..best.2] {
        split[i] = 0;
    }
    Ok(split)
}

/// One candidate group count and the schedules it produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRow {
    pub groups: usize,
    pub assignment: Vec<usize>,
    pub evaluation: ScheduleEvaluation,
}

/// Exhaustive evaluation of candidate group counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupCountTable {
    pub rows: Vec<CandidateRow>,
}

impl GroupCountTable {
    /// Row with the largest value of `key`; ties go to the smaller group count.
    pub fn argmax_by(&self, key: impl Fn(&ScheduleEvaluation) -> f64) -> Option<&CandidateRow> {
        let mut rows: Vec<&CandidateRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.groups);
        rows.into_iter()
            .fold(None, |best: Option<&CandidateRow>, row| match best {
                Some(b) if key(&row.evaluation) <= key(&b.evaluation) => Some(b),
                _ => Some(row),
            })
    }
}

/// Runs the whole chain for every candidate group count and returns the
/// ASE-optimal count (best of one and two intervals) with the full table.
///
/// Candidates that cannot be precoded keep ASE zero for the affected
/// schedule instead of failing the search.
pub fn optimal_group_count(ctx: &DropContext, candidates: &[usize]) -> Result<(usize, GroupCountTable)> {
    let k = ctx.users().len();
    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for &g in candidates {
        if g == 0 || g > k {
            return Err(Error::InvalidInput(format!("group count {g} outside [1, {k}]")));
        }
        if !seen.insert(g) {
            continue;
        }
        let assignment = ctx.cluster(g)?;
        let evaluation = evaluate_schedules(ctx, &assignment)?;
        rows.push(CandidateRow { groups: g, assignment, evaluation });
    }
    let table = GroupCountTable { rows };
    let best = table
        .argmax_by(|e| e.ase_best())
        .map(|r| r.groups)
        .ok_or_else(|| Error::InvalidInput("no candidate group counts".into()))?;
    Ok((best, table))
}
