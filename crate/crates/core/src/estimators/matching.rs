use super::{arm_counts, weighted_arm_regression, Estimate, Nuisance};
use crate::error::Result;

/// Outcome of 1-nearest-neighbour matching with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Matched row in the opposite arm, per row.
    pub matched: Vec<usize>,
    /// Unit weights; each arm sums to `n`.
    pub weights: Vec<f64>,
}

/// Matches every unit to its nearest opposite-arm unit on `score` (ties go
/// to the lowest row index) and builds weights `1 + K_i`, where `K_i`
/// counts how often row `i` serves as a match, rescaled so each arm totals
/// `n`.
pub fn match_weights(a: &[u8], score: &[f64]) -> MatchResult {
    let n = a.len();
    let mut arms: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for i in 0..n {
        arms[a[i] as usize].push(i);
    }
    for arm in &mut arms {
        arm.sort_by(|&i, &j| score[i].total_cmp(&score[j]).then(i.cmp(&j)));
    }
    let mut matched = vec![0; n];
    let mut uses = vec![0usize; n];
    for i in 0..n {
        let pool = &arms[1 - a[i] as usize];
        let x = score[i];
        let pos = pool.partition_point(|&j| score[j] < x);
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |j: usize| {
            let dist = (score[j] - x).abs();
            best = match best {
                Some((bd, bj)) if bd < dist || (bd == dist && bj < j) => Some((bd, bj)),
                _ => Some((dist, j)),
            };
        };
        if pos < pool.len() {
            consider(pool[pos]);
        }
        if pos > 0 {
            // lowest index among the tied block just below x
            let s = score[pool[pos - 1]];
            consider(pool[pool.partition_point(|&j| score[j] < s)]);
        }
        let (_, j) = best.expect("opposite arm is nonempty");
        matched[i] = j;
        uses[j] += 1;
    }
    let mut weights: Vec<f64> = uses.iter().map(|&k| 1.0 + k as f64).collect();
    for arm in &arms {
        let total: f64 = arm.iter().map(|&i| weights[i]).sum();
        let f = n as f64 / total;
        for &i in arm {
            weights[i] *= f;
        }
    }
    MatchResult { matched, weights }
}

pub(super) fn estimate(nu: &Nuisance) -> Result<Estimate> {
    let d = nu.d;
    arm_counts(d)?;
    let ps = nu.ps()?;
    let m = match_weights(&d.a, &ps.lp);
    let (ey1, ey0) = weighted_arm_regression(d, &m.weights)?;
    Ok(Estimate::from_means(ey1, ey0, d.outcome_kind).flagged(ps.converged))
}
