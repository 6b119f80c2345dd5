//! Feasible starting points for the partition model.
//!
//! The start is the weighted 1-D k-medoids partition of the sorted atoms
//! (exact, by dynamic programming over contiguous groups). A local search
//! then restores the VaR confidence window and drives `|E|` below a target,
//! preferring moves that keep the problem-space distortion
//! `Σ γ̄_i |F̄_i − F̄_rep(i)|` small.

use super::aggregate::AggregatedObjectives;
use crate::risk::RiskParams;

const MAX_SWEEPS: usize = 500;
/// Slack on the window, matching [`evaluate_choice`](super::partition::evaluate_choice).
const WINDOW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    violation: f64,
    abs_e: f64,
    distortion: f64,
}

impl Score {
    /// Lexicographic on (violation, |E| clipped at the target, distortion).
    fn better_than(&self, other: &Score, target: f64) -> bool {
        const TOL: f64 = 1e-12;
        if (self.violation - other.violation).abs() > TOL {
            return self.violation < other.violation;
        }
        let (a, b) = (self.abs_e.max(target), other.abs_e.max(target));
        if (a - b).abs() > TOL {
            return a < b;
        }
        self.distortion < other.distortion - TOL
    }
}

struct Ctx<'a> {
    f: &'a [f64],
    g: &'a [f64],
    risk: RiskParams,
    /// Σ_i γ̄_i (F̄_i + λ'[F̄_i − v_ξ]+) + λ v_ξ, the part of E that does not
    /// depend on the choice.
    base: f64,
}

impl<'a> Ctx<'a> {
    fn new(agg: &'a AggregatedObjectives, risk: RiskParams, v_xi: f64) -> Self {
        let lp = risk.tail_weight();
        let base = agg
            .values
            .iter()
            .zip(&agg.probabilities)
            .map(|(f, g)| g * (f + lp * (f - v_xi).max(0.0)))
            .sum::<f64>()
            + risk.lambda * v_xi;
        Self { f: &agg.values, g: &agg.probabilities, risk, base }
    }

    /// Best VaR representative for a given assignment and the resulting score.
    fn score(&self, assign: &[usize], mass: &[f64]) -> (Score, usize) {
        let m = self.f.len();
        let lp = self.risk.tail_weight();
        let alpha = self.risk.alpha;
        let reps: Vec<usize> = (0..m).filter(|&j| assign[j] == j).collect();
        let distortion: f64 = (0..m).map(|i| self.g[i] * (self.f[i] - self.f[assign[i]]).abs()).sum();
        // Σ_i γ̄_i F̄_rep(i) = Σ_j W_j F̄_j
        let rep_mean: f64 = reps.iter().map(|&j| mass[j] * self.f[j]).sum();
        let mut best: Option<(Score, usize)> = None;
        let mut before = 0.0;
        for (pos, &var) in reps.iter().enumerate() {
            let v_zeta = self.f[var];
            let mut violation = (before - alpha - WINDOW_TOL).max(0.0);
            let mut tail = 0.0;
            for &j in &reps[pos..] {
                violation += (alpha - before - mass[j] - WINDOW_TOL).max(0.0);
                tail += mass[j] * (self.f[j] - v_zeta);
            }
            let e = self.base - rep_mean - lp * tail - self.risk.lambda * v_zeta;
            let s = Score { violation, abs_e: e.abs(), distortion };
            if best.as_ref().is_none_or(|(b, _)| s.better_than(b, 0.0)) {
                best = Some((s, var));
            }
            before += mass[var];
        }
        best.expect("at least one representative")
    }
}

/// Weighted 1-D k-medoids over sorted values with contiguous clusters.
/// Returns the representative atom of every atom.
fn kmedoids_1d(f: &[f64], g: &[f64], k: usize) -> Vec<usize> {
    let m = f.len();
    // cost[a][b]: best single-medoid cost of atoms a..=b and its medoid
    let mut cost = vec![vec![(0.0, 0usize); m]; m];
    for a in 0..m {
        for b in a..m {
            let mut best = (f64::INFINITY, a);
            for c in a..=b {
                let d: f64 = (a..=b).map(|i| g[i] * (f[i] - f[c]).abs()).sum();
                if d < best.0 {
                    best = (d, c);
                }
            }
            cost[a][b] = best;
        }
    }
    // dp[c][b]: best cost of covering 0..=b with c+1 clusters
    let mut dp = vec![vec![f64::INFINITY; m]; k];
    let mut cut = vec![vec![0usize; m]; k];
    for b in 0..m {
        dp[0][b] = cost[0][b].0;
    }
    for c in 1..k {
        for b in c..m {
            for a in c..=b {
                let v = dp[c - 1][a - 1] + cost[a][b].0;
                if v < dp[c][b] {
                    dp[c][b] = v;
                    cut[c][b] = a;
                }
            }
        }
    }
    let mut assign = vec![0; m];
    let mut b = m - 1;
    for c in (0..k).rev() {
        let a = if c == 0 { 0 } else { cut[c][b] };
        let med = cost[a][b].1;
        for x in assign.iter_mut().take(b + 1).skip(a) {
            *x = med;
        }
        if c > 0 {
            b = a - 1;
        }
    }
    assign
}

fn masses(assign: &[usize], g: &[f64]) -> Vec<f64> {
    let mut mass = vec![0.0; g.len()];
    for (i, &j) in assign.iter().enumerate() {
        mass[j] += g[i];
    }
    mass
}

/// A choice `(assign, var_rep)` satisfying the confidence window with `|E|`
/// as small as the local search gets it (stopping once below `target`).
/// `None` if no feasible choice was found.
pub fn construct(
    agg: &AggregatedObjectives,
    k: usize,
    risk: RiskParams,
    v_xi: f64,
    target: f64,
) -> Option<(Vec<usize>, usize, f64)> {
    let m = agg.len();
    if k == 0 || k > m {
        return None;
    }
    let ctx = Ctx::new(agg, risk, v_xi);
    let mut assign = kmedoids_1d(ctx.f, ctx.g, k);
    let (mut score, mut var) = ctx.score(&assign, &masses(&assign, ctx.g));
    for _ in 0..MAX_SWEEPS {
        if score.violation == 0.0 && score.abs_e <= target {
            break;
        }
        let mut best: Option<(Score, usize, Vec<usize>)> = None;
        let reps: Vec<usize> = (0..m).filter(|&j| assign[j] == j).collect();
        let consider = |cand: Vec<usize>, best: &mut Option<(Score, usize, Vec<usize>)>| {
            let cm = masses(&cand, ctx.g);
            let (s, v) = ctx.score(&cand, &cm);
            if best.as_ref().is_none_or(|(b, _, _)| s.better_than(b, target)) {
                *best = Some((s, v, cand));
            }
        };
        // move a member to another cluster
        for i in 0..m {
            if assign[i] == i {
                continue;
            }
            for &j in &reps {
                if j != assign[i] {
                    let mut cand = assign.clone();
                    cand[i] = j;
                    consider(cand, &mut best);
                }
            }
        }
        // make a member the representative of its cluster
        for i in 0..m {
            let r = assign[i];
            if r != i {
                let cand: Vec<usize> = assign.iter().map(|&a| if a == r { i } else { a }).collect();
                consider(cand, &mut best);
            }
        }
        match best {
            Some((s, v, cand)) if s.better_than(&score, target) => {
                score = s;
                var = v;
                assign = cand;
            }
            _ => break,
        }
    }
    (score.violation == 0.0).then(|| {
        let e = super::partition::evaluate_choice(agg, risk, v_xi, &assign, var)
            .expect("window checked by the search");
        (assign, var, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_medoids_split_two_groups() {
        let f = [1.0, 1.1, 1.2, 9.0, 9.1];
        let g = [0.2; 5];
        let a = kmedoids_1d(&f, &g, 2);
        assert_eq!(a, vec![1, 1, 1, 3, 3]);
    }

    #[test]
    fn construction_is_feasible_for_every_k() {
        let values: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let agg = AggregatedObjectives {
            values: values.clone(),
            probabilities: vec![1.0 / 12.0; 12],
            member_ids: (0..12).map(|i| vec![i]).collect(),
        };
        let risk = RiskParams { lambda: 0.5, alpha: 0.8 };
        for k in 1..=12 {
            let (assign, var, e) = construct(&agg, k, risk, 81.0, 1e-9).expect("feasible");
            assert_eq!(assign.iter().enumerate().filter(|(i, &a)| *i == a).count(), k);
            let check = super::super::partition::evaluate_choice(&agg, risk, 81.0, &assign, var).unwrap();
            assert!((check - e).abs() < 1e-9);
        }
    }
}
