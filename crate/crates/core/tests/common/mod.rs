//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use cvar_sr::RiskParams;

const TOL: f64 = 1e-12;

fn subsets_of_size(m: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1 << m)).filter(move |s| s.count_ones() as usize == k).map(move |s| (0..m).filter(|&i| s >> i & 1 == 1).collect())
}

/// Every way to send each non-representative to one of the representatives.
fn assignments(m: usize, reps: &[usize]) -> Vec<Vec<usize>> {
    let others: Vec<usize> = (0..m).filter(|i| !reps.contains(i)).collect();
    let total = reps.len().pow(others.len() as u32);
    (0..total)
        .map(|mut code| {
            let mut a: Vec<usize> = (0..m).collect();
            for &i in &others {
                a[i] = reps[code % reps.len()];
                code /= reps.len();
            }
            a
        })
        .collect()
}

/// Smallest `|E|` over representative sets, assignments and VaR
/// representatives whose confidence window holds. `f` must be sorted.
pub fn partition_brute_force(f: &[f64], g: &[f64], k: usize, risk: RiskParams, v_xi: f64) -> Option<f64> {
    let m = f.len();
    let lp = risk.lambda / (1.0 - risk.alpha);
    let mut best: Option<f64> = None;
    for reps in subsets_of_size(m, k) {
        for a in assignments(m, &reps) {
            let mut w = vec![0.0; m];
            for i in 0..m {
                w[a[i]] += g[i];
            }
            for &var in &reps {
                let below: f64 = reps.iter().filter(|&&j| j < var).map(|&j| w[j]).sum();
                if below > risk.alpha + TOL {
                    continue;
                }
                if reps.iter().any(|&j| j >= var && below + w[j] < risk.alpha - TOL) {
                    continue;
                }
                let vz = f[var];
                let mut e = risk.lambda * (v_xi - vz);
                for i in 0..m {
                    let j = a[i];
                    let tail_rep = if j >= var { f[j] - vz } else { 0.0 };
                    e += g[i] * (f[i] - f[j] + lp * ((f[i] - v_xi).max(0.0) - tail_rep));
                }
                if best.is_none_or(|b| e.abs() < b) {
                    best = Some(e.abs());
                }
            }
        }
    }
    best
}

/// Smallest value of the optimality-gap bound over representatives,
/// assignments, the two VaR anchors and the two below-VaR sets.
pub fn bound_brute_force(d: &[Vec<f64>], g: &[f64], k: usize, risk: RiskParams) -> f64 {
    let n = d.len();
    let lp = risk.lambda / (1.0 - risk.alpha);
    let alpha = risk.alpha;
    // admissible (g set, m anchor) pairs do not depend on the clustering
    let mut anchors = Vec::new();
    for gs in 0u32..(1 << n) {
        let inside = |i: usize| gs >> i & 1 == 1;
        let mass: f64 = (0..n).filter(|&i| inside(i)).map(|i| g[i]).sum();
        if mass > alpha + TOL || (0..n).any(|kk| !inside(kk) && mass + g[kk] < alpha - TOL) {
            continue;
        }
        for m in (0..n).filter(|&i| inside(i)) {
            anchors.push(((0..n).map(inside).collect::<Vec<bool>>(), m));
        }
    }
    let mut best = f64::INFINITY;
    for reps in subsets_of_size(n, k) {
        for a in assignments(n, &reps) {
            let mut w = vec![0.0; n];
            for i in 0..n {
                w[a[i]] += g[i];
            }
            for hs in 0u32..(1 << reps.len()) {
                let h: Vec<bool> = (0..n).map(|j| reps.iter().position(|&r| r == j).is_some_and(|p| hs >> p & 1 == 1)).collect();
                let hm: f64 = (0..n).filter(|&j| h[j]).map(|j| w[j]).sum();
                if hm > alpha + TOL || reps.iter().any(|&j| !h[j] && hm + w[j] < alpha - TOL) {
                    continue;
                }
                for &nv in reps.iter().filter(|&&j| h[j]) {
                    for (gset, m) in &anchors {
                        let dd = d[*m][nv];
                        let mut v = risk.lambda * dd;
                        for i in 0..n {
                            let j = a[i];
                            let coef = if h[j] { 1.0 } else { 1.0 + lp };
                            v += g[i] * coef * d[i][j];
                            if !h[j] {
                                v += g[i] * lp * dd;
                            }
                            if h[j] != gset[i] {
                                v += g[i] * lp * d[i][*m];
                            }
                        }
                        best = best.min(v);
                    }
                }
            }
        }
    }
    best
}
