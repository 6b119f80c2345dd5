//! Joint scenario partition and representative selection in the problem
//! space, with the VaR representative and its confidence window.
//!
//! Atoms are indexed in sorted order. Binaries: `v[i][j]` (atom `i` joins the
//! cluster of representative `j`), `u[j]` (representative), `n[j]` (VaR
//! representative) and `h[j]` (representative strictly before the VaR one).
//! Every product is linearized exactly:
//!
//! * `q[j] = e[j]·(F̄_j − v_ζ)` with `e = u − h`, via big-M on `e`;
//! * `r[i][j] = v[i][j]·q[j]`, via big-M on `v`;
//! * `s[i][j] = h[j] ∧ v[i][j]`;
//! * `H = Σ γ̄_i s[i][j]` is the mass of clusters before the VaR one.
//!
//! The absolute value of the objective is an epigraph variable `t`.

use serde::{Deserialize, Serialize};

use super::aggregate::AggregatedObjectives;
use crate::error::{Error, Result};
use crate::milp::{MilpBackend, MilpModel, MilpSolution, SolveOptions, SolveStatus, Var};
use crate::risk::{ProjectedObjectives, RiskParams};
use crate::scenario::{ReducedScenarioSet, ScenarioSet};

/// The partition model with handles to its variables.
#[derive(Debug, Clone)]
pub struct PartitionMip {
    pub model: MilpModel,
    pub k: usize,
    v: Vec<Vec<Var>>,
    u: Vec<Var>,
    n: Vec<Var>,
    h: Vec<Var>,
    t: Var,
    aux: Aux,
    risk: RiskParams,
    v_xi: f64,
}

#[derive(Debug, Clone)]
struct Aux {
    q: Vec<Var>,
    r: Vec<Vec<Var>>,
    s: Vec<Vec<Var>>,
    v_zeta: Var,
    hmass: Var,
}

impl PartitionMip {
    pub fn num_atoms(&self) -> usize {
        self.u.len()
    }

    /// A feasible point for a given choice of representatives, assignment and
    /// VaR representative (all in aggregated indices), usable as a warm start.
    /// Returns `None` if the choice violates the confidence window.
    pub fn point(
        &self,
        agg: &AggregatedObjectives,
        risk: RiskParams,
        v_xi: f64,
        assign: &[usize],
        var_rep: usize,
    ) -> Option<Vec<f64>> {
        let m = self.num_atoms();
        let eval = evaluate_choice(agg, risk, v_xi, assign, var_rep)?;
        let mut x = vec![0.0; self.model.num_vars()];
        let reps: Vec<bool> = (0..m).map(|j| assign[j] == j).collect();
        let mut mass = vec![0.0; m];
        for i in 0..m {
            mass[assign[i]] += agg.probabilities[i];
        }
        let v_zeta = agg.values[var_rep];
        for j in 0..m {
            if reps[j] {
                x[self.u[j].index()] = 1.0;
                if j < var_rep {
                    x[self.h[j].index()] = 1.0;
                }
            }
        }
        x[self.n[var_rep].index()] = 1.0;
        for i in 0..m {
            x[self.v[i][assign[i]].index()] = 1.0;
        }
        let layout = &self.aux;
        for j in 0..m {
            let e = reps[j] && j >= var_rep;
            let q = if e { agg.values[j] - v_zeta } else { 0.0 };
            x[layout.q[j].index()] = q;
            for i in 0..m {
                let vij = assign[i] == j;
                x[layout.r[i][j].index()] = if vij { q } else { 0.0 };
                x[layout.s[i][j].index()] = if vij && reps[j] && j < var_rep { 1.0 } else { 0.0 };
            }
        }
        x[layout.v_zeta.index()] = v_zeta;
        x[layout.hmass.index()] =
            (0..m).filter(|&j| reps[j] && j < var_rep).map(|j| mass[j]).sum::<f64>();
        x[self.t.index()] = eval.abs();
        Some(x)
    }
}

fn big_m(agg: &AggregatedObjectives) -> f64 {
    let lo = agg.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = agg.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo).max(0.0)
}

/// Signed partition objective `E` for a choice given as an assignment of atoms
/// to representatives (`assign[j] == j` marks representatives) and a VaR
/// representative. `None` if the confidence window is violated.
pub fn evaluate_choice(
    agg: &AggregatedObjectives,
    risk: RiskParams,
    v_xi: f64,
    assign: &[usize],
    var_rep: usize,
) -> Option<f64> {
    let m = agg.len();
    if assign[var_rep] != var_rep {
        return None;
    }
    let mut mass = vec![0.0; m];
    for i in 0..m {
        mass[assign[i]] += agg.probabilities[i];
    }
    let before: f64 = (0..var_rep).filter(|&j| assign[j] == j).map(|j| mass[j]).sum();
    if before > risk.alpha + 1e-12 {
        return None;
    }
    // every representative from the VaR one onwards
    if (var_rep..m).any(|j| assign[j] == j && before + mass[j] < risk.alpha - 1e-12) {
        return None;
    }
    let lp = risk.tail_weight();
    let v_zeta = agg.values[var_rep];
    let mut e = risk.lambda * (v_xi - v_zeta);
    for i in 0..m {
        let j = assign[i];
        let fi = agg.values[i];
        let fj = agg.values[j];
        let tail_j = if j >= var_rep { fj - v_zeta } else { 0.0 };
        e += agg.probabilities[i] * (fi - fj + lp * ((fi - v_xi).max(0.0) - tail_j));
    }
    Some(e)
}

/// Emits the linearized partition model over the (sorted) aggregated atoms.
pub fn build_partition_mip(
    agg: &AggregatedObjectives,
    k: usize,
    risk: RiskParams,
    v_xi_alpha: f64,
) -> Result<PartitionMip> {
    let m = agg.len();
    if k == 0 || k > m {
        return Err(Error::param(format!("k = {k} must lie in 1..={m}")));
    }
    if agg.values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("aggregated values must be sorted"));
    }
    risk.check()?;
    let g = &agg.probabilities;
    let f = &agg.values;
    let lp = risk.tail_weight();
    let big = big_m(agg);
    let mut model = MilpModel::new();

    let u: Vec<Var> = (0..m).map(|j| model.add_binary(format!("u_{j}"))).collect();
    let n: Vec<Var> = (0..m).map(|j| model.add_binary(format!("n_{j}"))).collect();
    let h: Vec<Var> = (0..m).map(|j| model.add_binary(format!("h_{j}"))).collect();
    let v: Vec<Vec<Var>> =
        (0..m).map(|i| (0..m).map(|j| model.add_binary(format!("v_{i}_{j}"))).collect()).collect();
    let v_zeta = model.add_continuous("v_zeta", f64::NEG_INFINITY, f64::INFINITY);
    let q: Vec<Var> = (0..m).map(|j| model.add_continuous(format!("q_{j}"), 0.0, big)).collect();
    let r: Vec<Vec<Var>> = (0..m)
        .map(|i| (0..m).map(|j| model.add_continuous(format!("r_{i}_{j}"), 0.0, big)).collect())
        .collect();
    let s: Vec<Vec<Var>> = (0..m)
        .map(|i| (0..m).map(|j| model.add_continuous(format!("s_{i}_{j}"), 0.0, 1.0)).collect())
        .collect();
    let hmass = model.add_continuous("hmass", 0.0, 1.0);
    let t = model.add_continuous("t", 0.0, f64::INFINITY);

    // selection and assignment
    for j in 0..m {
        for i in 0..m {
            if i == j {
                model.eq(format!("vjj_{j}"), vec![(v[j][j], 1.0), (u[j], -1.0)], 0.0);
            } else {
                model.le(format!("vu_{i}_{j}"), vec![(v[i][j], 1.0), (u[j], -1.0)], 0.0);
            }
        }
        model.le(format!("nu_{j}"), vec![(n[j], 1.0), (u[j], -1.0)], 0.0);
        model.le(format!("hu_{j}"), vec![(h[j], 1.0), (u[j], -1.0)], 0.0);
    }
    for i in 0..m {
        model.eq(format!("assign_{i}"), (0..m).map(|j| (v[i][j], 1.0)).collect(), 1.0);
    }
    model.eq("card", u.iter().map(|&x| (x, 1.0)).collect(), k as f64);
    model.eq("one_var", n.iter().map(|&x| (x, 1.0)).collect(), 1.0);
    let mut vz = vec![(v_zeta, 1.0)];
    vz.extend((0..m).map(|j| (n[j], -f[j])));
    model.eq("v_zeta", vz, 0.0);

    // h_i = u_i (1 − Σ_{p≤i} n_p)
    for i in 0..m {
        let cum: Vec<(Var, f64)> = (0..=i).map(|p| (n[p], 1.0)).collect();
        let mut a = vec![(h[i], 1.0)];
        a.extend(cum.iter().copied());
        model.le(format!("h_le_1mc_{i}"), a, 1.0);
        let mut b = vec![(h[i], 1.0), (u[i], -1.0)];
        b.extend(cum.iter().copied());
        model.ge(format!("h_ge_umc_{i}"), b, 0.0);
    }

    // q_j = (u_j − h_j)(F̄_j − v_ζ)
    for j in 0..m {
        // q − F̄_j + v_ζ ≥ −M(1 − u + h)
        model.ge(
            format!("q_lo_{j}"),
            vec![(q[j], 1.0), (v_zeta, 1.0), (u[j], -big), (h[j], big)],
            f[j] - big,
        );
        model.le(
            format!("q_hi_{j}"),
            vec![(q[j], 1.0), (v_zeta, 1.0), (u[j], big), (h[j], -big)],
            f[j] + big,
        );
        model.le(format!("q_on_{j}"), vec![(q[j], 1.0), (u[j], -big), (h[j], big)], 0.0);
    }
    // r_ij = v_ij q_j, s_ij = h_j ∧ v_ij
    for i in 0..m {
        for j in 0..m {
            model.le(format!("r_v_{i}_{j}"), vec![(r[i][j], 1.0), (v[i][j], -big)], 0.0);
            model.le(format!("r_q_{i}_{j}"), vec![(r[i][j], 1.0), (q[j], -1.0)], 0.0);
            model.ge(format!("r_lo_{i}_{j}"), vec![(r[i][j], 1.0), (q[j], -1.0), (v[i][j], -big)], -big);
            model.le(format!("s_h_{i}_{j}"), vec![(s[i][j], 1.0), (h[j], -1.0)], 0.0);
            model.le(format!("s_v_{i}_{j}"), vec![(s[i][j], 1.0), (v[i][j], -1.0)], 0.0);
            model.ge(format!("s_lo_{i}_{j}"), vec![(s[i][j], 1.0), (h[j], -1.0), (v[i][j], -1.0)], -1.0);
        }
    }
    let mut hm = vec![(hmass, 1.0)];
    for i in 0..m {
        for j in 0..m {
            hm.push((s[i][j], -g[i]));
        }
    }
    model.eq("hmass", hm, 0.0);
    model.le("window_lo", vec![(hmass, 1.0)], risk.alpha);
    // H + Σ_i γ̄_i (v_ik − s_ik) ≥ α (u_k − h_k)
    for kk in 0..m {
        let mut row = vec![(hmass, 1.0), (u[kk], -risk.alpha), (h[kk], risk.alpha)];
        for i in 0..m {
            row.push((v[i][kk], g[i]));
            row.push((s[i][kk], -g[i]));
        }
        model.ge(format!("window_hi_{kk}"), row, 0.0);
    }

    // E = Σ v_ij γ̄_i (F̄_i − F̄_j + λ'[F̄_i − v_ξ]+) − λ' Σ γ̄_i r_ij + λ(v_ξ − v_ζ)
    let mut e_terms = Vec::with_capacity(2 * m * m + 1);
    for i in 0..m {
        let tail_i = lp * (f[i] - v_xi_alpha).max(0.0);
        for j in 0..m {
            e_terms.push((v[i][j], g[i] * (f[i] - f[j] + tail_i)));
            e_terms.push((r[i][j], -lp * g[i]));
        }
    }
    e_terms.push((v_zeta, -risk.lambda));
    let e_const = risk.lambda * v_xi_alpha;
    // t ≥ E and t ≥ −E
    let mut up = vec![(t, 1.0)];
    up.extend(e_terms.iter().map(|&(x, c)| (x, -c)));
    model.ge("abs_pos", up, e_const);
    let mut dn = vec![(t, 1.0)];
    dn.extend(e_terms.iter().copied());
    model.ge("abs_neg", dn, -e_const);
    model.set_objective(vec![(t, 1.0)], 0.0);

    Ok(PartitionMip { model, k, v, u, n, h, t, aux: Aux { q, r, s, v_zeta, hmass }, risk, v_xi: v_xi_alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Original scenario ids of the representatives, in aggregated order.
    pub representative_ids: Vec<usize>,
    /// Cluster label (index into `representative_ids`) of every original scenario.
    pub assignment: Vec<usize>,
    pub weights: Vec<f64>,
    pub var_rep_id: usize,
    /// `|E|` at the solution.
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Aggregated-space decode: representative atom of every atom.
    pub agg_assignment: Vec<usize>,
    pub agg_var_rep: usize,
}

impl PartitionResult {
    pub fn to_reduced(&self, original: &ScenarioSet) -> Result<ReducedScenarioSet> {
        ReducedScenarioSet::from_assignment(original, self.representative_ids.clone(), self.assignment.clone())
    }
}

/// Solves the partition model and maps the result back to the original
/// scenarios. Each aggregated representative becomes the member of its atom
/// whose value is closest to the atom mean (lower index on ties).
pub fn solve_partition(
    mip: &PartitionMip,
    backend: &dyn MilpBackend,
    opts: &SolveOptions,
    agg: &AggregatedObjectives,
    original: &ProjectedObjectives,
) -> Result<PartitionResult> {
    let sol = backend.solve(&mip.model, opts)?;
    decode(mip, &sol, agg, original)
}

/// Decodes a known feasible point (for example a heuristic start already
/// within the gap, since the objective is bounded below by zero).
pub fn accept_point(
    mip: &PartitionMip,
    values: Vec<f64>,
    agg: &AggregatedObjectives,
    original: &ProjectedObjectives,
) -> Result<PartitionResult> {
    let objective_value = mip.model.objective_value(&values);
    let sol = MilpSolution { status: SolveStatus::Optimal, values, objective_value, gap: 0.0 };
    decode(mip, &sol, agg, original)
}

fn decode(
    mip: &PartitionMip,
    sol: &MilpSolution,
    agg: &AggregatedObjectives,
    original: &ProjectedObjectives,
) -> Result<PartitionResult> {
    if !sol.has_solution() {
        return Err(Error::Infeasible(
            "partition model has no solution; alpha is inconsistent with the atom weights".into(),
        ));
    }
    let m = mip.num_atoms();
    let reps: Vec<usize> = (0..m).filter(|&j| sol.flag(mip.u[j])).collect();
    if reps.len() != mip.k {
        return Err(Error::InvalidReduction(format!("decoded {} representatives, expected {}", reps.len(), mip.k)));
    }
    let label_of: Vec<Option<usize>> = (0..m).map(|j| reps.iter().position(|&r| r == j)).collect();
    let mut agg_assignment = vec![usize::MAX; m];
    for i in 0..m {
        let j = (0..m)
            .find(|&j| sol.flag(mip.v[i][j]))
            .ok_or_else(|| Error::InvalidReduction(format!("atom {i} unassigned")))?;
        if label_of[j].is_none() {
            return Err(Error::InvalidReduction(format!("atom {i} assigned to non-representative {j}")));
        }
        agg_assignment[i] = j;
    }
    let agg_var_rep = (0..m)
        .find(|&j| sol.flag(mip.n[j]))
        .ok_or_else(|| Error::InvalidReduction("no VaR representative".into()))?;

    let representative_ids: Vec<usize> = reps
        .iter()
        .map(|&j| {
            let target = agg.values[j];
            let mut best = (usize::MAX, f64::INFINITY);
            for &i in &agg.member_ids[j] {
                let d = (original.values[i] - target).abs();
                if d < best.1 || (d == best.1 && i < best.0) {
                    best = (i, d);
                }
            }
            best.0
        })
        .collect();
    let mut assignment = vec![usize::MAX; original.len()];
    let mut weights = vec![0.0; reps.len()];
    for (a, members) in agg.member_ids.iter().enumerate() {
        let label = label_of[agg_assignment[a]].expect("checked above");
        for &i in members {
            assignment[i] = label;
            weights[label] += original.probabilities[i];
        }
    }
    let var_rep_id = representative_ids[label_of[agg_var_rep].expect("VaR rep is a representative")];
    Ok(PartitionResult {
        representative_ids,
        assignment,
        weights,
        var_rep_id,
        // exact |E| of the decoded choice; the solver value carries big-M tolerance noise
        objective_value: evaluate_choice(agg, mip.risk, mip.v_xi, &agg_assignment, agg_var_rep)
            .map_or(sol.value(mip.t).max(0.0), f64::abs),
        status: sol.status,
        agg_assignment,
        agg_var_rep,
    })
}
