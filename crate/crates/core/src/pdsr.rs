//! Problem-driven reduction by minimizing an upper bound on the optimality
//! gap. Every scenario gets its own optimal decision, every decision is
//! evaluated on every scenario, and a MIP picks representatives, clusters and
//! the two VaR anchors under the resulting problem-driven distance.
//!
//! The pairwise matrix costs `N` full solves plus `N²` recourse solves and the
//! MIP has `O(N²)` binaries, so both are capped at desk scale.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::milp::{MilpBackend, MilpModel, MilpSolution, SolveOptions, SolveStatus, Var};
use crate::risk::RiskParams;
use crate::scenario::{ReducedScenarioSet, ScenarioSet};
use crate::vpp::TwoStageProblem;

pub const MATRIX_CAP: usize = 20;
pub const MIP_CAP: usize = 15;

/// `f[i][j]`: cost of scenario `j` under the decision that is optimal for
/// scenario `i` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseObjectiveMatrix {
    pub f: Vec<Vec<f64>>,
}

impl PairwiseObjectiveMatrix {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// Largest amount by which some `f[i][j]` undercuts `f[j][j]`.
    pub fn dominance_violation(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max(self.f[j][j] - self.f[i][j]);
            }
        }
        worst
    }

    pub fn to_table(&self) -> CsvTable {
        square_table(&self.f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDrivenDistance {
    pub d: Vec<Vec<f64>>,
}

impl ProblemDrivenDistance {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn to_table(&self) -> CsvTable {
        square_table(&self.d)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write_atomic(path)
    }
}

fn square_table(m: &[Vec<f64>]) -> CsvTable {
    let mut t = CsvTable::new(std::iter::once("i".to_string()).chain((0..m.len()).map(|j| j.to_string())));
    for (i, row) in m.iter().enumerate() {
        t.push_row(std::iter::once(i.to_string()).chain(row.iter().map(|&x| fmt_f64(x))));
    }
    t
}

fn cap(what: &'static str, n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::DeskScaleCap { what, n, cap: limit });
    }
    Ok(())
}

pub fn build_pairwise_matrix<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
) -> Result<PairwiseObjectiveMatrix> {
    let n = set.len();
    cap("pairwise objective matrix", n, MATRIX_CAP)?;
    let own: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let single = set.subset(&[i], &[1.0])?;
            problem.solve_full(&single, risk, backend)
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            if i == j {
                Ok(own[i].per_scenario_costs[0])
            } else {
                problem.recourse_cost(&own[i].decision, set.scenario(j), backend)
            }
        })
        .collect::<Result<_>>()?;
    Ok(PairwiseObjectiveMatrix { f: flat.chunks(n).map(<[f64]>::to_vec).collect() })
}

/// `d[i][k] = f[k][i] − f[i][i] + f[i][k] − f[k][k]`.
pub fn distance(fmat: &PairwiseObjectiveMatrix) -> ProblemDrivenDistance {
    let f = &fmat.f;
    let n = f.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in i + 1..n {
            d[i][k] = f[k][i] - f[i][i] + f[i][k] - f[k][k];
            d[k][i] = d[i][k];
        }
    }
    ProblemDrivenDistance { d }
}

/// The bound-minimizing model with handles to its decision binaries.
///
/// `v[i][j]`: scenario `i` joins the cluster of representative `j`; `u[j]`:
/// representative; `m[j]` / `n[j]`: VaR anchor of the original / reduced set;
/// `h[j]`: representative counted below the reduced VaR; `g[i]`: scenario
/// counted below the original VaR.
#[derive(Debug, Clone)]
pub struct BoundMip {
    pub model: MilpModel,
    pub k: usize,
    pub v: Vec<Vec<Var>>,
    pub u: Vec<Var>,
    pub m: Vec<Var>,
    pub n: Vec<Var>,
    pub h: Vec<Var>,
    pub g: Vec<Var>,
}

fn bounds(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// `z = y·w` for a 0/1 expression `y` and `w ∈ [lo, hi]`.
fn product(model: &mut MilpModel, name: &str, z: Var, y: &[(Var, f64)], w: &[(Var, f64)], lo: f64, hi: f64) {
    // z ≤ hi·y, z ≥ lo·y
    let mut a = vec![(z, 1.0)];
    a.extend(y.iter().map(|&(x, c)| (x, -hi * c)));
    model.le(format!("{name}_yhi"), a, 0.0);
    let mut b = vec![(z, 1.0)];
    b.extend(y.iter().map(|&(x, c)| (x, -lo * c)));
    model.ge(format!("{name}_ylo"), b, 0.0);
    // z ≤ w − lo(1 − y), z ≥ w − hi(1 − y)
    let mut c1 = vec![(z, 1.0)];
    c1.extend(w.iter().map(|&(x, c)| (x, -c)));
    c1.extend(y.iter().map(|&(x, c)| (x, -lo * c)));
    model.le(format!("{name}_wlo"), c1, -lo);
    let mut c2 = vec![(z, 1.0)];
    c2.extend(w.iter().map(|&(x, c)| (x, -c)));
    c2.extend(y.iter().map(|&(x, c)| (x, -hi * c)));
    model.ge(format!("{name}_whi"), c2, -hi);
}

/// `z = a ∧ b` for binaries.
fn and(model: &mut MilpModel, name: &str, z: Var, a: Var, b: Var) {
    model.le(format!("{name}_a"), vec![(z, 1.0), (a, -1.0)], 0.0);
    model.le(format!("{name}_b"), vec![(z, 1.0), (b, -1.0)], 0.0);
    model.ge(format!("{name}_ab"), vec![(z, 1.0), (a, -1.0), (b, -1.0)], -1.0);
}

pub fn build_bound_mip(
    dist: &ProblemDrivenDistance,
    probabilities: &[f64],
    k: usize,
    risk: RiskParams,
) -> Result<BoundMip> {
    let nn = dist.len();
    cap("bound MIP", nn, MIP_CAP)?;
    risk.check()?;
    if probabilities.len() != nn {
        return Err(Error::param(format!("{} probabilities for {nn} scenarios", probabilities.len())));
    }
    if k == 0 || k > nn {
        return Err(Error::param(format!("k = {k} must lie in 1..={nn}")));
    }
    let d = &dist.d;
    let gam = probabilities;
    let lp = risk.tail_weight();
    let alpha = risk.alpha;
    let mut model = MilpModel::new();
    let free = (f64::NEG_INFINITY, f64::INFINITY);

    let bin = |model: &mut MilpModel, p: &str| -> Vec<Var> { (0..nn).map(|j| model.add_binary(format!("{p}_{j}"))).collect() };
    let u = bin(&mut model, "u");
    let m = bin(&mut model, "m");
    let n = bin(&mut model, "n");
    let h = bin(&mut model, "h");
    let g = bin(&mut model, "g");
    let v: Vec<Vec<Var>> =
        (0..nn).map(|i| (0..nn).map(|j| model.add_binary(format!("v_{i}_{j}"))).collect()).collect();
    let la: Vec<Var> = (0..nn).map(|j| model.add_continuous(format!("la_{j}"), free.0, free.1)).collect();
    let lb: Vec<Var> = (0..nn).map(|j| model.add_continuous(format!("lb_{j}"), free.0, free.1)).collect();
    let lc: Vec<Var> = (0..nn).map(|j| model.add_continuous(format!("lc_{j}"), free.0, free.1)).collect();
    let t = model.add_continuous("t", free.0, free.1);

    // selection
    for j in 0..nn {
        for i in 0..nn {
            if i == j {
                model.eq(format!("vjj_{j}"), vec![(v[j][j], 1.0), (u[j], -1.0)], 0.0);
            } else {
                model.le(format!("vu_{i}_{j}"), vec![(v[i][j], 1.0), (u[j], -1.0)], 0.0);
            }
        }
        model.le(format!("nu_{j}"), vec![(n[j], 1.0), (u[j], -1.0)], 0.0);
        model.le(format!("hu_{j}"), vec![(h[j], 1.0), (u[j], -1.0)], 0.0);
        model.le(format!("mg_{j}"), vec![(m[j], 1.0), (g[j], -1.0)], 0.0);
        model.le(format!("nh_{j}"), vec![(n[j], 1.0), (h[j], -1.0)], 0.0);
    }
    for i in 0..nn {
        model.eq(format!("assign_{i}"), (0..nn).map(|j| (v[i][j], 1.0)).collect(), 1.0);
    }
    model.eq("card", u.iter().map(|&x| (x, 1.0)).collect(), k as f64);
    model.eq("one_m", m.iter().map(|&x| (x, 1.0)).collect(), 1.0);
    model.eq("one_n", n.iter().map(|&x| (x, 1.0)).collect(), 1.0);

    // original VaR window: Σ g γ ≤ α, Σ g γ + γ_k (1 − g_k) ≥ α (1 − g_k)
    let gmass: Vec<(Var, f64)> = (0..nn).map(|i| (g[i], gam[i])).collect();
    model.le("g_lo", gmass.clone(), alpha);
    for kk in 0..nn {
        let mut row = gmass.clone();
        row.push((g[kk], alpha - gam[kk]));
        model.ge(format!("g_hi_{kk}"), row, alpha - gam[kk]);
    }

    // s_ij = h_j ∧ v_ij; reduced VaR window on cluster masses
    let s: Vec<Vec<Var>> = (0..nn)
        .map(|i| (0..nn).map(|j| model.add_continuous(format!("s_{i}_{j}"), 0.0, 1.0)).collect())
        .collect();
    for i in 0..nn {
        for j in 0..nn {
            and(&mut model, &format!("s_{i}_{j}"), s[i][j], h[j], v[i][j]);
        }
    }
    let hmass: Vec<(Var, f64)> = (0..nn).flat_map(|i| (0..nn).map(move |j| (i, j))).map(|(i, j)| (s[i][j], gam[i])).collect();
    model.le("h_lo", hmass.clone(), alpha);
    for kk in 0..nn {
        let mut row = hmass.clone();
        row.extend((0..nn).map(|i| (v[i][kk], gam[i])));
        row.extend((0..nn).map(|i| (s[i][kk], -gam[i])));
        row.push((u[kk], -alpha));
        row.push((h[kk], alpha));
        model.ge(format!("h_hi_{kk}"), row, 0.0);
    }

    // w_pq = m_p ∧ n_q, D = Σ w_pq d_pq
    let mut dterm = Vec::with_capacity(nn * nn);
    for p in 0..nn {
        for q in 0..nn {
            let w = model.add_continuous(format!("w_{p}_{q}"), 0.0, 1.0);
            and(&mut model, &format!("w_{p}_{q}"), w, m[p], n[q]);
            dterm.push((w, d[p][q]));
        }
    }
    let (dlo, dhi) = bounds(d.iter().flatten().copied());

    // l^a_j ≥ Σ_i γ_i d_ij (c v_ij − (c − 1) s_ij), c = 1 + λ'
    for j in 0..nn {
        let mut row = vec![(la[j], 1.0)];
        for i in 0..nn {
            row.push((v[i][j], -gam[i] * d[i][j] * (1.0 + lp)));
            row.push((s[i][j], gam[i] * d[i][j] * lp));
        }
        model.ge(format!("la_{j}"), row, 0.0);
    }
    // l^b_j ≥ λ' Σ_i γ_i (v_ij − s_ij) D
    for j in 0..nn {
        let mut row = vec![(lb[j], 1.0)];
        for i in 0..nn {
            let r = model.add_continuous(format!("rb_{i}_{j}"), dlo.min(0.0), dhi.max(0.0));
            product(&mut model, &format!("rb_{i}_{j}"), r, &[(v[i][j], 1.0), (s[i][j], -1.0)], &dterm, dlo, dhi);
            row.push((r, -lp * gam[i]));
        }
        model.ge(format!("lb_{j}"), row, 0.0);
    }
    // l^c_j ≥ λ' Σ_i γ_i (v_ij ∧ (h_j ⊕ g_i)) Σ_p m_p d_ip
    for j in 0..nn {
        let mut row = vec![(lc[j], 1.0)];
        for i in 0..nn {
            let e = model.add_continuous(format!("xor_{i}_{j}"), 0.0, 1.0);
            model.ge(format!("xor_{i}_{j}_1"), vec![(e, 1.0), (h[j], -1.0), (g[i], 1.0)], 0.0);
            model.ge(format!("xor_{i}_{j}_2"), vec![(e, 1.0), (h[j], 1.0), (g[i], -1.0)], 0.0);
            model.le(format!("xor_{i}_{j}_3"), vec![(e, 1.0), (h[j], -1.0), (g[i], -1.0)], 0.0);
            model.le(format!("xor_{i}_{j}_4"), vec![(e, 1.0), (h[j], 1.0), (g[i], 1.0)], 2.0);
            let x = model.add_continuous(format!("x_{i}_{j}"), 0.0, 1.0);
            and(&mut model, &format!("x_{i}_{j}"), x, v[i][j], e);
            let anchor: Vec<(Var, f64)> = (0..nn).map(|p| (m[p], d[i][p])).collect();
            let (alo, ahi) = bounds(d[i].iter().copied());
            let r = model.add_continuous(format!("rc_{i}_{j}"), alo.min(0.0), ahi.max(0.0));
            product(&mut model, &format!("rc_{i}_{j}"), r, &[(x, 1.0)], &anchor, alo, ahi);
            row.push((r, -lp * gam[i]));
        }
        model.ge(format!("lc_{j}"), row, 0.0);
    }
    // t ≥ λ D
    let mut row = vec![(t, 1.0)];
    row.extend(dterm.iter().map(|&(w, c)| (w, -risk.lambda * c)));
    model.ge("t", row, 0.0);

    let mut obj: Vec<(Var, f64)> = la.iter().chain(&lb).chain(&lc).map(|&x| (x, 1.0)).collect();
    obj.push((t, 1.0));
    model.set_objective(obj, 0.0);
    Ok(BoundMip { model, k, v, u, m, n, h, g })
}

/// The bound objective evaluated directly for a given choice: `assign[i]` is
/// the representative of scenario `i`, `below_var` marks `h` (representatives)
/// and `g` (scenarios), `m` and `n` are the anchors.
pub fn bound_objective(
    dist: &ProblemDrivenDistance,
    probabilities: &[f64],
    risk: RiskParams,
    assign: &[usize],
    h: &[bool],
    g: &[bool],
    m: usize,
    n: usize,
) -> f64 {
    let d = &dist.d;
    let lp = risk.tail_weight();
    let anchors = d[m][n];
    let mut total = risk.lambda * anchors;
    for (i, &j) in assign.iter().enumerate() {
        let gi = probabilities[i];
        let hj = h[j];
        total += gi * if hj { 1.0 } else { 1.0 + lp } * d[i][j];
        if !hj {
            total += gi * lp * anchors;
        }
        if hj != g[i] {
            total += gi * lp * d[i][m];
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSolution {
    pub representative_ids: Vec<usize>,
    pub assignment: Vec<usize>,
    pub weights: Vec<f64>,
    /// Representative of every scenario (original indices).
    pub rep_of: Vec<usize>,
    pub h: Vec<bool>,
    pub g: Vec<bool>,
    pub original_var: usize,
    pub reduced_var: usize,
    pub objective_value: f64,
    pub status: SolveStatus,
}

impl BoundSolution {
    pub fn to_reduced(&self, original: &ScenarioSet) -> Result<ReducedScenarioSet> {
        ReducedScenarioSet::from_assignment(original, self.representative_ids.clone(), self.assignment.clone())
    }
}

pub fn solve_bound_mip(
    mip: &BoundMip,
    probabilities: &[f64],
    backend: &dyn MilpBackend,
    opts: &SolveOptions,
) -> Result<BoundSolution> {
    let sol = backend.solve(&mip.model, opts)?;
    decode(mip, &sol, probabilities)
}

fn decode(mip: &BoundMip, sol: &MilpSolution, probabilities: &[f64]) -> Result<BoundSolution> {
    if !sol.has_solution() {
        return Err(Error::Infeasible("bound model has no solution".into()));
    }
    let nn = mip.u.len();
    let reps: Vec<usize> = (0..nn).filter(|&j| sol.flag(mip.u[j])).collect();
    if reps.len() != mip.k {
        return Err(Error::InvalidReduction(format!("decoded {} representatives, expected {}", reps.len(), mip.k)));
    }
    let mut rep_of = vec![0; nn];
    for (i, r) in rep_of.iter_mut().enumerate() {
        *r = (0..nn)
            .find(|&j| sol.flag(mip.v[i][j]))
            .ok_or_else(|| Error::InvalidReduction(format!("scenario {i} unassigned")))?;
    }
    let mut assignment = vec![0; nn];
    let mut weights = vec![0.0; reps.len()];
    for i in 0..nn {
        let label = reps
            .iter()
            .position(|&r| r == rep_of[i])
            .ok_or_else(|| Error::InvalidReduction(format!("scenario {i} assigned to a non-representative")))?;
        assignment[i] = label;
        weights[label] += probabilities[i];
    }
    let pick = |xs: &[Var], what: &str| {
        (0..nn).find(|&j| sol.flag(xs[j])).ok_or_else(|| Error::InvalidReduction(format!("no {what} anchor")))
    };
    Ok(BoundSolution {
        representative_ids: reps,
        assignment,
        weights,
        rep_of,
        h: mip.h.iter().map(|&x| sol.flag(x)).collect(),
        g: mip.g.iter().map(|&x| sol.flag(x)).collect(),
        original_var: pick(&mip.m, "original VaR")?,
        reduced_var: pick(&mip.n, "reduced VaR")?,
        objective_value: sol.objective_value,
        status: sol.status,
    })
}

#[derive(Debug, Clone)]
pub struct PdsrOutcome {
    pub reduction: ReducedScenarioSet,
    pub matrix: PairwiseObjectiveMatrix,
    pub distance: ProblemDrivenDistance,
    pub solution: BoundSolution,
}

/// Projection in the problem space followed by the bound MIP.
pub fn pdsr_reduce<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    k: usize,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
    opts: &SolveOptions,
) -> Result<PdsrOutcome> {
    cap("bound MIP", set.len(), MIP_CAP)?;
    let matrix = build_pairwise_matrix(set, problem, risk, backend)?;
    let distance = distance(&matrix);
    let mip = build_bound_mip(&distance, set.probabilities(), k, risk)?;
    let solution = solve_bound_mip(&mip, set.probabilities(), backend, opts)?;
    let reduction = solution.to_reduced(set)?;
    Ok(PdsrOutcome { reduction, matrix, distance, solution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::HighsBackend;

    fn toy(n: usize) -> ProblemDrivenDistance {
        let x: Vec<f64> = (0..n).map(|i| (i * i % 7) as f64 + 0.5 * i as f64).collect();
        ProblemDrivenDistance { d: (0..n).map(|i| (0..n).map(|j| (x[i] - x[j]).abs()).collect()).collect() }
    }

    #[test]
    fn distance_is_symmetric_with_zero_diagonal() {
        let f = PairwiseObjectiveMatrix { f: vec![vec![1.0, 3.0, 4.0], vec![2.0, 2.0, 5.0], vec![3.0, 4.0, 3.0]] };
        let d = distance(&f);
        for i in 0..3 {
            assert_eq!(d.d[i][i], 0.0);
            for k in 0..3 {
                assert_eq!(d.d[i][k], d.d[k][i]);
            }
        }
        // f[1][0] − f[0][0] + f[0][1] − f[1][1] = 2 − 1 + 3 − 2
        assert_eq!(d.d[0][1], 2.0);
        assert_eq!(f.dominance_violation(), 0.0);
    }

    #[test]
    fn full_cardinality_has_zero_bound() {
        let d = toy(5);
        let risk = RiskParams { lambda: 0.5, alpha: 0.8 };
        let mip = build_bound_mip(&d, &[0.2; 5], 5, risk).unwrap();
        let sol = solve_bound_mip(&mip, &[0.2; 5], &HighsBackend::default(), &SolveOptions::default()).unwrap();
        assert!(sol.objective_value.abs() < 1e-7);
        assert_eq!(sol.representative_ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn decoded_objective_matches_direct_evaluation() {
        let d = toy(6);
        let gam = [0.1, 0.2, 0.15, 0.25, 0.2, 0.1];
        let risk = RiskParams { lambda: 0.5, alpha: 0.7 };
        let mip = build_bound_mip(&d, &gam, 2, risk).unwrap();
        let sol = solve_bound_mip(&mip, &gam, &HighsBackend::default(), &SolveOptions::default()).unwrap();
        let direct = bound_objective(&d, &gam, risk, &sol.rep_of, &sol.h, &sol.g, sol.original_var, sol.reduced_var);
        assert!((direct - sol.objective_value).abs() < 1e-6, "{direct} vs {}", sol.objective_value);
        let gmass: f64 = (0..6).filter(|&i| sol.g[i]).map(|i| gam[i]).sum();
        assert!(gmass <= risk.alpha + 1e-9);
    }

    #[test]
    fn caps_are_enforced() {
        let d = toy(16);
        let err = build_bound_mip(&d, &[1.0 / 16.0; 16], 2, RiskParams::default()).unwrap_err();
        assert!(matches!(err, Error::DeskScaleCap { n: 16, cap: 15, .. }));
    }
}
