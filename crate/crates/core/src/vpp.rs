//! Two-stage SBSO-CVaR problems and the virtual power plant day-ahead
//! offering instance.
//!
//! The first stage is the day-ahead trading profile `P^T_t`. Each scenario
//! then settles deviations on the intraday market (bought at a markup, sold
//! at a markdown), may dispatch the storage unit and may curtail renewable
//! output. The CVaR term is modelled with the Rockafellar–Uryasev auxiliary
//! variables.
//!
//! The storage and intraday complementarity binaries are added lazily: the
//! relaxation is solved first and binaries are introduced only for the
//! (scenario, step) pairs whose relaxed solution charges and discharges, or
//! buys and sells, at the same time. The final model is still a relaxation of
//! the full MILP, so a solution satisfying every complementarity is optimal
//! for it.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{MilpBackend, MilpModel, SolveOptions, SolveStatus, Var};
use crate::risk::{evaluate_objective, project, ProjectedObjectives, RiskDecomposition, RiskParams};
use crate::scenario::{Scenario, ScenarioSet};

/// Relaxed values below this are treated as zero when checking complementarity.
pub const COMPLEMENTARITY_TOL: f64 = 1e-7;

/// A first-stage problem whose scenarios can be settled independently once
/// the decision is fixed.
pub trait TwoStageProblem: Sync {
    type Decision: Clone + fmt::Debug + Send + Sync;

    /// Solves the SBSO-CVaR problem on `set` (probabilities act as weights).
    fn solve_full(
        &self,
        set: &ScenarioSet,
        risk: RiskParams,
        backend: &dyn MilpBackend,
    ) -> Result<FullSolveResult<Self::Decision>>;

    /// `f(z, ξ)`: the optimal second-stage cost of one scenario.
    fn recourse_cost(
        &self,
        z: &Self::Decision,
        scenario: &Scenario,
        backend: &dyn MilpBackend,
    ) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VppParams {
    pub dt_hours: f64,
    pub horizon: usize,
    pub es_power_kw: f64,
    pub es_energy_kwh: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    pub trade_cap_kw: Vec<f64>,
    /// `None` derives the cap from the scenario set, see [`VppParams::intraday_caps`].
    pub intraday_up_cap_kw: Option<f64>,
    pub intraday_down_cap_kw: Option<f64>,
    pub buy_markup: f64,
    pub sell_markdown: f64,
}

impl Default for VppParams {
    fn default() -> Self {
        Self::with_horizon(96, 0.25)
    }
}

impl VppParams {
    pub fn with_horizon(horizon: usize, dt_hours: f64) -> Self {
        Self {
            dt_hours,
            horizon,
            es_power_kw: 200.0,
            es_energy_kwh: 400.0,
            eta_c: 0.95,
            eta_d: 0.95,
            soc_min: 0.1,
            soc_max: 0.9,
            soc_init: 0.5,
            trade_cap_kw: vec![2000.0; horizon],
            intraday_up_cap_kw: None,
            intraday_down_cap_kw: None,
            buy_markup: 1.3,
            sell_markdown: 0.7,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(Error::param(m));
        if !(self.dt_hours > 0.0) || self.horizon == 0 {
            return fail(format!("dt_hours {} and horizon {} must be positive", self.dt_hours, self.horizon));
        }
        if self.trade_cap_kw.len() != self.horizon {
            return fail(format!(
                "trade_cap_kw has {} entries, horizon is {}",
                self.trade_cap_kw.len(),
                self.horizon
            ));
        }
        if self.trade_cap_kw.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return fail("trade caps must be positive and finite".into());
        }
        if !(self.es_power_kw > 0.0 && self.es_energy_kwh > 0.0) {
            return fail("storage power and energy must be positive".into());
        }
        for (name, e) in [("eta_c", self.eta_c), ("eta_d", self.eta_d)] {
            if !(e > 0.0 && e <= 1.0) {
                return fail(format!("{name} = {e} outside (0, 1]"));
            }
        }
        if !(0.0 <= self.soc_min
            && self.soc_min <= self.soc_init
            && self.soc_init <= self.soc_max
            && self.soc_max <= 1.0)
        {
            return fail(format!(
                "need 0 <= soc_min <= soc_init <= soc_max <= 1, got {} / {} / {}",
                self.soc_min, self.soc_init, self.soc_max
            ));
        }
        for cap in [self.intraday_up_cap_kw, self.intraday_down_cap_kw].into_iter().flatten() {
            if !(cap > 0.0) || !cap.is_finite() {
                return fail(format!("intraday cap {cap} must be positive and finite"));
            }
        }
        if !(self.buy_markup > 1.0 && 1.0 > self.sell_markdown && self.sell_markdown > 0.0) {
            return fail(format!(
                "need buy_markup > 1 > sell_markdown > 0, got {} and {}",
                self.buy_markup, self.sell_markdown
            ));
        }
        Ok(())
    }

    fn check_set(&self, set: &ScenarioSet) -> Result<()> {
        self.check()?;
        if set.horizon() != self.horizon {
            return Err(Error::InconsistentHorizon(format!(
                "scenarios have {} steps, model expects {}",
                set.horizon(),
                self.horizon
            )));
        }
        if (set.dt_hours() - self.dt_hours).abs() > 1e-12 {
            return Err(Error::InconsistentHorizon(format!(
                "scenario step {} h differs from model step {} h",
                set.dt_hours(),
                self.dt_hours
            )));
        }
        Ok(())
    }

    fn check_scenario(&self, s: &Scenario) -> Result<()> {
        if s.horizon() != self.horizon {
            return Err(Error::InconsistentHorizon(format!(
                "scenario has {} steps, model expects {}",
                s.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }

    /// Intraday (up, down) caps. Unset caps are derived so that any trade
    /// profile has a completion: the largest net exchange the balance can
    /// demand, `max|L| + max curtailable + P̄^E`, plus the largest trade.
    pub fn intraday_caps(&self, scenarios: &[&Scenario]) -> (f64, f64) {
        let mut need = 0.0f64;
        for s in scenarios {
            for t in 0..s.horizon() {
                need = need.max(s.net_load[t].abs() + s.curtailable(t));
            }
        }
        let trade = self.trade_cap_kw.iter().copied().fold(0.0, f64::max);
        let derived = need + self.es_power_kw + trade;
        (
            self.intraday_up_cap_kw.unwrap_or(derived),
            self.intraday_down_cap_kw.unwrap_or(derived),
        )
    }

    /// Solves the full problem on `set`.
    pub fn solve_full(
        &self,
        set: &ScenarioSet,
        risk: RiskParams,
        backend: &dyn MilpBackend,
    ) -> Result<FullSolveResult> {
        self.check_set(set)?;
        risk.check()?;
        let scenarios: Vec<&Scenario> = set.scenarios().iter().collect();
        let caps = self.intraday_caps(&scenarios);
        let out = solve_lazy(self, &scenarios, set.probabilities(), risk, None, caps, backend)?;
        let costs: Vec<f64> = out.recourse.iter().map(|r| r.cost).collect();
        let dec = evaluate_objective(&costs, set.probabilities(), risk)?;
        Ok(FullSolveResult {
            decision: FirstStageDecision { trade_kw: out.trade },
            objective: dec.objective,
            per_scenario_costs: costs,
            var_value: dec.var,
            milp_objective: out.milp_objective,
            gap: out.gap,
            recourse: out.recourse,
        })
    }

    /// Optimal second stage of one scenario under a fixed trade profile.
    pub fn solve_recourse(
        &self,
        z: &FirstStageDecision,
        scenario: &Scenario,
        backend: &dyn MilpBackend,
    ) -> Result<RecourseSolution> {
        self.check()?;
        self.check_scenario(scenario)?;
        z.check(self)?;
        let caps = self.intraday_caps(&[scenario]);
        let risk = RiskParams { lambda: 0.0, alpha: 0.5 };
        let out = solve_lazy(self, &[scenario], &[1.0], risk, Some(&z.trade_kw), caps, backend)?;
        Ok(out.recourse.into_iter().next().expect("one scenario"))
    }

    /// Settles every scenario under `z` (in parallel) and evaluates `F(z, ξ)`.
    pub fn validate(
        &self,
        z: &FirstStageDecision,
        set: &ScenarioSet,
        risk: RiskParams,
        backend: &dyn MilpBackend,
    ) -> Result<(ProjectedObjectives, RiskDecomposition)> {
        validate(self, z, set, risk, backend)
    }
}

impl TwoStageProblem for VppParams {
    type Decision = FirstStageDecision;

    fn solve_full(
        &self,
        set: &ScenarioSet,
        risk: RiskParams,
        backend: &dyn MilpBackend,
    ) -> Result<FullSolveResult> {
        VppParams::solve_full(self, set, risk, backend)
    }

    fn recourse_cost(
        &self,
        z: &FirstStageDecision,
        scenario: &Scenario,
        backend: &dyn MilpBackend,
    ) -> Result<f64> {
        Ok(self.solve_recourse(z, scenario, backend)?.cost)
    }
}

/// Evaluates `F(z, ξ)` by settling each scenario independently. Results are
/// keyed by scenario index, so the outcome does not depend on scheduling.
pub fn validate<P: TwoStageProblem + ?Sized>(
    problem: &P,
    z: &P::Decision,
    set: &ScenarioSet,
    risk: RiskParams,
    backend: &dyn MilpBackend,
) -> Result<(ProjectedObjectives, RiskDecomposition)> {
    risk.check()?;
    let costs = recourse_costs(problem, z, set, backend)?;
    let proj = project(&costs, set.probabilities(), risk.alpha)?;
    let dec = crate::risk::decompose(&proj, risk);
    Ok((proj, dec))
}

/// `f(z, ξ_i)` for every scenario, in scenario order.
pub fn recourse_costs<P: TwoStageProblem + ?Sized>(
    problem: &P,
    z: &P::Decision,
    set: &ScenarioSet,
    backend: &dyn MilpBackend,
) -> Result<Vec<f64>> {
    set.scenarios().par_iter().map(|s| problem.recourse_cost(z, s, backend)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageDecision {
    pub trade_kw: Vec<f64>,
}

impl FirstStageDecision {
    pub fn new(trade_kw: Vec<f64>) -> Self {
        Self { trade_kw }
    }

    pub fn zeros(horizon: usize) -> Self {
        Self { trade_kw: vec![0.0; horizon] }
    }

    pub fn check(&self, p: &VppParams) -> Result<()> {
        if self.trade_kw.len() != p.horizon {
            return Err(Error::InconsistentHorizon(format!(
                "decision has {} steps, model expects {}",
                self.trade_kw.len(),
                p.horizon
            )));
        }
        for (t, (&x, &cap)) in self.trade_kw.iter().zip(&p.trade_cap_kw).enumerate() {
            if !x.is_finite() || x.abs() > cap + 1e-6 {
                return Err(Error::param(format!("trade {x} at step {t} exceeds cap {cap}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseSolution {
    pub cost: f64,
    pub intraday_up: Vec<f64>,
    pub intraday_down: Vec<f64>,
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    pub curtail: Vec<f64>,
    pub soc: Vec<f64>,
    /// `D^E`: true when the unit may discharge (and may not charge).
    pub charge_state: Vec<bool>,
    /// `D^T`: true when intraday purchases are allowed (sales are not).
    pub trade_state: Vec<bool>,
}

impl RecourseSolution {
    /// Largest residual over every constraint of the second stage, including
    /// the binary-enforced complementarities.
    pub fn max_violation(&self, z: &FirstStageDecision, s: &Scenario, p: &VppParams) -> f64 {
        let t_len = p.horizon;
        let (cap_up, cap_down) = p.intraday_caps(&[s]);
        let mut worst = 0.0f64;
        let mut see = |v: f64| worst = worst.max(v);
        let below = |x: f64, ub: f64| (x - ub).max(0.0);
        let mut energy = 0.0;
        let mut cost = 0.0;
        for t in 0..t_len {
            let (up, down, c, d, r) =
                (self.intraday_up[t], self.intraday_down[t], self.charge[t], self.discharge[t], self.curtail[t]);
            for x in [up, down, c, d, r] {
                see((-x).max(0.0));
            }
            let de = self.charge_state[t] as u8 as f64;
            let dt = self.trade_state[t] as u8 as f64;
            see(below(c, (1.0 - de) * p.es_power_kw));
            see(below(d, de * p.es_power_kw));
            see(below(up, dt * cap_up));
            see(below(down, (1.0 - dt) * cap_down));
            see(below(r, s.curtailable(t)));
            let exch = z.trade_kw[t] + up - down;
            see(below(exch.abs(), p.trade_cap_kw[t]));
            see((s.net_load[t] + r + c - d - exch).abs());
            let delta = p.dt_hours * (c * p.eta_c - d / p.eta_d);
            see((self.soc[t + 1] - self.soc[t] - delta / p.es_energy_kwh).abs());
            see(below(p.soc_min, self.soc[t + 1]));
            see(below(self.soc[t + 1], p.soc_max));
            energy += delta;
            cost += p.dt_hours * s.price[t] * (z.trade_kw[t] + p.buy_markup * up - p.sell_markdown * down);
        }
        see((self.soc[0] - p.soc_init).abs());
        see(energy.abs());
        see((cost - self.cost).abs() / cost.abs().max(1.0));
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSolveResult<D = FirstStageDecision> {
    pub decision: D,
    /// `F(z*, ·)` re-evaluated from the per-scenario costs.
    pub objective: f64,
    pub per_scenario_costs: Vec<f64>,
    pub var_value: f64,
    /// Objective reported by the solver before re-evaluation.
    pub milp_objective: f64,
    pub gap: f64,
    #[serde(skip)]
    pub recourse: Vec<RecourseSolution>,
}

impl<D: Serialize> FullSolveResult<D> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json_atomic(path, self)
    }
}

struct ScenarioVars {
    up: Vec<Var>,
    down: Vec<Var>,
    charge: Vec<Var>,
    discharge: Vec<Var>,
    curtail: Vec<Var>,
    soc: Vec<Var>,
}

struct Layout {
    trade: Option<Vec<Var>>,
    scen: Vec<ScenarioVars>,
}

/// (scenario, step) pairs that carry a complementarity binary.
#[derive(Default)]
struct BinaryPairs {
    storage: BTreeSet<(usize, usize)>,
    intraday: BTreeSet<(usize, usize)>,
}

fn build(
    p: &VppParams,
    scenarios: &[&Scenario],
    weights: &[f64],
    risk: RiskParams,
    fixed_trade: Option<&[f64]>,
    (cap_up, cap_down): (f64, f64),
    bins: &BinaryPairs,
) -> (MilpModel, Layout) {
    let t_len = p.horizon;
    let dt = p.dt_hours;
    let mut m = MilpModel::new();
    let trade: Option<Vec<Var>> = match fixed_trade {
        Some(_) => None,
        None => Some(
            (0..t_len)
                .map(|t| m.add_continuous(format!("trade_{t}"), -p.trade_cap_kw[t], p.trade_cap_kw[t]))
                .collect(),
        ),
    };
    let with_cvar = risk.lambda > 0.0;
    let v = with_cvar.then(|| m.add_continuous("var", f64::NEG_INFINITY, f64::INFINITY));
    let mut objective: Vec<(Var, f64)> = Vec::new();
    if let Some(v) = v {
        objective.push((v, risk.lambda));
    }
    let tail = risk.lambda / (1.0 - risk.alpha);
    let mut scen = Vec::with_capacity(scenarios.len());
    for (i, s) in scenarios.iter().enumerate() {
        let up: Vec<Var> = (0..t_len).map(|t| m.add_continuous(format!("up_{i}_{t}"), 0.0, cap_up)).collect();
        let down: Vec<Var> =
            (0..t_len).map(|t| m.add_continuous(format!("down_{i}_{t}"), 0.0, cap_down)).collect();
        let charge: Vec<Var> =
            (0..t_len).map(|t| m.add_continuous(format!("ch_{i}_{t}"), 0.0, p.es_power_kw)).collect();
        let discharge: Vec<Var> =
            (0..t_len).map(|t| m.add_continuous(format!("dis_{i}_{t}"), 0.0, p.es_power_kw)).collect();
        let curtail: Vec<Var> = (0..t_len)
            .map(|t| m.add_continuous(format!("curt_{i}_{t}"), 0.0, s.curtailable(t)))
            .collect();
        let soc: Vec<Var> = (0..=t_len)
            .map(|t| {
                if t == 0 {
                    m.add_continuous(format!("soc_{i}_0"), p.soc_init, p.soc_init)
                } else {
                    m.add_continuous(format!("soc_{i}_{t}"), p.soc_min, p.soc_max)
                }
            })
            .collect();
        let cost = m.add_continuous(format!("cost_{i}"), f64::NEG_INFINITY, f64::INFINITY);

        let mut cost_terms = vec![(cost, 1.0)];
        let mut cost_rhs = 0.0;
        let mut terminal = Vec::with_capacity(2 * t_len);
        for t in 0..t_len {
            let price = s.price[t];
            cost_terms.push((up[t], -dt * price * p.buy_markup));
            cost_terms.push((down[t], dt * price * p.sell_markdown));
            match (&trade, fixed_trade) {
                (Some(tr), _) => cost_terms.push((tr[t], -dt * price)),
                (None, Some(z)) => cost_rhs += dt * price * z[t],
                (None, None) => unreachable!(),
            }
            // SoC recursion
            m.eq(
                format!("soc_{i}_{t}"),
                vec![
                    (soc[t + 1], 1.0),
                    (soc[t], -1.0),
                    (charge[t], -dt * p.eta_c / p.es_energy_kwh),
                    (discharge[t], dt / (p.eta_d * p.es_energy_kwh)),
                ],
                0.0,
            );
            terminal.push((charge[t], dt * p.eta_c));
            terminal.push((discharge[t], -dt / p.eta_d));
            // exchange with the grid and power balance
            let mut exch = vec![(up[t], 1.0), (down[t], -1.0)];
            let mut offset = 0.0;
            match (&trade, fixed_trade) {
                (Some(tr), _) => exch.push((tr[t], 1.0)),
                (None, Some(z)) => offset = z[t],
                (None, None) => unreachable!(),
            }
            m.le(format!("gridhi_{i}_{t}"), exch.clone(), p.trade_cap_kw[t] - offset);
            m.ge(format!("gridlo_{i}_{t}"), exch.clone(), -p.trade_cap_kw[t] - offset);
            let mut bal = vec![(curtail[t], 1.0), (charge[t], 1.0), (discharge[t], -1.0)];
            bal.extend(exch.iter().map(|&(x, a)| (x, -a)));
            m.eq(format!("bal_{i}_{t}"), bal, offset - s.net_load[t]);

            if bins.storage.contains(&(i, t)) {
                let d = m.add_binary(format!("de_{i}_{t}"));
                m.le(format!("chs_{i}_{t}"), vec![(charge[t], 1.0), (d, p.es_power_kw)], p.es_power_kw);
                m.le(format!("dis_{i}_{t}"), vec![(discharge[t], 1.0), (d, -p.es_power_kw)], 0.0);
            }
            if bins.intraday.contains(&(i, t)) {
                let d = m.add_binary(format!("dt_{i}_{t}"));
                m.le(format!("ups_{i}_{t}"), vec![(up[t], 1.0), (d, -cap_up)], 0.0);
                m.le(format!("dns_{i}_{t}"), vec![(down[t], 1.0), (d, cap_down)], cap_down);
            }
        }
        m.eq(format!("cost_{i}"), cost_terms, cost_rhs);
        m.eq(format!("term_{i}"), terminal, 0.0);

        objective.push((cost, weights[i]));
        if let Some(v) = v {
            let sh = m.add_continuous(format!("short_{i}"), 0.0, f64::INFINITY);
            m.ge(format!("cvar_{i}"), vec![(sh, 1.0), (cost, -1.0), (v, 1.0)], 0.0);
            objective.push((sh, tail * weights[i]));
        }
        scen.push(ScenarioVars { up, down, charge, discharge, curtail, soc });
    }
    m.set_objective(objective, 0.0);
    (m, Layout { trade, scen })
}

struct LazyOutcome {
    trade: Vec<f64>,
    recourse: Vec<RecourseSolution>,
    milp_objective: f64,
    gap: f64,
}

fn solve_lazy(
    p: &VppParams,
    scenarios: &[&Scenario],
    weights: &[f64],
    risk: RiskParams,
    fixed_trade: Option<&[f64]>,
    caps: (f64, f64),
    backend: &dyn MilpBackend,
) -> Result<LazyOutcome> {
    let mut bins = BinaryPairs::default();
    let opts = SolveOptions::default();
    loop {
        let (model, layout) = build(p, scenarios, weights, risk, fixed_trade, caps, &bins);
        let sol = backend.solve(&model, &opts)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible(
                    "no feasible recourse; the intraday or trade caps are too tight for this data".into(),
                ))
            }
            other => return Err(Error::Solver(crate::milp::MilpError::Backend(format!("status {other:?}")))),
        }
        let x = &sol.values;
        let mut added = false;
        for (i, sv) in layout.scen.iter().enumerate() {
            for t in 0..p.horizon {
                if x[sv.charge[t].index()].min(x[sv.discharge[t].index()]) > COMPLEMENTARITY_TOL
                    && bins.storage.insert((i, t))
                {
                    added = true;
                }
                if x[sv.up[t].index()].min(x[sv.down[t].index()]) > COMPLEMENTARITY_TOL
                    && bins.intraday.insert((i, t))
                {
                    added = true;
                }
            }
        }
        if added {
            continue;
        }
        let trade: Vec<f64> = match (&layout.trade, fixed_trade) {
            (Some(tr), _) => tr.iter().map(|v| x[v.index()]).collect(),
            (None, Some(z)) => z.to_vec(),
            (None, None) => unreachable!(),
        };
        let recourse = layout
            .scen
            .iter()
            .zip(scenarios)
            .map(|(sv, s)| extract(p, s, sv, &trade, x))
            .collect();
        return Ok(LazyOutcome { trade, recourse, milp_objective: sol.objective_value, gap: sol.gap });
    }
}

fn extract(p: &VppParams, s: &Scenario, sv: &ScenarioVars, trade: &[f64], x: &[f64]) -> RecourseSolution {
    let get = |vs: &[Var]| -> Vec<f64> { vs.iter().map(|v| x[v.index()].max(0.0)).collect() };
    let mut up = get(&sv.up);
    let mut down = get(&sv.down);
    let mut charge = get(&sv.charge);
    let mut discharge = get(&sv.discharge);
    let curtail = get(&sv.curtail);
    let soc: Vec<f64> = sv.soc.iter().map(|v| x[v.index()]).collect();
    let mut charge_state = Vec::with_capacity(p.horizon);
    let mut trade_state = Vec::with_capacity(p.horizon);
    let mut cost = 0.0;
    for t in 0..p.horizon {
        // removing the common part keeps the net exchange unchanged
        let common = up[t].min(down[t]);
        up[t] -= common;
        down[t] -= common;
        if charge[t] <= discharge[t] {
            charge[t] = 0.0;
        } else {
            discharge[t] = 0.0;
        }
        charge_state.push(discharge[t] > 0.0);
        trade_state.push(up[t] > 0.0);
        cost += p.dt_hours * s.price[t] * (trade[t] + p.buy_markup * up[t] - p.sell_markdown * down[t]);
    }
    RecourseSolution { cost, intraday_up: up, intraday_down: down, charge, discharge, curtail, soc, charge_state, trade_state }
}
