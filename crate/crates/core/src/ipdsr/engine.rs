use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, tail_count};
use super::heuristic::construct as construct_start;
use super::partition::{accept_point, build_partition_mip, solve_partition};
use crate::baselines::kmeans_run;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::milp::{MilpBackend, SolveOptions};
use crate::risk::{ProjectedObjectives, RiskDecomposition, RiskParams};
use crate::scenario::{ReducedScenarioSet, ScenarioSet};
use crate::vpp::{validate, FullSolveResult, TwoStageProblem};

/// Consecutive iterations without relative improvement before stopping.
pub const STAGNATION_ITERS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpdsrConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Number of aggregated atoms `N'` fed to the partition model.
    pub agg_size: usize,
    /// k-means initializations; restart `r` uses seed `seed + r`.
    pub restarts: usize,
    pub rel_improve_tol: f64,
    pub mip_time_limit_s: f64,
    pub mip_rel_gap: f64,
    pub seed: u64,
}

impl Default for IpdsrConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_iter: 10,
            agg_size: 100,
            restarts: 5,
            rel_improve_tol: 1e-4,
            mip_time_limit_s: 60.0,
            mip_rel_gap: 1e-4,
            seed: 0,
        }
    }
}

impl IpdsrConfig {
    pub fn check(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::param(format!("k = {} must lie in 1..={n}", self.k)));
        }
        if self.agg_size < self.k {
            return Err(Error::param(format!("agg_size {} is smaller than k = {}", self.agg_size, self.k)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if !(self.mip_time_limit_s > 0.0) || !(self.mip_rel_gap >= 0.0) || !(self.rel_improve_tol >= 0.0) {
            return Err(Error::param("time limit must be positive, gaps and tolerances non-negative"));
        }
        Ok(())
    }
}

/// A reduction together with its reduced-problem solution and validation.
#[derive(Debug, Clone)]
pub struct Iterate<D> {
    pub reduction: ReducedScenarioSet,
    pub solve: FullSolveResult<D>,
    pub projection: ProjectedObjectives,
    pub validation: RiskDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `F(z*_ζκ, ξ)`.
    pub validation_objective: f64,
    /// Partition objective that produced this iterate (`None` for the start).
    pub og_surrogate: Option<f64>,
    pub var_value: f64,
    pub representatives: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    /// Minimum validation objective seen up to each record.
    pub fn running_min(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.validation_objective);
                best
            })
            .collect()
    }

    /// CSV with the OG% column filled when the benchmark objective is known.
    pub fn to_table(&self, benchmark: Option<f64>) -> CsvTable {
        let mut t = CsvTable::new(["iteration", "validation_objective", "og_percent", "var_value"]);
        for r in &self.records {
            let og = benchmark
                .filter(|b| *b > 0.0)
                .map(|b| 100.0 * (r.validation_objective - b) / b)
                .unwrap_or(f64::NAN);
            t.push_row([r.iteration.to_string(), fmt_f64(r.validation_objective), fmt_f64(og), fmt_f64(r.var_value)]);
        }
        t
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, benchmark: Option<f64>) -> Result<()> {
        self.to_table(benchmark).write_atomic(path)
    }
}

/// Wall-clock split of an iteration loop: reduced solves plus projections,
/// and aggregation plus partition solves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IpdsrTimings {
    pub projection_s: f64,
    pub partition_s: f64,
}

#[derive(Debug, Clone)]
pub struct IpdsrOutcome<D> {
    pub best: Iterate<D>,
    pub initial: Iterate<D>,
    pub trace: IterationTrace,
    /// Excludes the initialization.
    pub timings: IpdsrTimings,
}

fn evaluate<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    reduction: ReducedScenarioSet,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
) -> Result<Iterate<P::Decision>> {
    let reduced = reduction.materialize(set)?;
    let solve = problem.solve_full(&reduced, risk, backend)?;
    let (projection, validation) = validate(problem, &solve.decision, set, risk, backend)?;
    Ok(Iterate { reduction, solve, projection, validation })
}

/// k-means initialization; the restart with the smallest validated
/// objective wins (earlier restart on ties).
pub fn initialize<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    cfg: &IpdsrConfig,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
) -> Result<Iterate<P::Decision>> {
    cfg.check(set.len())?;
    let mut best: Option<Iterate<P::Decision>> = None;
    let mut tried: Vec<ReducedScenarioSet> = Vec::new();
    for r in 0..cfg.restarts.max(1) {
        let run = kmeans_run(set, cfg.k, cfg.seed.wrapping_add(r as u64))?;
        if tried.iter().any(|t| t.same_partition(&run.reduction)) {
            continue;
        }
        tried.push(run.reduction.clone());
        let it = evaluate(set, run.reduction, problem, risk, backend)?;
        debug!("init restart {r}: validation {}", it.validation.objective);
        if best.as_ref().is_none_or(|b| it.validation.objective < b.validation.objective) {
            best = Some(it);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Iterative problem-driven reduction starting from the k-means iterate.
pub fn run<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    cfg: &IpdsrConfig,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
) -> Result<IpdsrOutcome<P::Decision>> {
    let initial = initialize(set, cfg, problem, risk, backend)?;
    run_from(set, cfg, problem, risk, backend, initial)
}

/// Iterates from a given starting point.
pub fn run_from<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    cfg: &IpdsrConfig,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
    initial: Iterate<P::Decision>,
) -> Result<IpdsrOutcome<P::Decision>> {
    cfg.check(set.len())?;
    let n = set.len();
    let mut trace = IterationTrace::default();
    trace.records.push(IterationRecord {
        iteration: 0,
        validation_objective: initial.validation.objective,
        og_surrogate: None,
        var_value: initial.validation.var,
        representatives: initial.reduction.source_ids().to_vec(),
    });
    let mut best = initial.clone();
    let mut current = initial.clone();
    let mut seen: Vec<ReducedScenarioSet> = vec![initial.reduction.clone()];
    let mut stagnant = 0;
    let mut timings = IpdsrTimings::default();
    for kappa in 1..=cfg.max_iter {
        let clock = Instant::now();
        let proj = &current.projection;
        let n_prime = cfg.agg_size.max(tail_count(proj) + 1).max(cfg.k).min(n);
        let agg = aggregate(proj, n_prime)?;
        let mip = build_partition_mip(&agg, cfg.k, risk, proj.var_value)?;
        let scale: f64 = agg.values.iter().zip(&agg.probabilities).map(|(f, g)| g * f.abs()).sum();
        let abs_gap = cfg.mip_rel_gap * scale.max(1e-9);
        let start = construct_start(&agg, cfg.k, risk, proj.var_value, abs_gap).and_then(|(assign, var, e)| {
            mip.point(&agg, risk, proj.var_value, &assign, var).map(|x| (x, e))
        });
        let part = match start {
            Some((x, e)) if e.abs() <= abs_gap => {
                debug!("iteration {kappa}: constructed start is within the gap ({e:.3e})");
                accept_point(&mip, x, &agg, proj)?
            }
            start => {
                let warm_start = start.map(|(x, _)| x);
                let opts = SolveOptions { time_limit_s: cfg.mip_time_limit_s, rel_gap: cfg.mip_rel_gap, abs_gap, warm_start };
                solve_partition(&mip, backend, &opts, &agg, proj)?
            }
        };
        let reduction = part.to_reduced(set)?;
        timings.partition_s += clock.elapsed().as_secs_f64();
        if seen.iter().any(|r| r.same_partition(&reduction)) {
            info!("iteration {kappa}: partition repeats an earlier reduction, stopping");
            break;
        }
        seen.push(reduction.clone());
        let clock = Instant::now();
        let next = evaluate(set, reduction, problem, risk, backend)?;
        timings.projection_s += clock.elapsed().as_secs_f64();
        info!(
            "iteration {kappa}: partition objective {:.6}, validation {:.6}",
            part.objective_value, next.validation.objective
        );
        trace.records.push(IterationRecord {
            iteration: kappa,
            validation_objective: next.validation.objective,
            og_surrogate: Some(part.objective_value),
            var_value: next.validation.var,
            representatives: next.reduction.source_ids().to_vec(),
        });
        let prev_best = best.validation.objective;
        if next.validation.objective < prev_best {
            best = next.clone();
        }
        let gain = (prev_best - best.validation.objective) / prev_best.abs().max(1e-12);
        stagnant = if gain < cfg.rel_improve_tol { stagnant + 1 } else { 0 };
        current = next;
        if stagnant >= STAGNATION_ITERS {
            break;
        }
    }
    Ok(IpdsrOutcome { best, initial, trace, timings })
}
