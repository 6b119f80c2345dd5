//! Ex-post indices for a reduction and method comparison reports.
//!
//! Every index is computed against the benchmark, i.e. the problem solved on
//! the full set: the optimality gap of the reduced decision, the distance
//! between the two validation distributions, the effect of dropping each
//! representative, and how many representatives sit in the benchmark tail.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, DistanceKind};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::ipdsr::{self, IpdsrConfig, IterationTrace};
use crate::milp::{MilpBackend, SolveOptions};
use crate::pdsr;
use crate::risk::{ProjectedObjectives, RiskDecomposition, RiskParams};
use crate::scenario::{ReducedScenarioSet, ScenarioSet};
use crate::vpp::{validate, FullSolveResult, TwoStageProblem};

/// `Σ_i γ_(i) |a_(i) − b_(i)|` where both sequences are sorted by their own
/// order and paired by rank; weights follow the benchmark's sorted order.
pub fn wd_validation(reduced: &ProjectedObjectives, benchmark: &ProjectedObjectives) -> Result<f64> {
    if reduced.len() != benchmark.len() {
        return Err(Error::param(format!(
            "validation lengths differ: {} vs {}",
            reduced.len(),
            benchmark.len()
        )));
    }
    let a = reduced.sorted_values();
    let b = benchmark.sorted_values();
    let g = benchmark.sorted_probabilities();
    Ok(a.iter().zip(&b).zip(&g).map(|((x, y), w)| w * (x - y).abs()).sum())
}

/// `100·(F(z*_ζ, ξ) − F(z*_ξ, ξ)) / F(z*_ξ, ξ)`.
pub fn og_percent(validation: &RiskDecomposition, benchmark: &RiskDecomposition) -> Result<f64> {
    og_from(validation.objective, benchmark.objective)
}

fn og_from(value: f64, benchmark: f64) -> Result<f64> {
    if !(benchmark > 0.0) {
        return Err(Error::NonPositiveBaseline(benchmark));
    }
    Ok(100.0 * (value - benchmark) / benchmark)
}

/// Representatives whose benchmark-validation cost lies strictly above the
/// benchmark VaR.
pub fn worst_case_capture(reduced: &ReducedScenarioSet, benchmark: &ProjectedObjectives) -> usize {
    reduced.source_ids().iter().filter(|&&i| benchmark.values[i] > benchmark.var_value).count()
}

/// Change in OG% when each representative is removed and the remaining
/// weights are rescaled to sum to one.
pub fn scenario_effectiveness<P: TwoStageProblem + ?Sized>(
    reduced: &ReducedScenarioSet,
    original: &ScenarioSet,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
    benchmark: &RiskDecomposition,
) -> Result<Vec<f64>> {
    let k = reduced.k();
    if k < 2 {
        return Err(Error::param("scenario effectiveness needs at least two representatives"));
    }
    let og_of = |ids: &[usize], weights: &[f64]| -> Result<f64> {
        let sub = original.subset(ids, weights)?;
        let solve = problem.solve_full(&sub, risk, backend)?;
        let (_, dec) = validate(problem, &solve.decision, original, risk, backend)?;
        og_percent(&dec, benchmark)
    };
    let base = og_of(reduced.source_ids(), reduced.weights())?;
    (0..k)
        .map(|drop| {
            let keep: Vec<usize> = (0..k).filter(|&j| j != drop).collect();
            let rest = 1.0 - reduced.weights()[drop];
            let ids: Vec<usize> = keep.iter().map(|&j| reduced.source_ids()[j]).collect();
            let weights: Vec<f64> = keep.iter().map(|&j| reduced.weights()[j] / rest).collect();
            Ok(og_of(&ids, &weights)? - base)
        })
        .collect()
}

/// The full problem and its validation on the full set.
#[derive(Debug, Clone)]
pub struct Benchmark<D> {
    pub solve: FullSolveResult<D>,
    pub projection: ProjectedObjectives,
    pub validation: RiskDecomposition,
    pub solve_s: f64,
}

pub fn benchmark<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
) -> Result<Benchmark<P::Decision>> {
    let clock = Instant::now();
    let solve = problem.solve_full(set, risk, backend)?;
    let solve_s = clock.elapsed().as_secs_f64();
    let (projection, validation) = validate(problem, &solve.decision, set, risk, backend)?;
    Ok(Benchmark { solve, projection, validation, solve_s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ipdsr,
    Kmeans,
    HcE,
    HcW,
    Pdsr,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ipdsr, Method::Kmeans, Method::HcE, Method::HcW, Method::Pdsr];

    pub fn key(self) -> &'static str {
        match self {
            Method::Ipdsr => "ipdsr",
            Method::Kmeans => "kmeans",
            Method::HcE => "hc-e",
            Method::HcW => "hc-w",
            Method::Pdsr => "pdsr",
        }
    }

    /// Name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ipdsr => "IPDSR",
            Method::Kmeans => "KM-E",
            Method::HcE => "HC-E",
            Method::HcW => "HC-W",
            Method::Pdsr => "PDSR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key().eq_ignore_ascii_case(s) || m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    /// Settings shared by every method; `ipdsr.k` is overridden by `k`.
    pub k: usize,
    pub seed: u64,
    pub ipdsr: IpdsrConfig,
    pub kmeans_restarts: usize,
    pub pdsr_time_limit_s: f64,
    /// Also compute the per-representative effectiveness (K extra solves).
    pub scenario_effectiveness: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            ipdsr: IpdsrConfig::default(),
            kmeans_restarts: 5,
            pdsr_time_limit_s: 600.0,
            scenario_effectiveness: false,
        }
    }
}

/// Preparation, clustering and mean per-scenario subproblem time in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub tau_p: f64,
    pub tau_c: f64,
    pub tau_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub n: usize,
    pub k: usize,
    pub wd: f64,
    pub og_percent: f64,
    pub se_per_rep: Vec<f64>,
    pub worst_case_captured: usize,
    pub timings: Timings,
    /// `ok` or `failed: <reason>`.
    pub status: String,
}

impl EvaluationReport {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(method: Method, n: usize, k: usize, err: &Error) -> Self {
        Self {
            method: method.label().into(),
            n,
            k,
            wd: f64::NAN,
            og_percent: f64::NAN,
            se_per_rep: Vec::new(),
            worst_case_captured: 0,
            timings: Timings::default(),
            status: format!("failed: {err}"),
        }
    }
}

/// A reduction produced by one method, before evaluation.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub reduction: ReducedScenarioSet,
    pub tau_p: f64,
    pub tau_c: f64,
    pub trace: Option<IterationTrace>,
}

pub fn reduce_with<P: TwoStageProblem + ?Sized>(
    method: Method,
    set: &ScenarioSet,
    cfg: &CompareConfig,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
) -> Result<MethodOutput> {
    let k = cfg.k;
    let clock = Instant::now();
    let out = match method {
        Method::Ipdsr => {
            let icfg = IpdsrConfig { k, seed: cfg.seed, ..cfg.ipdsr.clone() };
            let initial = ipdsr::initialize(set, &icfg, problem, risk, backend)?;
            let init_s = clock.elapsed().as_secs_f64();
            let run = ipdsr::run_from(set, &icfg, problem, risk, backend, initial)?;
            MethodOutput {
                reduction: run.best.reduction,
                tau_p: init_s + run.timings.projection_s,
                tau_c: run.timings.partition_s,
                trace: Some(run.trace),
            }
        }
        Method::Kmeans | Method::HcE | Method::HcW => {
            let prep = match method {
                Method::Kmeans => {
                    baselines::features(set);
                    clock.elapsed().as_secs_f64()
                }
                Method::HcE => {
                    baselines::distance_matrix(set, DistanceKind::EuclideanFlat);
                    clock.elapsed().as_secs_f64()
                }
                _ => {
                    baselines::distance_matrix(set, DistanceKind::Wasserstein1d);
                    clock.elapsed().as_secs_f64()
                }
            };
            let clock = Instant::now();
            let reduction = match method {
                Method::Kmeans => baselines::kmeans_reduce(set, k, cfg.seed, cfg.kmeans_restarts)?,
                Method::HcE => baselines::hierarchical_reduce(set, k, DistanceKind::EuclideanFlat)?,
                _ => baselines::hierarchical_reduce(set, k, DistanceKind::Wasserstein1d)?,
            };
            // the reduce call recomputes its inputs, so only the remainder counts
            let tau_c = (clock.elapsed().as_secs_f64() - prep).max(0.0);
            MethodOutput { reduction, tau_p: prep, tau_c, trace: None }
        }
        Method::Pdsr => {
            if set.len() > pdsr::MIP_CAP {
                return Err(Error::DeskScaleCap { what: "bound MIP", n: set.len(), cap: pdsr::MIP_CAP });
            }
            let matrix = pdsr::build_pairwise_matrix(set, problem, risk, backend)?;
            let dist = pdsr::distance(&matrix);
            let tau_p = clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let mip = pdsr::build_bound_mip(&dist, set.probabilities(), k, risk)?;
            let opts = SolveOptions::with_limits(cfg.pdsr_time_limit_s, 1e-6);
            let sol = pdsr::solve_bound_mip(&mip, set.probabilities(), backend, &opts)?;
            let reduction = sol.to_reduced(set)?;
            MethodOutput { reduction, tau_p, tau_c: clock.elapsed().as_secs_f64(), trace: None }
        }
    };
    Ok(out)
}

/// A method's report together with the artefacts used for plot data.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub report: EvaluationReport,
    pub reduction: Option<ReducedScenarioSet>,
    pub validation: Option<ProjectedObjectives>,
    pub trace: Option<IterationTrace>,
}

/// Evaluates a finished reduction against the benchmark.
pub fn evaluate_reduction<P: TwoStageProblem + ?Sized>(
    method: Method,
    output: MethodOutput,
    set: &ScenarioSet,
    cfg: &CompareConfig,
    problem: &P,
    risk: RiskParams,
    backend: &dyn MilpBackend,
    bench: &Benchmark<P::Decision>,
) -> Result<MethodRun> {
    let reduced = output.reduction.materialize(set)?;
    let solve = problem.solve_full(&reduced, risk, backend)?;
    let clock = Instant::now();
    let (projection, validation) = validate(problem, &solve.decision, set, risk, backend)?;
    let tau_s = clock.elapsed().as_secs_f64() / set.len() as f64;
    let se_per_rep = if cfg.scenario_effectiveness && output.reduction.k() >= 2 {
        scenario_effectiveness(&output.reduction, set, problem, risk, backend, &bench.validation)?
    } else {
        Vec::new()
    };
    let report = EvaluationReport {
        method: method.label().into(),
        n: set.len(),
        k: output.reduction.k(),
        wd: wd_validation(&projection, &bench.projection)?,
        og_percent: og_percent(&validation, &bench.validation)?,
        se_per_rep,
        worst_case_captured: worst_case_capture(&output.reduction, &bench.projection),
        timings: Timings { tau_p: output.tau_p, tau_c: output.tau_c, tau_s },
        status: "ok".into(),
    };
    Ok(MethodRun { method, report, reduction: Some(output.reduction), validation: Some(projection), trace: output.trace })
}

/// Runs and evaluates every method in order. A failing method yields a row
/// marked failed instead of aborting the comparison.
pub fn compare_methods<P: TwoStageProblem + ?Sized>(
    set: &ScenarioSet,
    methods: &[Method],
    problem: &P,
    risk: RiskParams,
    cfg: &CompareConfig,
    backend: &dyn MilpBackend,
    bench: &Benchmark<P::Decision>,
) -> Vec<MethodRun> {
    methods
        .iter()
        .map(|&method| {
            reduce_with(method, set, cfg, problem, risk, backend)
                .and_then(|out| evaluate_reduction(method, out, set, cfg, problem, risk, backend, bench))
                .unwrap_or_else(|err| {
                    warn!("{method}: {err}");
                    MethodRun {
                        method,
                        report: EvaluationReport::failed(method, set.len(), cfg.k, &err),
                        reduction: None,
                        validation: None,
                        trace: None,
                    }
                })
        })
        .collect()
}

pub fn report_table<'a>(reports: impl IntoIterator<Item = &'a EvaluationReport>) -> CsvTable {
    let mut t = CsvTable::new([
        "method",
        "n",
        "k",
        "rho",
        "wd",
        "og_percent",
        "tau_p_s",
        "tau_c_s",
        "tau_s_s",
        "status",
    ]);
    for r in reports {
        t.push_row([
            r.method.clone(),
            r.n.to_string(),
            r.k.to_string(),
            r.worst_case_captured.to_string(),
            fmt_f64(r.wd),
            fmt_f64(r.og_percent),
            fmt_f64(r.timings.tau_p),
            fmt_f64(r.timings.tau_c),
            fmt_f64(r.timings.tau_s),
            r.status.clone(),
        ]);
    }
    t
}

/// Histogram of the benchmark validation costs with `bins` equal-width bins.
pub fn histogram_table(benchmark: &ProjectedObjectives, bins: usize) -> CsvTable {
    let bins = bins.max(1);
    let sorted = benchmark.sorted_values();
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut mass = vec![0.0; bins];
    for (f, g) in benchmark.values.iter().zip(&benchmark.probabilities) {
        let b = (((f - lo) / width) as usize).min(bins - 1);
        mass[b] += g;
    }
    let mut t = CsvTable::new(["bin_lo", "bin_hi", "probability"]);
    for (b, m) in mass.iter().enumerate() {
        let a = lo + b as f64 * width;
        t.push_row([fmt_f64(a), fmt_f64(a + width), fmt_f64(*m)]);
    }
    t
}

/// Representatives of each method positioned on the benchmark validation.
pub fn marker_table(benchmark: &ProjectedObjectives, runs: &[MethodRun]) -> CsvTable {
    let mut t = CsvTable::new(["method", "scenario", "benchmark_value", "weight", "beyond_var"]);
    for run in runs {
        let Some(red) = &run.reduction else { continue };
        for (&id, &w) in red.source_ids().iter().zip(red.weights()) {
            let v = benchmark.values[id];
            t.push_row([
                run.method.label().to_string(),
                id.to_string(),
                fmt_f64(v),
                fmt_f64(w),
                (v > benchmark.var_value).to_string(),
            ]);
        }
    }
    t
}

/// Empirical CDFs of the benchmark validation and of each method's validation.
pub fn cdf_table(benchmark: &ProjectedObjectives, runs: &[MethodRun]) -> CsvTable {
    let mut t = CsvTable::new(["method", "value", "cumulative_probability"]);
    let mut push = |label: &str, p: &ProjectedObjectives| {
        let mut acc = 0.0;
        for (v, g) in p.sorted_values().into_iter().zip(p.sorted_probabilities()) {
            acc += g;
            t.push_row([label.to_string(), fmt_f64(v), fmt_f64(acc)]);
        }
    };
    push("Benchmark", benchmark);
    for run in runs {
        if let Some(p) = &run.validation {
            push(run.method.label(), p);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{decompose, project};

    fn proj(v: &[f64]) -> ProjectedObjectives {
        project(v, &vec![1.0 / v.len() as f64; v.len()], 0.5).unwrap()
    }

    #[test]
    fn wd_of_identical_and_shifted_sequences() {
        let a = proj(&[3.0, 1.0, 2.0, 7.0]);
        assert_eq!(wd_validation(&a, &a).unwrap(), 0.0);
        let b = proj(&[8.0, 6.0, 7.0, 12.0]);
        assert!((wd_validation(&b, &a).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn wd_pairs_by_rank() {
        // sorted [1,2,4] vs [1,3,3]: (0 + 1 + 1) / 3
        let a = proj(&[4.0, 1.0, 2.0]);
        let b = proj(&[3.0, 3.0, 1.0]);
        assert!((wd_validation(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(wd_validation(&a, &proj(&[1.0])).is_err());
    }

    #[test]
    fn og_arithmetic_and_guard() {
        let r = RiskParams { lambda: 0.0, alpha: 0.5 };
        let v = decompose(&proj(&[101.0]), r);
        let b = decompose(&proj(&[100.0]), r);
        assert!((og_percent(&v, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(og_percent(&b, &b).unwrap(), 0.0);
        let zero = decompose(&proj(&[0.0]), r);
        assert!(matches!(og_percent(&v, &zero), Err(Error::NonPositiveBaseline(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.key().parse::<Method>().unwrap(), m);
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("dtw".parse::<Method>().is_err());
    }

    #[test]
    fn histogram_mass_sums_to_one() {
        let p = proj(&[1.0, 2.0, 2.5, 9.0, 10.0]);
        let t = histogram_table(&p, 3);
        let total: f64 = t.rows().iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
