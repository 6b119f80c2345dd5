mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use cvar_sr::datagen::{generate, GenConfig};
use cvar_sr::evaluation::{
    benchmark, cdf_table, compare_methods, evaluate_reduction, histogram_table, marker_table, reduce_with, report_table,
    Benchmark, CompareConfig, EvaluationReport, Method, MethodOutput,
};
use cvar_sr::io::write_json_atomic;
use cvar_sr::milp::{backend_from_env, MilpBackend};
use cvar_sr::scenario::load_scenario_set;
use cvar_sr::vpp::{FirstStageDecision, VppParams};
use cvar_sr::{Error, ReducedScenarioSet, RiskParams, ScenarioSet};
use serde::Serialize;
use serde_json::json;

use config::{manifest_path, sibling, FileConfig, Manifest};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::DeskScaleCap { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cvar-sr", version, about = "Scenario reduction for CVaR two-stage stochastic programs")]
struct Cli {
    /// JSON configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic scenario bundle.
    Generate(GenerateArgs),
    /// Solve the full problem on a bundle.
    Benchmark(BenchmarkArgs),
    /// Reduce a bundle to K representatives.
    Reduce(ReduceArgs),
    /// Evaluate a reduced set against the full bundle.
    Evaluate(EvaluateArgs),
    /// Run and evaluate several methods, optionally over an (N, K) grid.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tail_prob: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RiskArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    risk: RiskArgs,
}

#[derive(Debug, Args)]
struct MethodArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    agg_size: Option<usize>,
    /// Time limit in seconds for each partition or bound MIP.
    #[arg(long)]
    mip_time_limit: Option<f64>,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    settings: MethodArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Iteration trace CSV for ipdsr (default: next to --out).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    reduced: PathBuf,
    /// Method that produced the reduced set, used as the report label.
    #[arg(long, value_parser = parse_method, default_value = "ipdsr")]
    method: Method,
    #[command(flatten)]
    risk: RiskArgs,
    /// Also compute the per-representative effectiveness.
    #[arg(long)]
    se: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Bundle to compare on; omit when sweeping over --n.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long, value_parser = parse_method, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Generate a bundle per N (uses the config's generator settings).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    settings: MethodArgs,
    #[arg(long)]
    se: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Generate(a) => cmd_generate(&file, a),
        Command::Benchmark(a) => cmd_benchmark(&file, a),
        Command::Reduce(a) => cmd_reduce(&file, a),
        Command::Evaluate(a) => cmd_evaluate(&file, a),
        Command::Compare(a) => cmd_compare(&file, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn backend() -> CliResult<Box<dyn MilpBackend>> {
    backend_from_env().map_err(|e| CliError::Usage(e.to_string()))
}

fn load_set(path: &Path) -> CliResult<ScenarioSet> {
    load_scenario_set(path).map_err(|e| CliError::Usage(format!("cannot load scenarios {}: {e}", path.display())))
}

fn write_manifest<C: Serialize>(path: &Path, mut manifest: Manifest<'_, C>, outputs: &[&Path]) -> CliResult {
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    write_json_atomic(path, &manifest)?;
    Ok(())
}

fn compare_config(file: &FileConfig, k: usize, s: &MethodArgs, se: bool) -> CompareConfig {
    let mut cfg = file.compare.clone().unwrap_or_default();
    if let Some(ipdsr) = &file.ipdsr {
        cfg.ipdsr = ipdsr.clone();
    }
    cfg.k = k;
    cfg.seed = s.seed.unwrap_or(cfg.seed);
    cfg.ipdsr.max_iter = s.max_iter.unwrap_or(cfg.ipdsr.max_iter);
    cfg.ipdsr.agg_size = s.agg_size.unwrap_or(cfg.ipdsr.agg_size);
    if let Some(limit) = s.mip_time_limit {
        cfg.ipdsr.mip_time_limit_s = limit;
        cfg.pdsr_time_limit_s = limit;
    }
    cfg.scenario_effectiveness |= se;
    cfg
}

fn cmd_generate(file: &FileConfig, a: GenerateArgs) -> CliResult {
    let out = file.out(a.out)?;
    let mut cfg = file.generate.clone().unwrap_or_default();
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.t = a.t.unwrap_or(cfg.t);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.tail_prob = a.tail_prob.unwrap_or(cfg.tail_prob);
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
    let set = generate(&cfg)?;
    set.save(&out)?;
    let manifest = Manifest::new("generate", &cfg, Some(cfg.seed), "none");
    write_manifest(&manifest_path(&out), manifest, &[&out])
}

#[derive(Debug, Serialize)]
struct BenchmarkFile<'a> {
    objective: f64,
    revalidated_objective: f64,
    self_check_ok: bool,
    var_value: f64,
    milp_objective: f64,
    gap: f64,
    solve_s: f64,
    per_scenario_costs: &'a [f64],
    decision: &'a FirstStageDecision,
}

fn run_benchmark(set: &ScenarioSet, p: &VppParams, risk: RiskParams, b: &dyn MilpBackend) -> CliResult<Benchmark<FirstStageDecision>> {
    benchmark(set, p, risk, b).map_err(|e| CliError::Runtime(format!("benchmark solve failed: {e}")))
}

fn cmd_benchmark(file: &FileConfig, a: BenchmarkArgs) -> CliResult {
    let (path, out) = (file.scenarios(a.scenarios)?, file.out(a.out)?);
    let set = load_set(&path)?;
    let risk = file.risk(a.risk.lambda, a.risk.alpha)?;
    let p = file.vpp(&set)?;
    let b = backend()?;
    let bench = run_benchmark(&set, &p, risk, b.as_ref())?;
    let s = &bench.solve;
    let revalidated = bench.validation.objective;
    let self_check_ok = (revalidated - s.objective).abs() <= 1e-5 * s.objective.abs().max(1.0);
    if !self_check_ok {
        log::warn!("re-validated objective {revalidated} differs from {}", s.objective);
    }
    let record = BenchmarkFile {
        objective: s.objective,
        revalidated_objective: revalidated,
        self_check_ok,
        var_value: s.var_value,
        milp_objective: s.milp_objective,
        gap: s.gap,
        solve_s: bench.solve_s,
        per_scenario_costs: &s.per_scenario_costs,
        decision: &s.decision,
    };
    write_json_atomic(&out, &record)?;
    println!("objective {:.6} var {:.6} ({:.2}s)", s.objective, s.var_value, bench.solve_s);
    let cfg = json!({ "scenarios": path, "risk": risk, "vpp": p });
    write_manifest(&manifest_path(&out), Manifest::new("benchmark", &cfg, None, b.name()), &[&out])
}

fn cmd_reduce(file: &FileConfig, a: ReduceArgs) -> CliResult {
    let (path, out) = (file.scenarios(a.scenarios)?, file.out(a.out)?);
    let set = load_set(&path)?;
    let risk = file.risk(a.risk.lambda, a.risk.alpha)?;
    let p = file.vpp(&set)?;
    let cfg = compare_config(file, a.k, &a.settings, false);
    let b = backend()?;
    let clock = Instant::now();
    let output = reduce_with(a.method, &set, &cfg, &p, risk, b.as_ref())?;
    output.reduction.save(&set, &out)?;
    let mut outputs = vec![out.clone()];
    if let Some(trace) = &output.trace {
        let trace_path = a.trace.unwrap_or_else(|| sibling(&out, "trace.csv"));
        trace.write_csv(&trace_path, None)?;
        outputs.push(trace_path);
    }
    println!(
        "{}: {} representatives from {} scenarios ({:.2}s)",
        a.method.label(),
        output.reduction.k(),
        set.len(),
        clock.elapsed().as_secs_f64()
    );
    let resolved = json!({ "scenarios": path, "method": a.method, "risk": risk, "vpp": p, "settings": cfg });
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&manifest_path(&out), Manifest::new("reduce", &resolved, Some(cfg.seed), b.name()), &refs)
}

fn cmd_evaluate(file: &FileConfig, a: EvaluateArgs) -> CliResult {
    let (path, out) = (file.scenarios(a.scenarios)?, file.out(a.out)?);
    let set = load_set(&path)?;
    let reduction = ReducedScenarioSet::load(&a.reduced)
        .and_then(|r| r.validate(&set).map(|()| r))
        .map_err(|e| CliError::Usage(format!("cannot use reduced set {}: {e}", a.reduced.display())))?;
    let risk = file.risk(a.risk.lambda, a.risk.alpha)?;
    let p = file.vpp(&set)?;
    let cfg = CompareConfig { k: reduction.k(), scenario_effectiveness: a.se, ..CompareConfig::default() };
    let b = backend()?;
    let bench = run_benchmark(&set, &p, risk, b.as_ref())?;
    let output = MethodOutput { reduction, tau_p: 0.0, tau_c: 0.0, trace: None };
    let run = evaluate_reduction(a.method, output, &set, &cfg, &p, risk, b.as_ref(), &bench)?;
    let r = &run.report;
    write_json_atomic(&out, r)?;
    println!("{}: OG% {:.4} WD {:.4} rho {}", r.method, r.og_percent, r.wd, r.worst_case_captured);
    let resolved = json!({ "scenarios": path, "reduced": a.reduced, "method": a.method, "risk": risk, "vpp": p, "se": a.se });
    write_manifest(&manifest_path(&out), Manifest::new("evaluate", &resolved, None, b.name()), &[&out])
}

fn cmd_compare(file: &FileConfig, a: CompareArgs) -> CliResult {
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::Usage("--out-dir is required (flag or config)".into()))?;
    let methods = if !a.methods.is_empty() {
        a.methods.clone()
    } else {
        file.methods.clone().unwrap_or_else(|| Method::ALL.to_vec())
    };
    let ks = if !a.k.is_empty() { a.k.clone() } else { file.sweep_k.clone().unwrap_or_else(|| vec![10]) };
    let ns = if !a.n.is_empty() { a.n.clone() } else { file.sweep_n.clone().unwrap_or_default() };
    let scenarios = a.scenarios.clone().or_else(|| file.scenarios.clone());
    if scenarios.is_some() && !ns.is_empty() {
        return Err(CliError::Usage("give either --scenarios or an --n sweep, not both".into()));
    }
    let mut gen = file.generate.clone().unwrap_or_default();
    gen.seed = a.settings.seed.unwrap_or(gen.seed);
    let sets: Vec<ScenarioSet> = match &scenarios {
        Some(path) => vec![load_set(path)?],
        None if ns.is_empty() => return Err(CliError::Usage("--scenarios or --n is required".into())),
        None => ns
            .iter()
            .map(|&n| generate(&GenConfig { n, ..gen.clone() }).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<CliResult<_>>()?,
    };
    let risk = file.risk(a.risk.lambda, a.risk.alpha)?;
    let b = backend()?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut reports: Vec<EvaluationReport> = Vec::new();
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut settings = Vec::new();
    for set in &sets {
        let n = set.len();
        let p = file.vpp(set)?;
        let bench = run_benchmark(set, &p, risk, b.as_ref())?;
        let hist = out_dir.join(format!("histogram_n{n}.csv"));
        histogram_table(&bench.projection, 20).write_atomic(&hist)?;
        outputs.push(hist);
        for &k in &ks {
            if k == 0 || k > n {
                return Err(CliError::Usage(format!("k = {k} is outside 1..={n}")));
            }
            let cfg = compare_config(file, k, &a.settings, a.se);
            let runs = compare_methods(set, &methods, &p, risk, &cfg, b.as_ref(), &bench);
            for (name, table) in
                [("markers", marker_table(&bench.projection, &runs)), ("cdf", cdf_table(&bench.projection, &runs))]
            {
                let path = out_dir.join(format!("{name}_n{n}_k{k}.csv"));
                table.write_atomic(&path)?;
                outputs.push(path);
            }
            for run in &runs {
                if let Some(trace) = &run.trace {
                    let path = out_dir.join(format!("trace_{}_n{n}_k{k}.csv", run.method.key()));
                    trace.write_csv(&path, Some(bench.solve.objective))?;
                    outputs.push(path);
                }
                println!(
                    "N={n} K={k} {}: OG% {:.4} rho {} [{}]",
                    run.report.method, run.report.og_percent, run.report.worst_case_captured, run.report.status
                );
                reports.push(run.report.clone());
            }
            settings.push(cfg);
        }
    }
    let table_path = out_dir.join("report.csv");
    report_table(&reports).write_atomic(&table_path)?;
    let json_path = out_dir.join("report.json");
    write_json_atomic(&json_path, &reports)?;
    outputs.extend([table_path, json_path]);
    let resolved = json!({
        "scenarios": scenarios,
        "generate": if ns.is_empty() { None } else { Some(&gen) },
        "n": ns,
        "k": ks,
        "methods": methods,
        "risk": risk,
        "settings": settings.first(),
    });
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let seed = settings.first().map(|c| c.seed);
    write_manifest(&out_dir.join("manifest.json"), Manifest::new("compare", &resolved, seed, b.name()), &refs)?;
    if reports.iter().any(EvaluationReport::ok) {
        Ok(())
    } else {
        Err(CliError::Runtime("every method failed".into()))
    }
}
