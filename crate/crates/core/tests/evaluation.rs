use cvar_sr::datagen::{generate, GenConfig};
use cvar_sr::evaluation::{
    benchmark, cdf_table, compare_methods, marker_table, report_table, scenario_effectiveness, worst_case_capture,
    CompareConfig, Method,
};
use cvar_sr::ipdsr::IpdsrConfig;
use cvar_sr::milp::HighsBackend;
use cvar_sr::vpp::VppParams;
use cvar_sr::{ReducedScenarioSet, RiskParams, ScenarioSet};

fn small(n: usize, seed: u64) -> (ScenarioSet, VppParams) {
    let set = generate(&GenConfig { n, t: 24, seed, ..GenConfig::default() }).unwrap();
    (set, VppParams::with_horizon(24, 1.0))
}

#[test]
fn identity_reductions_have_no_gap() {
    let (set, p) = small(8, 5);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let bench = benchmark(&set, &p, risk, &b).unwrap();
    let cfg = CompareConfig { k: 8, ipdsr: IpdsrConfig { agg_size: 8, max_iter: 2, ..IpdsrConfig::default() }, ..CompareConfig::default() };
    let runs = compare_methods(&set, &Method::ALL, &p, risk, &cfg, &b, &bench);
    assert_eq!(runs.len(), Method::ALL.len());
    let tail = bench.projection.tail_scenarios().len();
    for run in &runs {
        assert!(run.report.ok(), "{}: {}", run.report.method, run.report.status);
        assert!(run.report.og_percent.abs() < 1e-4, "{}: {}", run.report.method, run.report.og_percent);
        assert!(run.report.wd < 1e-6);
        assert_eq!(run.report.worst_case_captured, tail);
    }
    let table = report_table(runs.iter().map(|r| &r.report));
    assert_eq!(table.len(), runs.len());
    assert_eq!(marker_table(&bench.projection, &runs).len(), 8 * runs.len());
    assert_eq!(cdf_table(&bench.projection, &runs).len(), 8 * (runs.len() + 1));
}

#[test]
fn failing_methods_are_reported_not_fatal() {
    let (set, p) = small(18, 2);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let bench = benchmark(&set, &p, risk, &b).unwrap();
    let cfg = CompareConfig { k: 3, ..CompareConfig::default() };
    let runs = compare_methods(&set, &[Method::Kmeans, Method::Pdsr], &p, risk, &cfg, &b, &bench);
    assert!(runs[0].report.ok());
    assert!(runs[0].report.og_percent >= -1e-4);
    assert!(runs[1].report.status.starts_with("failed"));
    assert!(runs[1].report.status.contains("desk-scale"));
}

#[test]
fn duplicated_representative_is_ineffective() {
    let (base, p) = small(2, 7);
    let set = ScenarioSet::uniform(
        vec![base.scenario(0).clone(), base.scenario(1).clone(), base.scenario(0).clone()],
        1.0,
    )
    .unwrap();
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let bench = benchmark(&set, &p, risk, &b).unwrap();
    let red = ReducedScenarioSet::from_assignment(&set, vec![0, 2], vec![0, 0, 1]).unwrap();
    let se = scenario_effectiveness(&red, &set, &p, risk, &b, &bench.validation).unwrap();
    assert!(se.iter().all(|x| x.abs() < 1e-6), "{se:?}");
}

#[test]
fn effectiveness_on_two_scenarios_is_finite() {
    let (set, p) = small(2, 3);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let bench = benchmark(&set, &p, risk, &b).unwrap();
    let se = scenario_effectiveness(&ReducedScenarioSet::identity(&set), &set, &p, risk, &b, &bench.validation).unwrap();
    assert_eq!(se.len(), 2);
    assert!(se.iter().all(|x| x.is_finite() && *x >= -1e-4));
    let single = ReducedScenarioSet::from_assignment(&set, vec![0], vec![0, 0]).unwrap();
    assert!(scenario_effectiveness(&single, &set, &p, risk, &b, &bench.validation).is_err());
}

#[test]
fn capture_counts_tail_representatives() {
    let (set, p) = small(20, 9);
    let b = HighsBackend::default();
    let bench = benchmark(&set, &p, RiskParams::default(), &b).unwrap();
    let tail = bench.projection.tail_scenarios();
    assert_eq!(worst_case_capture(&ReducedScenarioSet::identity(&set), &bench.projection), tail.len());
    let center = bench.projection.order[10];
    let one = ReducedScenarioSet::from_assignment(&set, vec![center], vec![0; 20]).unwrap();
    assert_eq!(worst_case_capture(&one, &bench.projection), 0);
}
