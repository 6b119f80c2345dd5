use cvar_sr::datagen::{generate, GenConfig};
use cvar_sr::milp::HighsBackend;
use cvar_sr::risk::evaluate_objective;
use cvar_sr::vpp::{FirstStageDecision, VppParams};
use cvar_sr::{ReducedScenarioSet, RiskParams, Scenario, ScenarioSet};

fn small(n: usize, seed: u64) -> (ScenarioSet, VppParams) {
    let set = generate(&GenConfig { n, t: 24, seed, ..GenConfig::default() }).unwrap();
    (set, VppParams::with_horizon(24, 1.0))
}

fn idle(horizon: usize, dt: f64) -> VppParams {
    let mut p = VppParams::with_horizon(horizon, dt);
    p.soc_min = 0.5;
    p.soc_max = 0.5;
    p
}

#[test]
fn nothing_to_serve_means_no_trade() {
    let p = idle(4, 0.25);
    let s = Scenario::new(vec![0.0; 4], vec![0.1; 4]).unwrap();
    let set = ScenarioSet::uniform(vec![s], 0.25).unwrap();
    let r = p.solve_full(&set, RiskParams::default(), &HighsBackend::default()).unwrap();
    assert!(r.decision.trade_kw.iter().all(|x| x.abs() < 1e-6));
    assert!(r.objective.abs() < 1e-6);
}

#[test]
fn duplicate_scenarios_collapse() {
    let (set, p) = small(3, 5);
    let b = HighsBackend::default();
    let risk = RiskParams { lambda: 0.0, alpha: 0.95 };
    let one = set.subset(&[1], &[1.0]).unwrap();
    let two = ScenarioSet::uniform(vec![set.scenario(1).clone(), set.scenario(1).clone()], 1.0).unwrap();
    let a = p.solve_full(&one, risk, &b).unwrap().objective;
    let c = p.solve_full(&two, risk, &b).unwrap().objective;
    assert!((a - c).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {c}");
}

#[test]
fn identity_reduction_matches_original() {
    let (set, p) = small(6, 8);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let full = p.solve_full(&set, risk, &b).unwrap();
    let id = ReducedScenarioSet::identity(&set).materialize(&set).unwrap();
    let red = p.solve_full(&id, risk, &b).unwrap();
    assert!((full.objective - red.objective).abs() <= 1e-6 * full.objective.abs());
}

#[test]
fn matching_trade_needs_no_balancing() {
    let p = idle(4, 0.25);
    let load = vec![120.0, 80.0, -40.0, 10.0];
    let s = Scenario::new(load.clone(), vec![0.2; 4]).unwrap();
    let z = FirstStageDecision::new(load);
    let r = p.solve_recourse(&z, &s, &HighsBackend::default()).unwrap();
    assert!(r.intraday_up.iter().chain(&r.intraday_down).all(|x| x.abs() < 1e-9));
}

#[test]
fn shortfall_is_bought_at_the_markup() {
    let p = idle(3, 0.25);
    let s = Scenario::new(vec![0.0, 100.0, 0.0], vec![1.0; 3]).unwrap();
    let r = p.solve_recourse(&FirstStageDecision::zeros(3), &s, &HighsBackend::default()).unwrap();
    assert!((r.cost - 1.3 * 1.0 * 100.0 * 0.25).abs() < 1e-9, "{}", r.cost);
    assert!((r.intraday_up[1] - 100.0).abs() < 1e-9);
}

#[test]
fn curtailment_only_when_export_is_capped() {
    let mut p = idle(2, 1.0);
    p.trade_cap_kw = vec![300.0; 2];
    let s = Scenario::new(vec![-500.0, -200.0], vec![0.1; 2]).unwrap().with_renewable(vec![500.0, 200.0]).unwrap();
    let r = p.solve_recourse(&FirstStageDecision::zeros(2), &s, &HighsBackend::default()).unwrap();
    assert!((r.curtail[0] - 200.0).abs() < 1e-6, "{:?}", r.curtail);
    assert!(r.curtail[1].abs() < 1e-9);
    // selling at the markdown beats curtailing
    assert!((r.intraday_down[1] - 200.0).abs() < 1e-6);
    let expected = -0.7 * 0.1 * (300.0 + 200.0);
    assert!((r.cost - expected).abs() < 1e-9, "{} vs {expected}", r.cost);
}

#[test]
fn validation_reproduces_the_optimum() {
    let (set, p) = small(8, 11);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let full = p.solve_full(&set, risk, &b).unwrap();
    let (_, dec) = p.validate(&full.decision, &set, risk, &b).unwrap();
    assert!((dec.objective - full.objective).abs() <= 1e-5 * full.objective.abs());
    let again = evaluate_objective(&full.per_scenario_costs, set.probabilities(), risk).unwrap();
    assert!((again.objective - full.objective).abs() < 1e-9);
}

#[test]
fn validation_ignores_scenario_order() {
    let (set, p) = small(7, 2);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let z = p.solve_full(&set.subset(&[0, 3], &[0.5, 0.5]).unwrap(), risk, &b).unwrap().decision;
    let (pa, da) = p.validate(&z, &set, risk, &b).unwrap();
    let order = [6, 2, 4, 0, 1, 5, 3];
    let (pb, db) = p.validate(&z, &set.permuted(&order).unwrap(), risk, &b).unwrap();
    assert!((da.objective - db.objective).abs() < 1e-9);
    assert_eq!(pa.var_value, pb.var_value);
    for (pos, &i) in order.iter().enumerate() {
        assert!((pb.values[pos] - pa.values[i]).abs() < 1e-9);
    }
}

#[test]
fn single_scenario_validation_is_degenerate() {
    let (set, p) = small(1, 4);
    let b = HighsBackend::default();
    let z = FirstStageDecision::zeros(24);
    let (proj, dec) = p.validate(&z, &set, RiskParams::default(), &b).unwrap();
    assert_eq!(dec.expectation, proj.values[0]);
    assert!((dec.cvar - proj.values[0]).abs() < 1e-12);
}

#[test]
fn recourse_solutions_are_feasible_and_exclusive() {
    let (set, p) = small(6, 21);
    let b = HighsBackend::default();
    let full = p.solve_full(&set, RiskParams::default(), &b).unwrap();
    for (i, r) in full.recourse.iter().enumerate() {
        assert!(r.max_violation(&full.decision, set.scenario(i), &p) < 1e-6);
        for t in 0..24 {
            assert_eq!(r.charge[t].min(r.discharge[t]), 0.0);
            assert_eq!(r.intraday_up[t].min(r.intraday_down[t]), 0.0);
        }
    }
    assert!((full.milp_objective - full.objective).abs() <= 1e-6 * full.objective.abs());
}

#[test]
fn mismatched_horizon_is_rejected() {
    let (set, _) = small(2, 0);
    let p = VppParams::default();
    assert!(p.solve_full(&set, RiskParams::default(), &HighsBackend::default()).is_err());
}
