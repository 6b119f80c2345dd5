mod common;

use cvar_sr::datagen::{generate, GenConfig};
use cvar_sr::milp::{HighsBackend, SolveOptions};
use cvar_sr::pdsr::{build_bound_mip, build_pairwise_matrix, distance, pdsr_reduce, solve_bound_mip, ProblemDrivenDistance};
use cvar_sr::vpp::VppParams;
use cvar_sr::{Error, RiskParams, ScenarioSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(n: usize, seed: u64) -> (ScenarioSet, VppParams) {
    let set = generate(&GenConfig { n, t: 24, seed, ..GenConfig::default() }).unwrap();
    (set, VppParams::with_horizon(24, 1.0))
}

fn tight() -> SolveOptions {
    SolveOptions { rel_gap: 1e-10, abs_gap: 1e-10, ..SolveOptions::default() }
}

#[test]
fn distance_matrix_is_a_semimetric_on_vpp_data() {
    let (set, p) = small(5, 3);
    let fm = build_pairwise_matrix(&set, &p, RiskParams::default(), &HighsBackend::default()).unwrap();
    assert!(fm.dominance_violation() < 1e-6);
    let d = distance(&fm);
    for i in 0..5 {
        assert_eq!(d.d[i][i], 0.0);
        for k in 0..5 {
            assert!(d.d[i][k] >= -1e-6);
            assert_eq!(d.d[i][k], d.d[k][i]);
        }
    }
}

#[test]
fn duplicate_scenarios_share_a_row() {
    let (base, p) = small(3, 6);
    let set = ScenarioSet::uniform(
        vec![base.scenario(0).clone(), base.scenario(1).clone(), base.scenario(0).clone()],
        1.0,
    )
    .unwrap();
    let fm = build_pairwise_matrix(&set, &p, RiskParams::default(), &HighsBackend::default()).unwrap();
    for j in 0..3 {
        assert!((fm.f[0][j] - fm.f[2][j]).abs() < 1e-6);
    }
    let one = set.subset(&[1], &[1.0]).unwrap();
    assert_eq!(build_pairwise_matrix(&one, &p, RiskParams::default(), &HighsBackend::default()).unwrap().len(), 1);
}

#[test]
fn bound_optimum_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let b = HighsBackend::default();
    for _ in 0..4 {
        let pts: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..10.0)).collect();
        let d = ProblemDrivenDistance { d: pts.iter().map(|x| pts.iter().map(|y| (x - y).abs()).collect()).collect() };
        let raw: Vec<f64> = (0..6).map(|_| rng.gen_range(0.3..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let g: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let risk = RiskParams { lambda: 0.5, alpha: rng.gen_range(0.6..0.9) };
        let mip = build_bound_mip(&d, &g, 2, risk).unwrap();
        let got = solve_bound_mip(&mip, &g, &b, &tight()).unwrap();
        let want = common::bound_brute_force(&d.d, &g, 2, risk);
        assert!((got.objective_value - want).abs() < 1e-6, "{} vs {want}", got.objective_value);
    }
}

#[test]
fn full_cardinality_bound_is_zero() {
    let (set, p) = small(5, 1);
    let out = pdsr_reduce(&set, 5, &p, RiskParams::default(), &HighsBackend::default(), &tight()).unwrap();
    assert!(out.solution.objective_value.abs() < 1e-6);
    assert_eq!(out.reduction.k(), 5);
}

#[test]
fn desk_scale_reduction_runs() {
    let (set, p) = small(8, 2);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let out = pdsr_reduce(&set, 3, &p, risk, &b, &SolveOptions::default()).unwrap();
    assert_eq!(out.reduction.k(), 3);
    assert!((out.reduction.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let g = set.probabilities();
    let gmass: f64 = (0..8).filter(|&i| out.solution.g[i]).map(|i| g[i]).sum();
    assert!(gmass <= risk.alpha + 1e-9);
    assert!(out.solution.g[out.solution.original_var] && out.solution.h[out.solution.reduced_var]);
    let bench = p.solve_full(&set, risk, &b).unwrap().objective;
    let z = p.solve_full(&out.reduction.materialize(&set).unwrap(), risk, &b).unwrap().decision;
    let og = 100.0 * (p.validate(&z, &set, risk, &b).unwrap().1.objective - bench) / bench;
    assert!(og.is_finite() && og >= -1e-4);
}

#[test]
fn caps_are_enforced() {
    let (set, p) = small(16, 0);
    let err = pdsr_reduce(&set, 3, &p, RiskParams::default(), &HighsBackend::default(), &SolveOptions::default());
    assert!(matches!(err, Err(Error::DeskScaleCap { cap: 15, .. })));
    let (set, _) = small(21, 0);
    let err = build_pairwise_matrix(&set, &p, RiskParams::default(), &HighsBackend::default());
    assert!(matches!(err, Err(Error::DeskScaleCap { cap: 20, .. })));
}
