mod common;

use cvar_sr::datagen::{generate, GenConfig};
use cvar_sr::ipdsr::{
    aggregate, build_partition_mip, evaluate_choice, initialize, run, solve_partition, AggregatedObjectives, IpdsrConfig,
};
use cvar_sr::milp::{HighsBackend, SolveOptions};
use cvar_sr::risk::project;
use cvar_sr::vpp::VppParams;
use cvar_sr::{ReducedScenarioSet, RiskParams, ScenarioSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> SolveOptions {
    SolveOptions { rel_gap: 1e-10, abs_gap: 1e-10, ..SolveOptions::default() }
}

fn random_atoms(rng: &mut ChaCha8Rng, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut f: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..10.0)).collect();
    f.sort_by(f64::total_cmp);
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    (f, raw.iter().map(|x| x / s).collect())
}

#[test]
fn partition_optimum_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b = HighsBackend::default();
    for _ in 0..40 {
        let m = rng.gen_range(2..=6);
        let k = rng.gen_range(1..=m.min(3));
        let (f, g) = random_atoms(&mut rng, m);
        let risk = RiskParams { lambda: rng.gen_range(0.0..1.0), alpha: rng.gen_range(0.55..0.95) };
        let proj = project(&f, &g, risk.alpha).unwrap();
        let agg = aggregate(&proj, m).unwrap();
        let mip = build_partition_mip(&agg, k, risk, proj.var_value).unwrap();
        let got = solve_partition(&mip, &b, &tight(), &agg, &proj).unwrap();
        let want = common::partition_brute_force(&f, &g, k, risk, proj.var_value).unwrap();
        assert!((got.objective_value - want).abs() < 1e-6, "m={m} k={k}: {} vs {want}", got.objective_value);
    }
}

#[test]
fn full_cardinality_partition_is_lossless() {
    let f = [1.0, 2.0, 4.0, 7.0, 11.0];
    let proj = project(&f, &[0.2; 5], 0.8).unwrap();
    let agg = aggregate(&proj, 5).unwrap();
    let risk = RiskParams { lambda: 0.5, alpha: 0.8 };
    let mip = build_partition_mip(&agg, 5, risk, proj.var_value).unwrap();
    let r = solve_partition(&mip, &HighsBackend::default(), &tight(), &agg, &proj).unwrap();
    assert!(r.objective_value < 1e-9);
    let mut ids = r.representative_ids.clone();
    ids.sort_unstable();
    assert_eq!(ids, vec![0, 1, 2, 3, 4]);
}

#[test]
fn decoded_partitions_respect_their_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = HighsBackend::default();
    for _ in 0..15 {
        let n = rng.gen_range(8..=14);
        let (f, g) = random_atoms(&mut rng, n);
        let risk = RiskParams { lambda: 0.5, alpha: 0.8 };
        let proj = project(&f, &g, risk.alpha).unwrap();
        let n_prime = (proj.tail_scenarios().len() + 2).min(n);
        let agg = aggregate(&proj, n_prime).unwrap();
        let k = rng.gen_range(1..=n_prime.min(3));
        let mip = build_partition_mip(&agg, k, risk, proj.var_value).unwrap();
        let r = solve_partition(&mip, &b, &tight(), &agg, &proj).unwrap();
        assert_eq!(r.representative_ids.len(), k);
        assert!(r.representative_ids.contains(&r.var_rep_id));
        assert!(r.objective_value >= 0.0);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (label, &id) in r.representative_ids.iter().enumerate() {
            assert_eq!(r.assignment[id], label);
            let mass: f64 = (0..n).filter(|&i| r.assignment[i] == label).map(|i| g[i]).sum();
            assert!((mass - r.weights[label]).abs() < 1e-12);
        }
        let e = evaluate_choice(&agg, risk, proj.var_value, &r.agg_assignment, r.agg_var_rep);
        let e = e.expect("decoded choice satisfies the confidence window");
        assert!((e.abs() - r.objective_value).abs() < 1e-6);
        // each aggregated representative maps to its closest member
        for &j in r.agg_assignment.iter().filter(|&&j| r.agg_assignment[j] == j) {
            let chosen = agg.member_ids[j].iter().copied().find(|i| r.representative_ids.contains(i)).unwrap();
            for &i in &agg.member_ids[j] {
                assert!((f[chosen] - agg.values[j]).abs() <= (f[i] - agg.values[j]).abs());
            }
        }
    }
}

#[test]
fn aggregated_atoms_are_weighted_means() {
    let f = [5.0, 1.0, 3.0, 2.0, 9.0, 4.0];
    let g = [0.1, 0.2, 0.2, 0.2, 0.1, 0.2];
    let proj = project(&f, &g, 0.85).unwrap();
    let agg: AggregatedObjectives = aggregate(&proj, 3).unwrap();
    assert_eq!(agg.member_ids.last().unwrap(), &vec![4]);
    for (j, members) in agg.member_ids.iter().enumerate() {
        let mass: f64 = members.iter().map(|&i| g[i]).sum();
        let mean = members.iter().map(|&i| g[i] * f[i]).sum::<f64>() / mass;
        assert!((agg.values[j] - mean).abs() < 1e-12);
        assert!((agg.probabilities[j] - mass).abs() < 1e-12);
    }
}

fn small(n: usize, seed: u64) -> (ScenarioSet, VppParams) {
    let set = generate(&GenConfig { n, t: 24, seed, ..GenConfig::default() }).unwrap();
    (set, VppParams::with_horizon(24, 1.0))
}

#[test]
fn full_cardinality_run_reaches_the_benchmark() {
    let (set, p) = small(6, 1);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let bench = p.solve_full(&set, risk, &b).unwrap().objective;
    let cfg = IpdsrConfig { k: 6, agg_size: 6, max_iter: 2, restarts: 1, ..IpdsrConfig::default() };
    let out = run(&set, &cfg, &p, risk, &b).unwrap();
    assert!(out.best.reduction.same_partition(&ReducedScenarioSet::identity(&set)));
    assert!((out.best.validation.objective - bench).abs() <= 1e-6 * bench);
}

#[test]
fn best_iterate_never_loses_to_the_start() {
    let (set, p) = small(30, 4);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let cfg = IpdsrConfig { k: 4, agg_size: 20, max_iter: 4, restarts: 2, ..IpdsrConfig::default() };
    let out = run(&set, &cfg, &p, risk, &b).unwrap();
    let mins = out.trace.running_min();
    assert!(mins.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.best.validation.objective <= out.initial.validation.objective);
    assert_eq!(*mins.last().unwrap(), out.best.validation.objective);
    let table = out.trace.to_table(Some(1.0));
    assert_eq!(table.len(), out.trace.records.len());
}

#[test]
fn more_restarts_never_hurt() {
    let (set, p) = small(20, 9);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let one = initialize(&set, &IpdsrConfig { k: 3, restarts: 1, ..IpdsrConfig::default() }, &p, risk, &b).unwrap();
    let five = initialize(&set, &IpdsrConfig { k: 3, restarts: 5, ..IpdsrConfig::default() }, &p, risk, &b).unwrap();
    assert!(five.validation.objective <= one.validation.objective + 1e-9);
}

#[test]
fn single_representative_of_two_is_a_member() {
    let (set, p) = small(2, 12);
    let b = HighsBackend::default();
    let risk = RiskParams::default();
    let it = initialize(&set, &IpdsrConfig { k: 1, agg_size: 2, restarts: 3, ..IpdsrConfig::default() }, &p, risk, &b).unwrap();
    let score = |i: usize| {
        let z = p.solve_full(&set.subset(&[i], &[1.0]).unwrap(), risk, &b).unwrap().decision;
        p.validate(&z, &set, risk, &b).unwrap().1.objective
    };
    let (a, c) = (score(0), score(1));
    // both points are equidistant from the centroid, so every restart picks
    // the same medoid; the result is one of the two candidates
    assert!(it.validation.objective >= a.min(c) - 1e-6);
    assert!((it.validation.objective - a).abs() < 1e-6 || (it.validation.objective - c).abs() < 1e-6);
}

#[test]
fn configuration_is_checked() {
    let (set, p) = small(5, 0);
    let b = HighsBackend::default();
    let bad = IpdsrConfig { k: 6, ..IpdsrConfig::default() };
    assert!(run(&set, &bad, &p, RiskParams::default(), &b).is_err());
    let bad = IpdsrConfig { k: 3, agg_size: 2, ..IpdsrConfig::default() };
    assert!(run(&set, &bad, &p, RiskParams::default(), &b).is_err());
}
