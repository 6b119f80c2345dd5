//! Scenario containers and their on-disk JSON formats.
//!
//! A scenario bundle looks like
//!
//! ```json
//! {"meta":{"n":2,"t":96,"dt_hours":0.25},
//!  "scenarios":[{"prob":0.5,"net_load":[...],"price":[...]}, ...]}
//! ```
//!
//! Each scenario may additionally carry a `renewable` series, which bounds the
//! curtailment available in that scenario. A reduced set file is
//! `{"source_ids":[...],"weights":[...],"assignment":[...]}` where all indices
//! are zero-based: `source_ids[k]` is the original index of representative
//! `k` and `assignment[i]` is the cluster (position in `source_ids`) that
//! original scenario `i` belongs to.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::write_json_atomic;
use crate::{Error, Result};

/// Tolerance on the probability sum of a validated set.
pub const PROB_SUM_TOL: f64 = 1e-9;
/// Largest deviation of the probability sum that [`load_scenario_set`]
/// silently renormalises.
pub const RENORMALIZE_TOL: f64 = 1e-6;

/// One realisation of the uncertain inputs over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Demand minus renewable output, kW.
    pub net_load: Vec<f64>,
    /// Market price, currency/kWh.
    pub price: Vec<f64>,
    /// Renewable output, kW. Bounds curtailment when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewable: Option<Vec<f64>>,
}

impl Scenario {
    pub fn new(net_load: Vec<f64>, price: Vec<f64>) -> Result<Self> {
        let s = Self { net_load, price, renewable: None };
        s.check()?;
        Ok(s)
    }

    pub fn with_renewable(mut self, renewable: Vec<f64>) -> Result<Self> {
        self.renewable = Some(renewable);
        self.check()?;
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.net_load.len()
    }

    /// Upper bound on curtailable renewable output at step `t`.
    pub fn curtailable(&self, t: usize) -> f64 {
        match &self.renewable {
            Some(r) => r[t].max(0.0),
            None => (-self.net_load[t]).max(0.0),
        }
    }

    fn check(&self) -> Result<()> {
        let t = self.net_load.len();
        if t == 0 {
            return Err(Error::InvalidScenarioSet("empty horizon".into()));
        }
        if self.price.len() != t {
            return Err(Error::InconsistentHorizon(format!(
                "net_load has {t} steps but price has {}",
                self.price.len()
            )));
        }
        if let Some(r) = &self.renewable {
            if r.len() != t {
                return Err(Error::InconsistentHorizon(format!(
                    "net_load has {t} steps but renewable has {}",
                    r.len()
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidScenarioSet("non-finite renewable value".into()));
            }
        }
        if self.net_load.iter().chain(&self.price).any(|x| !x.is_finite()) {
            return Err(Error::InvalidScenarioSet("non-finite net load or price".into()));
        }
        Ok(())
    }
}

/// N weighted scenarios sharing one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
    probabilities: Vec<f64>,
    dt_hours: f64,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>, probabilities: Vec<f64>, dt_hours: f64) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidScenarioSet("no scenarios".into()));
        }
        if scenarios.len() != probabilities.len() {
            return Err(Error::InvalidScenarioSet(format!(
                "{} scenarios but {} probabilities",
                scenarios.len(),
                probabilities.len()
            )));
        }
        if !(dt_hours.is_finite() && dt_hours > 0.0) {
            return Err(Error::InvalidScenarioSet(format!("invalid dt_hours {dt_hours}")));
        }
        let t = scenarios[0].horizon();
        for (i, s) in scenarios.iter().enumerate() {
            s.check()?;
            if s.horizon() != t {
                return Err(Error::InconsistentHorizon(format!(
                    "scenario {i} has {} steps, expected {t}",
                    s.horizon()
                )));
            }
        }
        check_probabilities(&probabilities, PROB_SUM_TOL)?;
        Ok(Self { scenarios, probabilities, dt_hours })
    }

    /// Equiprobable set.
    pub fn uniform(scenarios: Vec<Scenario>, dt_hours: f64) -> Result<Self> {
        let n = scenarios.len().max(1);
        let p = vec![1.0 / n as f64; scenarios.len()];
        Self::new(scenarios, p, dt_hours)
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.scenarios[0].horizon()
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt_hours
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn scenario(&self, i: usize) -> &Scenario {
        &self.scenarios[i]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Largest absolute net load over all scenarios and steps.
    pub fn max_abs_net_load(&self) -> f64 {
        self.scenarios
            .iter()
            .flat_map(|s| s.net_load.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// The same scenarios listed in a different order.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let scen = order.iter().map(|&i| self.scenarios[i].clone()).collect();
        let probs = order.iter().map(|&i| self.probabilities[i]).collect();
        Self::new(scen, probs, self.dt_hours)
    }

    /// Builds the weighted set a reduced problem is solved on.
    pub fn subset(&self, ids: &[usize], weights: &[f64]) -> Result<Self> {
        if ids.len() != weights.len() {
            return Err(Error::InvalidReduction("ids and weights differ in length".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidReduction(format!("index {bad} out of range")));
        }
        let scen = ids.iter().map(|&i| self.scenarios[i].clone()).collect();
        Self::new(scen, weights.to_vec(), self.dt_hours)
    }

    pub fn to_bundle(&self) -> ScenarioBundle {
        ScenarioBundle {
            meta: BundleMeta { n: self.len(), t: self.horizon(), dt_hours: self.dt_hours },
            scenarios: self
                .scenarios
                .iter()
                .zip(&self.probabilities)
                .map(|(s, &p)| BundleScenario {
                    prob: p,
                    net_load: s.net_load.clone(),
                    price: s.price.clone(),
                    renewable: s.renewable.clone(),
                })
                .collect(),
        }
    }

    /// Validates a parsed bundle. The probability vector is renormalised when
    /// its sum is within [`RENORMALIZE_TOL`] of one.
    pub fn from_bundle(bundle: ScenarioBundle) -> Result<Self> {
        let ScenarioBundle { meta, scenarios } = bundle;
        if meta.n != scenarios.len() {
            return Err(Error::InvalidScenarioSet(format!(
                "header declares n = {} but {} scenarios are present",
                meta.n,
                scenarios.len()
            )));
        }
        for (i, s) in scenarios.iter().enumerate() {
            if s.net_load.len() != meta.t || s.price.len() != meta.t {
                return Err(Error::InconsistentHorizon(format!(
                    "scenario {i} does not match header horizon t = {}",
                    meta.t
                )));
            }
        }
        let mut probs: Vec<f64> = scenarios.iter().map(|s| s.prob).collect();
        check_probabilities(&probs, RENORMALIZE_TOL)?;
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        let scen = scenarios
            .into_iter()
            .map(|s| Scenario { net_load: s.net_load, price: s.price, renewable: s.renewable })
            .collect();
        Self::new(scen, probs, meta.dt_hours)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json_atomic(path, &self.to_bundle())
    }
}

fn check_probabilities(p: &[f64], tol: f64) -> Result<()> {
    if let Some((i, &g)) = p.iter().enumerate().find(|(_, &g)| !(g.is_finite() && g > 0.0)) {
        return Err(Error::InvalidScenarioSet(format!("probability {i} is non-positive ({g})")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidScenarioSet(format!(
            "probabilities sum to {sum}, off by more than {tol}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n: usize,
    pub t: usize,
    pub dt_hours: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleScenario {
    pub prob: f64,
    pub net_load: Vec<f64>,
    pub price: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewable: Option<Vec<f64>>,
}

/// Serialised form of a [`ScenarioSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioBundle {
    pub meta: BundleMeta,
    pub scenarios: Vec<BundleScenario>,
}

pub fn load_scenario_set(path: impl AsRef<Path>) -> Result<ScenarioSet> {
    let text = std::fs::read_to_string(path)?;
    let bundle: ScenarioBundle = serde_json::from_str(&text)?;
    ScenarioSet::from_bundle(bundle)
}

/// K representatives chosen among the members of an original set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedScenarioSet {
    source_ids: Vec<usize>,
    weights: Vec<f64>,
    assignment: Vec<usize>,
}

impl ReducedScenarioSet {
    /// Builds a reduction from representatives and a cluster assignment; the
    /// weights are the probability mass of each cluster.
    pub fn from_assignment(
        original: &ScenarioSet,
        source_ids: Vec<usize>,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        let k = source_ids.len();
        if assignment.len() != original.len() {
            return Err(Error::InvalidReduction(format!(
                "assignment has {} labels for {} scenarios",
                assignment.len(),
                original.len()
            )));
        }
        if let Some(&bad) = assignment.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidReduction(format!("cluster label {bad} out of range")));
        }
        let mut weights = vec![0.0; k];
        for (i, &c) in assignment.iter().enumerate() {
            weights[c] += original.probabilities()[i];
        }
        let set = Self { source_ids, weights, assignment };
        set.validate(original)?;
        Ok(set)
    }

    /// Every scenario represents itself.
    pub fn identity(original: &ScenarioSet) -> Self {
        let n = original.len();
        Self {
            source_ids: (0..n).collect(),
            weights: original.probabilities().to_vec(),
            assignment: (0..n).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.source_ids.len()
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Original index of the representative of every scenario. Two
    /// reductions are the same partition iff these agree.
    pub fn representative_of(&self) -> Vec<usize> {
        self.assignment.iter().map(|&c| self.source_ids[c]).collect()
    }

    pub fn same_partition(&self, other: &Self) -> bool {
        self.representative_of() == other.representative_of()
    }

    /// Original indices of the members of cluster `k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &c)| c == k).map(|(i, _)| i).collect()
    }

    pub fn validate(&self, original: &ScenarioSet) -> Result<()> {
        let k = self.k();
        let n = original.len();
        let bad = |m: String| Err(Error::InvalidReduction(m));
        if k == 0 {
            return bad("no representatives".into());
        }
        if self.weights.len() != k {
            return bad(format!("{} weights for {k} representatives", self.weights.len()));
        }
        if self.assignment.len() != n {
            return bad(format!("assignment has {} labels for {n} scenarios", self.assignment.len()));
        }
        let mut seen = vec![false; n];
        for &id in &self.source_ids {
            if id >= n {
                return bad(format!("representative {id} out of range"));
            }
            if std::mem::replace(&mut seen[id], true) {
                return bad(format!("representative {id} listed twice"));
            }
        }
        let mut mass = vec![0.0; k];
        for (i, &c) in self.assignment.iter().enumerate() {
            if c >= k {
                return bad(format!("cluster label {c} out of range"));
            }
            mass[c] += original.probabilities()[i];
        }
        for (c, &id) in self.source_ids.iter().enumerate() {
            if self.assignment[id] != c {
                return bad(format!("representative {id} is not in its own cluster"));
            }
            if !(self.weights[c] > 0.0) {
                return bad(format!("weight of cluster {c} is not positive"));
            }
            if (self.weights[c] - mass[c]).abs() > PROB_SUM_TOL {
                return bad(format!(
                    "weight {} of cluster {c} differs from its mass {}",
                    self.weights[c], mass[c]
                ));
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return bad(format!("weights sum to {sum}"));
        }
        Ok(())
    }

    /// The weighted scenario set the reduced problem is solved on.
    pub fn materialize(&self, original: &ScenarioSet) -> Result<ScenarioSet> {
        original.subset(&self.source_ids, &self.weights)
    }

    pub fn save(&self, original: &ScenarioSet, path: impl AsRef<Path>) -> Result<()> {
        self.validate(original)?;
        write_json_atomic(path, self)
    }

    /// Reads a reduced set file. Structure is checked here; consistency with
    /// an original set needs [`ReducedScenarioSet::validate`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let set: Self = serde_json::from_str(&text)?;
        if set.weights.len() != set.source_ids.len() {
            return Err(Error::InvalidReduction("weights and source_ids differ in length".into()));
        }
        Ok(set)
    }
}

pub fn save_reduced_set(
    set: &ReducedScenarioSet,
    original: &ScenarioSet,
    path: impl AsRef<Path>,
) -> Result<()> {
    set.save(original, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(t: usize, load: f64, price: f64) -> Scenario {
        Scenario::new(vec![load; t], vec![price; t]).unwrap()
    }

    fn bundle_json(probs: &[f64], horizons: &[usize]) -> String {
        let scen: Vec<String> = probs
            .iter()
            .zip(horizons)
            .map(|(p, &t)| {
                let v = vec!["1.0"; t].join(",");
                format!(r#"{{"prob":{p},"net_load":[{v}],"price":[{v}]}}"#)
            })
            .collect();
        format!(
            r#"{{"meta":{{"n":{},"t":{},"dt_hours":0.25}},"scenarios":[{}]}}"#,
            probs.len(),
            horizons[0],
            scen.join(",")
        )
    }

    fn parse(json: &str) -> Result<ScenarioSet> {
        ScenarioSet::from_bundle(serde_json::from_str(json).unwrap())
    }

    #[test]
    fn singleton_bundle_loads() {
        let set = parse(&bundle_json(&[1.0], &[4])).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.horizon(), 4);
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let err = parse(&bundle_json(&[0.5, 0.5], &[4, 3])).unwrap_err();
        assert!(matches!(err, Error::InconsistentHorizon(_)), "{err}");
        assert!(err.to_string().contains("inconsistent horizon"));
    }

    #[test]
    fn small_probability_drift_is_renormalised() {
        let set = parse(&bundle_json(&[0.3, 0.3, 0.4000003], &[2, 2, 2])).unwrap();
        let sum = 0.3 + 0.3 + 0.4000003;
        let p = set.probabilities();
        assert!((p[0] - 0.3 / sum).abs() < 1e-15);
        assert!((p[2] - 0.4000003 / sum).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_probability_drift_is_rejected() {
        assert!(parse(&bundle_json(&[0.3, 0.3, 0.41], &[2, 2, 2])).is_err());
        assert!(parse(&bundle_json(&[0.0, 1.0], &[2, 2])).is_err());
        assert!(parse(&bundle_json(&[-0.5, 1.5], &[2, 2])).is_err());
    }

    #[test]
    fn malformed_bundle_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        std::fs::write(&p, "{\"meta\":").unwrap();
        assert!(matches!(load_scenario_set(&p), Err(Error::Json(_))));
    }

    #[test]
    fn bundle_file_round_trip() {
        let set =
            ScenarioSet::new(vec![flat(3, 1.0, 0.1), flat(3, 2.0, 0.2)], vec![0.25, 0.75], 0.25)
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        set.save(&p).unwrap();
        assert_eq!(load_scenario_set(&p).unwrap(), set);
    }

    fn set_of(n: usize) -> ScenarioSet {
        ScenarioSet::uniform((0..n).map(|i| flat(2, i as f64, 0.1)).collect(), 0.25).unwrap()
    }

    #[test]
    fn reduced_round_trip_preserves_ids_and_weights() {
        let orig = set_of(6);
        let red = ReducedScenarioSet::from_assignment(&orig, vec![1, 3, 4], vec![0, 0, 1, 1, 2, 2])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        red.save(&orig, &p).unwrap();
        let back = ReducedScenarioSet::load(&p).unwrap();
        assert_eq!(back.source_ids(), red.source_ids());
        assert_eq!(back.assignment(), red.assignment());
        for (a, b) in back.weights().iter().zip(red.weights()) {
            assert!((a - b).abs() <= 1e-12);
        }
        back.validate(&orig).unwrap();
    }

    #[test]
    fn identity_reduction_lists_every_index_once() {
        let orig = set_of(5);
        let id = ReducedScenarioSet::identity(&orig);
        id.validate(&orig).unwrap();
        let mut ids = id.source_ids().to_vec();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn weights_written_with_full_precision() {
        let orig =
            ScenarioSet::new(vec![flat(2, 0.0, 0.1), flat(2, 1.0, 0.1)], vec![0.3, 0.7], 0.25)
                .unwrap();
        let red = ReducedScenarioSet::from_assignment(&orig, vec![0, 1], vec![0, 1]).unwrap();
        let text = serde_json::to_string(&red).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let w: Vec<f64> =
            v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(w, vec![0.3, 0.7]);
    }

    #[test]
    fn invalid_reductions_are_rejected() {
        let orig = set_of(4);
        // representative not in its own cluster
        assert!(ReducedScenarioSet::from_assignment(&orig, vec![0, 1], vec![1, 1, 0, 0]).is_err());
        // duplicate representative
        assert!(ReducedScenarioSet::from_assignment(&orig, vec![0, 0], vec![0, 0, 1, 1]).is_err());
        // empty cluster
        assert!(ReducedScenarioSet::from_assignment(&orig, vec![0, 1, 2], vec![0, 1, 1, 1]).is_err());
    }
}
