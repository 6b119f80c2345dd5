use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::ProjectedObjectives;

/// Projected objectives grouped into `N'` weighted atoms, in non-decreasing
/// order of value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedObjectives {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Original scenario indices behind each atom.
    pub member_ids: Vec<Vec<usize>>,
}

impl AggregatedObjectives {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Probability-weighted mean of each group of original scenarios.
    pub fn from_groups(proj: &ProjectedObjectives, groups: Vec<Vec<usize>>) -> Result<Self> {
        let n = proj.len();
        let mut seen = vec![false; n];
        for &i in groups.iter().flatten() {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::param(format!("group member {i} out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) || groups.iter().any(Vec::is_empty) {
            return Err(Error::param("groups must be non-empty and cover every scenario"));
        }
        let mut atoms: Vec<(f64, f64, Vec<usize>)> = groups
            .into_iter()
            .map(|g| {
                let mass: f64 = g.iter().map(|&i| proj.probabilities[i]).sum();
                let mean = match g[..] {
                    [i] => proj.values[i],
                    _ => g.iter().map(|&i| proj.probabilities[i] * proj.values[i]).sum::<f64>() / mass,
                };
                (mean, mass, g)
            })
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Self { values: vec![], probabilities: vec![], member_ids: vec![] };
        for (v, p, g) in atoms {
            out.values.push(v);
            out.probabilities.push(p);
            out.member_ids.push(g);
        }
        Ok(out)
    }
}

/// Number of original atoms strictly above the VaR value.
pub fn tail_count(proj: &ProjectedObjectives) -> usize {
    proj.values.iter().filter(|&&v| v > proj.var_value).count()
}

/// Groups the sorted projection into `n_prime` contiguous atoms. Atoms above
/// the VaR value stay singletons; the rest is split into groups of roughly
/// equal probability mass.
pub fn aggregate(proj: &ProjectedObjectives, n_prime: usize) -> Result<AggregatedObjectives> {
    let n = proj.len();
    if n_prime == 0 || n_prime > n {
        return Err(Error::param(format!("aggregation size {n_prime} must lie in 1..={n}")));
    }
    let order = &proj.order;
    let body: Vec<usize> = order.iter().copied().filter(|&i| proj.values[i] <= proj.var_value).collect();
    let tail: Vec<usize> = order.iter().copied().filter(|&i| proj.values[i] > proj.var_value).collect();
    let needed = tail.len() + usize::from(!body.is_empty());
    if n_prime < needed {
        return Err(Error::param(format!(
            "aggregation size {n_prime} is smaller than the {} tail atoms plus one body group",
            tail.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(n_prime);
    let mut groups_left = n_prime - tail.len();
    let mut mass_left: f64 = body.iter().map(|&i| proj.probabilities[i]).sum();
    let mut current = Vec::new();
    let mut acc = 0.0;
    for (pos, &i) in body.iter().enumerate() {
        current.push(i);
        acc += proj.probabilities[i];
        let atoms_after = body.len() - pos - 1;
        if groups_left > 1 && (atoms_after == groups_left - 1 || acc >= mass_left / groups_left as f64 - 1e-12) {
            groups.push(std::mem::take(&mut current));
            mass_left -= acc;
            acc = 0.0;
            groups_left -= 1;
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups.extend(tail.into_iter().map(|i| vec![i]));
    debug_assert_eq!(groups.len(), n_prime);
    AggregatedObjectives::from_groups(proj, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::project;

    #[test]
    fn weighted_means_of_given_groups() {
        let p = project(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5], 0.5).unwrap();
        let a = AggregatedObjectives::from_groups(&p, vec![vec![0, 1], vec![2]]).unwrap();
        assert!((a.values[0] - 1.6).abs() < 1e-12 && (a.values[1] - 3.0).abs() < 1e-12);
        assert!((a.probabilities[0] - 0.5).abs() < 1e-12 && (a.probabilities[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn full_size_is_identity() {
        let vals = [5.0, 1.0, 4.0, 2.0, 3.0];
        let p = project(&vals, &[0.2; 5], 0.6).unwrap();
        let a = aggregate(&p, 5).unwrap();
        assert_eq!(a.values, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(a.member_ids, vec![vec![1], vec![3], vec![4], vec![2], vec![0]]);
    }

    #[test]
    fn tail_atoms_stay_singletons() {
        let vals: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let p = project(&vals, &[0.05; 20], 0.8).unwrap();
        assert_eq!(tail_count(&p), 4);
        let a = aggregate(&p, 7).unwrap();
        assert_eq!(a.len(), 7);
        for j in 3..7 {
            assert_eq!(a.member_ids[j].len(), 1);
            assert!(a.values[j] > p.var_value);
        }
        assert!((a.probabilities[..3].iter().sum::<f64>() - 0.8).abs() < 1e-12);
        assert!(matches!(aggregate(&p, 4), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn body_groups_have_equal_mass_when_divisible() {
        let vals: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let p = project(&vals, &[1.0 / 12.0; 12], 0.99).unwrap();
        assert_eq!(tail_count(&p), 0);
        let a = aggregate(&p, 4).unwrap();
        for g in &a.member_ids {
            assert_eq!(g.len(), 3);
        }
    }
}
