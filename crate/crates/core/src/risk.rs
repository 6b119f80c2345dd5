//! Discrete VaR/CVaR arithmetic.
//!
//! For atoms `F_i` with probabilities `γ_i`, sorted non-decreasingly, the VaR
//! at level α is the first sorted atom whose cumulative probability reaches α.
//! CVaR is then `v + Σ γ_i [F_i − v]_+ / (1 − α)`, and the risk-averse
//! objective is `E[F] + λ·CVaR`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack used when comparing a cumulative probability sum against α, so that
/// α landing exactly on a boundary selects the earlier atom despite rounding.
const CUMSUM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub lambda: f64,
    pub alpha: f64,
}

impl RiskParams {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        let p = Self { lambda, alpha };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// `λ / (1 − α)`, the weight of tail excesses in the objective.
    pub fn tail_weight(&self) -> f64 {
        self.lambda / (1.0 - self.alpha)
    }
}

impl Default for RiskParams {
    fn default() -> Self {
        Self { lambda: 0.5, alpha: 0.95 }
    }
}

/// Scenario costs under a fixed decision, with the sort order and VaR atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedObjectives {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// `values[order[0]] <= values[order[1]] <= ...`; ties keep index order.
    pub order: Vec<usize>,
    /// Zero-based position of the VaR atom within `order`.
    pub var_position: usize,
    pub var_value: f64,
}

impl ProjectedObjectives {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One-based rank of the VaR atom in sorted order.
    pub fn var_index(&self) -> usize {
        self.var_position + 1
    }

    /// Original index of the VaR atom.
    pub fn var_scenario(&self) -> usize {
        self.order[self.var_position]
    }

    pub fn sorted_values(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.values[i]).collect()
    }

    pub fn sorted_probabilities(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.probabilities[i]).collect()
    }

    pub fn expectation(&self) -> f64 {
        self.values.iter().zip(&self.probabilities).map(|(f, g)| f * g).sum()
    }

    /// Original indices whose value lies strictly above the VaR.
    pub fn tail_scenarios(&self) -> Vec<usize> {
        self.order[self.var_position + 1..]
            .iter()
            .copied()
            .filter(|&i| self.values[i] > self.var_value)
            .collect()
    }
}

pub fn project(values: &[f64], probabilities: &[f64], alpha: f64) -> Result<ProjectedObjectives> {
    if values.is_empty() {
        return Err(Error::param("cannot project an empty set of values"));
    }
    if values.len() != probabilities.len() {
        return Err(Error::param(format!(
            "{} values but {} probabilities",
            values.len(),
            probabilities.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("non-finite objective value"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable: equal values keep their original index order
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut cum = 0.0;
    let mut var_position = order.len() - 1;
    for (pos, &i) in order.iter().enumerate() {
        cum += probabilities[i];
        if cum + CUMSUM_EPS >= alpha {
            var_position = pos;
            break;
        }
    }
    let var_value = values[order[var_position]];
    Ok(ProjectedObjectives {
        values: values.to_vec(),
        probabilities: probabilities.to_vec(),
        order,
        var_position,
        var_value,
    })
}

/// CVaR of a projection built with the same `alpha`.
pub fn cvar(proj: &ProjectedObjectives, alpha: f64) -> f64 {
    ru_value(&proj.values, &proj.probabilities, alpha, proj.var_value)
}

/// Rockafellar–Uryasev function `v + Σ γ_i [F_i − v]_+ / (1 − α)`.
fn ru_value(values: &[f64], probabilities: &[f64], alpha: f64, v: f64) -> f64 {
    let excess: f64 =
        values.iter().zip(probabilities).map(|(&f, &g)| g * (f - v).max(0.0)).sum();
    v + excess / (1.0 - alpha)
}

/// CVaR as the minimum of the Rockafellar–Uryasev function over all atoms.
/// Independent of the sorting in [`project`]; used as a cross-check.
pub fn cvar_by_scan(values: &[f64], probabilities: &[f64], alpha: f64) -> f64 {
    values
        .iter()
        .map(|&v| ru_value(values, probabilities, alpha, v))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub expectation: f64,
    pub var: f64,
    pub cvar: f64,
    pub objective: f64,
}

pub fn decompose(proj: &ProjectedObjectives, params: RiskParams) -> RiskDecomposition {
    let expectation = proj.expectation();
    let cvar = cvar(proj, params.alpha);
    RiskDecomposition { expectation, var: proj.var_value, cvar, objective: expectation + params.lambda * cvar }
}

pub fn evaluate_objective(
    values: &[f64],
    probabilities: &[f64],
    params: RiskParams,
) -> Result<RiskDecomposition> {
    params.check()?;
    let proj = project(values, probabilities, params.alpha)?;
    Ok(decompose(&proj, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const U4: [f64; 4] = [0.25; 4];

    #[test]
    fn project_uniform_four_atoms() {
        let p = project(&[10.0, 20.0, 30.0, 40.0], &U4, 0.5).unwrap();
        assert_eq!(p.var_index(), 2);
        assert_eq!(p.var_value, 20.0);
    }

    #[test]
    fn project_constant_distribution() {
        for alpha in [0.1, 0.5, 0.99] {
            let p = project(&[7.0; 3], &[1.0 / 3.0; 3], alpha).unwrap();
            assert_eq!(p.var_value, 7.0);
        }
    }

    #[test]
    fn project_weighted_unsorted() {
        let p = project(&[3.0, 1.0, 2.0], &[0.3, 0.4, 0.3], 0.95).unwrap();
        // one-based (2,3,1) in the original numbering
        assert_eq!(p.order, vec![1, 2, 0]);
        assert_eq!(p.var_index(), 3);
        assert_eq!(p.var_value, 3.0);
    }

    #[test]
    fn project_ties_follow_index_order() {
        let p = project(&[5.0, 1.0, 5.0, 5.0], &U4, 0.6).unwrap();
        assert_eq!(p.order, vec![1, 0, 2, 3]);
        assert_eq!(p.var_scenario(), 2);
    }

    #[test]
    fn project_rejects_empty() {
        assert!(project(&[], &[], 0.5).is_err());
    }

    #[test]
    fn cvar_examples() {
        let v = [10.0, 20.0, 30.0, 40.0];
        let p = project(&v, &U4, 0.5).unwrap();
        assert!((cvar(&p, 0.5) - 35.0).abs() < 1e-12);
        let single = project(&[42.0], &[1.0], 0.9).unwrap();
        assert_eq!(cvar(&single, 0.9), 42.0);
        let c = project(&[3.5; 5], &[0.2; 5], 0.8).unwrap();
        assert!((cvar(&c, 0.8) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn scan_examples() {
        assert!((cvar_by_scan(&[10.0, 20.0, 30.0, 40.0], &U4, 0.5) - 35.0).abs() < 1e-12);
        assert!((cvar_by_scan(&[2.0; 3], &[1.0 / 3.0; 3], 0.7) - 2.0).abs() < 1e-12);
        assert!((cvar_by_scan(&[1.0, 2.0], &[0.9, 0.1], 0.95) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        let rp = RiskParams::new(0.5, 0.5).unwrap();
        let d = evaluate_objective(&[10.0, 20.0, 30.0, 40.0], &U4, rp).unwrap();
        assert!((d.expectation - 25.0).abs() < 1e-12);
        assert!((d.cvar - 35.0).abs() < 1e-12);
        assert!((d.objective - 42.5).abs() < 1e-12);

        let neutral = RiskParams::new(0.0, 0.95).unwrap();
        let d = evaluate_objective(&[1.0, 5.0, 9.0], &[0.2, 0.5, 0.3], neutral).unwrap();
        assert_eq!(d.objective, d.expectation);

        let d = evaluate_objective(&[100.0], &[1.0], RiskParams::new(1.0, 0.95).unwrap()).unwrap();
        assert!((d.objective - 200.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(RiskParams::new(-0.1, 0.5).is_err());
        assert!(RiskParams::new(0.5, 1.0).is_err());
        assert!(RiskParams::new(0.5, 0.0).is_err());
    }

    fn distribution() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0f64..100.0, n),
                proptest::collection::vec(0.01f64..1.0, n),
            )
                .prop_map(|(v, w)| {
                    let s: f64 = w.iter().sum();
                    (v, w.into_iter().map(|x| x / s).collect())
                })
        })
    }

    proptest! {
        #[test]
        fn cvar_is_monotone_in_alpha((v, g) in distribution()) {
            let mut prev = f64::NEG_INFINITY;
            for k in 1..20 {
                let a = k as f64 / 20.0;
                let c = cvar(&project(&v, &g, a).unwrap(), a);
                prop_assert!(c >= prev - 1e-9);
                prev = c;
            }
        }

        #[test]
        fn cvar_dominates_expectation((v, g) in distribution(), a in 0.05f64..0.95) {
            let p = project(&v, &g, a).unwrap();
            let c = cvar(&p, a);
            let e = p.expectation();
            prop_assert!(c >= e - 1e-9);
            if v.iter().all(|&x| x == v[0]) {
                prop_assert!((c - e).abs() < 1e-12);
            } else {
                prop_assert!(c > e);
            }
        }

        #[test]
        fn cvar_is_affine_equivariant((v, g) in distribution(), a in 0.05f64..0.95,
                                      scale in 0.1f64..10.0, shift in -50.0f64..50.0) {
            let w: Vec<f64> = v.iter().map(|x| scale * x + shift).collect();
            let c0 = cvar(&project(&v, &g, a).unwrap(), a);
            let c1 = cvar(&project(&w, &g, a).unwrap(), a);
            prop_assert!((c1 - (scale * c0 + shift)).abs() < 1e-7 * (1.0 + c1.abs()));
        }
    }
}
