//! Distribution-driven reductions: k-means and average-linkage hierarchical
//! clustering. Both return medoids (actual members) so their output can be
//! evaluated exactly like any other reduction.
//!
//! Features are the flattened net-load and price series, each channel divided
//! by its global standard deviation over the whole set.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ReducedScenarioSet, ScenarioSet};

const MAX_LLOYD_ITERS: usize = 300;
const MAX_RESEEDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    EuclideanFlat,
    Wasserstein1d,
}

fn check_k(set: &ScenarioSet, k: usize) -> Result<()> {
    if k == 0 || k > set.len() {
        return Err(Error::param(format!("k = {k} must lie in 1..={}", set.len())));
    }
    Ok(())
}

fn channel_scale(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 1e-12 {
        sd
    } else {
        1.0
    }
}

/// Standardized channels per scenario: (net load, price).
fn standardized(set: &ScenarioSet) -> Vec<(Vec<f64>, Vec<f64>)> {
    let sl = channel_scale(set.scenarios().iter().flat_map(|s| s.net_load.iter().copied()));
    let sp = channel_scale(set.scenarios().iter().flat_map(|s| s.price.iter().copied()));
    set.scenarios()
        .iter()
        .map(|s| {
            (s.net_load.iter().map(|v| v / sl).collect(), s.price.iter().map(|v| v / sp).collect())
        })
        .collect()
}

/// Flattened standardized `2T` feature vectors.
pub fn features(set: &ScenarioSet) -> Vec<Vec<f64>> {
    standardized(set).into_iter().map(|(mut l, p)| {
        l.extend(p);
        l
    }).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn wasserstein_sorted(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Pairwise scenario distances under `kind`.
pub fn distance_matrix(set: &ScenarioSet, kind: DistanceKind) -> Vec<Vec<f64>> {
    let n = set.len();
    let rows: Vec<Vec<f64>> = match kind {
        DistanceKind::EuclideanFlat => {
            let f = features(set);
            (0..n).into_par_iter().map(|i| (0..n).map(|j| sq_dist(&f[i], &f[j]).sqrt()).collect()).collect()
        }
        DistanceKind::Wasserstein1d => {
            let sorted: Vec<(Vec<f64>, Vec<f64>)> = standardized(set)
                .into_iter()
                .map(|(mut l, mut p)| {
                    l.sort_by(f64::total_cmp);
                    p.sort_by(f64::total_cmp);
                    (l, p)
                })
                .collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            0.5 * (wasserstein_sorted(&sorted[i].0, &sorted[j].0)
                                + wasserstein_sorted(&sorted[i].1, &sorted[j].1))
                        })
                        .collect()
                })
                .collect()
        }
    };
    rows
}

/// Outcome of one k-means run.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub reduction: ReducedScenarioSet,
    /// Probability-weighted within-cluster sum of squares.
    pub inertia: f64,
}

/// Best of `restarts` seeded k-means runs (lowest inertia); restart `r`
/// uses seed `seed + r`.
pub fn kmeans_reduce(set: &ScenarioSet, k: usize, seed: u64, restarts: usize) -> Result<ReducedScenarioSet> {
    let mut best: Option<KMeansRun> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans_run(set, k, seed.wrapping_add(r as u64))?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart").reduction)
}

/// A single k-means++ / Lloyd run converted to medoids.
pub fn kmeans_run(set: &ScenarioSet, k: usize, seed: u64) -> Result<KMeansRun> {
    check_k(set, k)?;
    let x = features(set);
    let w = set.probabilities();
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(&x, w, k, &mut rng);
    let mut labels = vec![0usize; n];
    for attempt in 0..=MAX_RESEEDS {
        lloyd(&x, w, &mut centroids, &mut labels);
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if empty.is_empty() {
            break;
        }
        if attempt == MAX_RESEEDS {
            steal_for_empty(&x, &centroids, &mut labels, k);
            break;
        }
        for c in empty {
            centroids[c] = x[rng.gen_range(0..n)].clone();
        }
    }
    // medoid: the member closest to its centroid (lowest index on ties)
    let mut reps = vec![usize::MAX; k];
    let mut best = vec![f64::INFINITY; k];
    let mut inertia = 0.0;
    for i in 0..n {
        let c = labels[i];
        let d = sq_dist(&x[i], &centroids[c]);
        inertia += w[i] * d;
        if d < best[c] {
            best[c] = d;
            reps[c] = i;
        }
    }
    let reduction = ReducedScenarioSet::from_assignment(set, reps, labels)?;
    Ok(KMeansRun { reduction, inertia })
}

fn plus_plus(x: &[Vec<f64>], w: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(x[sample_weighted(w, rng).unwrap_or(0)].clone());
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let weights: Vec<f64> = (0..n).map(|i| w[i] * d2[i]).collect();
        let pick = sample_weighted(&weights, rng).unwrap_or_else(|| rng.gen_range(0..n));
        centroids.push(x[pick].clone());
        let last = centroids.last().expect("just pushed");
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(&x[i], last));
        }
    }
    centroids
}

fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut r = rng.gen::<f64>() * total;
    for (i, &wi) in weights.iter().enumerate() {
        if r < wi {
            return Some(i);
        }
        r -= wi;
    }
    weights.iter().rposition(|&wi| wi > 0.0)
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centroids.iter().enumerate() {
        let d = sq_dist(p, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn lloyd(x: &[Vec<f64>], w: &[f64], centroids: &mut [Vec<f64>], labels: &mut [usize]) {
    let dim = x[0].len();
    for iter in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, p) in x.iter().enumerate() {
            let c = nearest(p, centroids);
            if c != labels[i] {
                changed = true;
                labels[i] = c;
            }
        }
        if iter > 0 && !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut mass = vec![0.0; centroids.len()];
        for (i, p) in x.iter().enumerate() {
            let c = labels[i];
            mass[c] += w[i];
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += w[i] * v;
            }
        }
        for (c, ctr) in centroids.iter_mut().enumerate() {
            if mass[c] > 0.0 {
                for (v, s) in ctr.iter_mut().zip(&sums[c]) {
                    *v = s / mass[c];
                }
            }
        }
    }
}

/// Gives each empty cluster the member farthest from its own centroid,
/// taken from a cluster with at least two members.
fn steal_for_empty(x: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return;
        };
        let donor = (0..x.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&x[a], &centroids[labels[a]])
                    .total_cmp(&sq_dist(&x[b], &centroids[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two members");
        labels[donor] = empty;
    }
}

/// Average-linkage agglomerative clustering down to `k` clusters; each
/// cluster is represented by its medoid (smallest total distance to the
/// other members).
pub fn hierarchical_reduce(set: &ScenarioSet, k: usize, distance: DistanceKind) -> Result<ReducedScenarioSet> {
    check_k(set, k)?;
    let d = distance_matrix(set, distance);
    let labels = average_linkage(&d, k);
    let mut reps = vec![usize::MAX; k];
    let mut best = vec![f64::INFINITY; k];
    for i in 0..d.len() {
        let c = labels[i];
        let total: f64 = (0..d.len()).filter(|&j| labels[j] == c).map(|j| d[i][j]).sum();
        if total < best[c] {
            best[c] = total;
            reps[c] = i;
        }
    }
    ReducedScenarioSet::from_assignment(set, reps, labels)
}

/// Cluster labels `0..k` from average linkage on the distance matrix `d`.
/// Labels are numbered by the smallest member index.
pub fn average_linkage(d: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = d.len();
    let mut dist: Vec<Vec<f64>> = d.to_vec();
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut clusters = n;
    while clusters > k {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            for b in a + 1..n {
                if alive[b] && dist[a][b] < best.2 {
                    best = (a, b, dist[a][b]);
                }
            }
        }
        let (a, b, _) = best;
        // Lance–Williams update for average linkage
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for c in 0..n {
            if alive[c] && c != a && c != b {
                let v = (na * dist[a][c] + nb * dist[b][c]) / (na + nb);
                dist[a][c] = v;
                dist[c][a] = v;
            }
        }
        size[a] += size[b];
        alive[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        clusters -= 1;
    }
    let mut relabel = vec![usize::MAX; n];
    let mut next = 0;
    owner
        .iter()
        .map(|&o| {
            if relabel[o] == usize::MAX {
                relabel[o] = next;
                next += 1;
            }
            relabel[o]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn set_from(rows: &[(f64, f64)]) -> ScenarioSet {
        let sc = rows.iter().map(|&(l, p)| Scenario::new(vec![l, l + 1.0], vec![p, p]).unwrap()).collect();
        ScenarioSet::uniform(sc, 1.0).unwrap()
    }

    #[test]
    fn k_equal_n_is_identity() {
        let set = set_from(&[(0.0, 1.0), (5.0, 2.0), (9.0, 1.5), (2.0, 3.0)]);
        for red in [
            kmeans_reduce(&set, 4, 1, 3).unwrap(),
            hierarchical_reduce(&set, 4, DistanceKind::EuclideanFlat).unwrap(),
            hierarchical_reduce(&set, 4, DistanceKind::Wasserstein1d).unwrap(),
        ] {
            let mut ids = red.source_ids().to_vec();
            ids.sort();
            assert_eq!(ids, vec![0, 1, 2, 3]);
            assert!(red.weights().iter().all(|&w| (w - 0.25).abs() < 1e-12));
        }
    }

    #[test]
    fn duplicates_fill_every_cluster() {
        let set = set_from(&[(3.0, 1.0); 6]);
        let red = kmeans_reduce(&set, 3, 0, 1).unwrap();
        assert_eq!(red.k(), 3);
        assert!((red.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        red.validate(&set).unwrap();
    }

    #[test]
    fn separated_blobs_give_pure_clusters() {
        let mut rows = Vec::new();
        for i in 0..5 {
            rows.push((i as f64 * 0.1, 1.0));
        }
        for i in 0..5 {
            rows.push((100.0 + i as f64 * 0.1, 1.0));
        }
        let set = set_from(&rows);
        for seed in 0..5 {
            let red = kmeans_reduce(&set, 2, seed, 1).unwrap();
            let a = red.assignment();
            assert!(a[..5].iter().all(|&c| c == a[0]));
            assert!(a[5..].iter().all(|&c| c == a[5]));
            assert_ne!(a[0], a[5]);
        }
    }

    #[test]
    fn average_linkage_joins_the_close_pair() {
        let d = vec![vec![0.0, 1.0, 10.0], vec![1.0, 0.0, 10.0], vec![10.0, 10.0, 0.0]];
        assert_eq!(average_linkage(&d, 2), vec![0, 0, 1]);
        // a scenario and its copy merge first
        let set = set_from(&[(0.0, 1.0), (50.0, 2.0), (0.0, 1.0), (20.0, 4.0)]);
        let red = hierarchical_reduce(&set, 3, DistanceKind::EuclideanFlat).unwrap();
        assert_eq!(red.assignment()[0], red.assignment()[2]);
    }

    #[test]
    fn wasserstein_of_permuted_series_is_zero() {
        let a = Scenario::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Scenario::new(vec![3.0, 1.0, 2.0], vec![2.0, 3.0, 1.0]).unwrap();
        let c = Scenario::new(vec![2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0]).unwrap();
        let set = ScenarioSet::uniform(vec![a, b, c], 1.0).unwrap();
        let d = distance_matrix(&set, DistanceKind::Wasserstein1d);
        assert!(d[0][1].abs() < 1e-12);
        assert!(d[0][2] > 0.0 && (d[0][2] - d[2][0]).abs() < 1e-15);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let rows: Vec<(f64, f64)> = (0..12).map(|i| ((i * 7 % 5) as f64, (i % 3) as f64)).collect();
        let set = set_from(&rows);
        assert_eq!(kmeans_reduce(&set, 3, 9, 2).unwrap(), kmeans_reduce(&set, 3, 9, 2).unwrap());
    }
}
