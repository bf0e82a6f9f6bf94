//! Lloyd's k-means with greedy k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// D²-weighted sampling, keeping the best of a few candidates per step.
    #[default]
    KMeansPlusPlus,
    /// k distinct points drawn uniformly.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seeding: Seeding,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        KMeansParams {
            k,
            max_iter: 100,
            tol: 1e-9,
            seeding: Seeding::KMeansPlusPlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<const D: usize> {
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; D]>,
    pub inertia: f64,
    /// Inertia after each assignment step, first to last.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

pub(crate) fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest<const D: usize>(point: &[f64; D], centroids: &[[f64; D]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign<const D: usize>(
    points: &[[f64; D]],
    centroids: &[[f64; D]],
    assignment: &mut [usize],
    dists: &mut [f64],
) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p, centroids);
        assignment[i] = j;
        dists[i] = d;
        inertia += d;
    }
    inertia
}

/// Index drawn with probability proportional to `weights`.
fn weighted_pick<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

fn seed_plus_plus<const D: usize, R: Rng + ?Sized>(
    points: &[[f64; D]],
    k: usize,
    rng: &mut R,
) -> Vec<[f64; D]> {
    let n = points.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut best: Option<(usize, f64)> = None;
            for _ in 0..trials {
                let cand = weighted_pick(&d2, total, rng);
                let potential: f64 = points
                    .iter()
                    .zip(&d2)
                    .map(|(p, &d)| d.min(sq_dist(p, &points[cand])))
                    .sum();
                if best.is_none_or(|(_, b)| potential < b) {
                    best = Some((cand, potential));
                }
            }
            best.map(|(c, _)| c).unwrap_or(0)
        } else {
            // Every point coincides with a chosen centroid.
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn seed_random<const D: usize, R: Rng + ?Sized>(
    points: &[[f64; D]],
    k: usize,
    rng: &mut R,
) -> Vec<[f64; D]> {
    rand::seq::index::sample(rng, points.len(), k)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

pub fn kmeans<const D: usize, R: Rng + ?Sized>(
    points: &[[f64; D]],
    params: &KMeansParams,
    rng: &mut R,
) -> Result<KMeansResult<D>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("features", "empty feature set"));
    }
    if params.k == 0 || params.k > n {
        return Err(Error::invalid(
            "k",
            format!("k = {} must lie in [1, {n}]", params.k),
        ));
    }
    if params.max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be at least 1"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features", "non-finite coordinate"));
    }

    let mut centroids = match params.seeding {
        Seeding::KMeansPlusPlus => seed_plus_plus(points, params.k, rng),
        Seeding::Random => seed_random(points, params.k, rng),
    };
    let mut assignment = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    let mut inertia = assign(points, &centroids, &mut assignment, &mut dists);
    history.push(inertia);

    while iterations < params.max_iter {
        iterations += 1;
        let mut sums = vec![[0.0; D]; params.k];
        let mut counts = vec![0usize; params.k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut movement: f64 = 0.0;
        let mut taken = vec![false; n];
        for j in 0..params.k {
            let next = if counts[j] > 0 {
                sums[j].map(|s| s / counts[j] as f64)
            } else {
                // Re-seed an empty cluster on the worst-served point.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<usize>, |best, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    });
                match far {
                    Some(i) if dists[i] > 0.0 => {
                        taken[i] = true;
                        dists[i] = 0.0;
                        points[i]
                    }
                    _ => centroids[j],
                }
            };
            movement = movement.max(sq_dist(&centroids[j], &next).sqrt());
            centroids[j] = next;
        }
        inertia = assign(points, &centroids, &mut assignment, &mut dists);
        history.push(inertia);
        if movement < params.tol {
            break;
        }
    }

    Ok(KMeansResult {
        assignment,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
    })
}
