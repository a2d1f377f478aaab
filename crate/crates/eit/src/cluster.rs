//! K-means localization of hole centers from a reconstructed
//! conductivity change.
//!
//! The reconstruction smears each hole into a blob of negative change, so
//! center recovery is a clustering problem: keep the elements carrying a
//! meaningful fraction of the deepest drop, then run weighted Lloyd
//! iterations on their centroids with the hole count supplied by the
//! classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::mesh::Mesh;

/// Default fraction of the peak conductivity drop an element must carry
/// to count as damaged.
pub const DEFAULT_TAU: f64 = 0.2;

const MAX_LLOYD_ITERATIONS: usize = 200;

/// Centroids of the flagged elements with their |conductivity change|
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DamagePointSet {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
}

impl DamagePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Keep the elements whose conductivity drop is at least `tau` times the
/// deepest drop, returning their centroids weighted by |change|.
pub fn extract_damage_points(
    delta_sigma: &[f64],
    mesh: &Mesh,
    tau: f64,
) -> Result<DamagePointSet> {
    if delta_sigma.len() != mesh.n_elements() {
        return Err(Error::ShapeMismatch(format!(
            "{} changes for a {}-element mesh",
            delta_sigma.len(),
            mesh.n_elements()
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold fraction must lie in (0, 1), got {tau}"
        )));
    }
    if delta_sigma.iter().any(|&d| d > 0.0) {
        return Err(Error::InvalidConfig(
            "conductivity changes must be non-positive".into(),
        ));
    }
    let deepest = delta_sigma.iter().cloned().fold(0.0f64, f64::min);
    if deepest == 0.0 {
        return Err(Error::NoDamageDetected);
    }
    let cutoff = tau * deepest;
    let centroids = mesh.element_centroids();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (k, &d) in delta_sigma.iter().enumerate() {
        if d <= cutoff {
            points.push(centroids[k]);
            weights.push(-d);
        }
    }
    Ok(DamagePointSet { points, weights })
}

/// Weighted Lloyd K-means. Initial centroids are K distinct input points
/// chosen by the seed; iterations run until the assignment stops changing
/// or the cap is reached. A cluster left empty is reseeded at the point
/// farthest from its own centroid. Centroids come back sorted by x then y.
pub fn kmeans(points: &DamagePointSet, k: usize, seed: u64) -> Result<Vec<Point2>> {
    if k == 0 {
        return Err(Error::InvalidConfig("cluster count must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::InsufficientPoints {
            needed: k,
            available: points.len(),
        });
    }
    debug_assert_eq!(points.points.len(), points.weights.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = rand::seq::index::sample(&mut rng, points.len(), k);
    let mut centers: Vec<Point2> = init.iter().map(|i| points.points[i]).collect();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut last_objective = f64::INFINITY;

    for _ in 0..MAX_LLOYD_ITERATIONS {
        // Assignment step: nearest centroid, lowest index on ties.
        let mut changed = false;
        for (i, p) in points.points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = p.dist_sq(&centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = p.dist_sq(center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        // Update step: weighted means; empty clusters restart at the point
        // farthest from its assigned centroid.
        let mut sums = vec![(0.0f64, 0.0f64, 0.0f64); k];
        for (i, p) in points.points.iter().enumerate() {
            let w = points.weights[i];
            let s = &mut sums[assignment[i]];
            s.0 += w * p.x;
            s.1 += w * p.y;
            s.2 += w;
        }
        let mut reseeded = false;
        for c in 0..k {
            if sums[c].2 > 0.0 {
                centers[c] = Point2::new(sums[c].0 / sums[c].2, sums[c].1 / sums[c].2);
            } else {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = points.points[a].dist_sq(&centers[assignment[a]]);
                        let db = points.points[b].dist_sq(&centers[assignment[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centers[c] = points.points[far];
                reseeded = true;
            }
        }

        // Lloyd steps never increase the weighted within-cluster sum of
        // squares; a reseed jump is the one sanctioned exception.
        let objective: f64 = points
            .points
            .iter()
            .zip(&points.weights)
            .enumerate()
            .map(|(i, (p, w))| w * p.dist_sq(&centers[assignment[i]]))
            .sum();
        debug_assert!(
            reseeded || objective <= last_objective * (1.0 + 1e-12) + 1e-300,
            "objective rose from {last_objective:e} to {objective:e}"
        );
        last_objective = objective;
    }

    centers.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    Ok(centers)
}

/// Threshold the reconstruction and cluster the surviving element
/// centroids into `k` centers (the classifier supplies `k`).
pub fn predict_centers(
    delta_sigma: &[f64],
    mesh: &Mesh,
    k: usize,
    tau: f64,
    seed: u64,
) -> Result<Vec<Point2>> {
    let points = extract_damage_points(delta_sigma, mesh, tau)?;
    kmeans(&points, k, seed)
}
