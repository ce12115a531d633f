//! Trade archetype discovery: K-Means over (log_weight, log_value) with
//! k-means++ seeding, plus median-quadrant labeling of the fitted centroids.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CLUSTERS: usize = 4;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// A fitted K-Means model over 2-D points (log_weight, log_value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<[f64; 2]>,
    pub seed: u64,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after each Lloyd update; non-increasing.
    pub inertia_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchetypeLabel {
    pub cluster_id: usize,
    pub label: String,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Nearest centroid by squared Euclidean distance, ties to the lowest id.
fn nearest(centroids: &[[f64; 2]], p: [f64; 2]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(*c, p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// k-means++: first centroid uniform, then points sampled with probability
/// proportional to squared distance from the nearest chosen centroid.
fn kmeans_plusplus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)]);

    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                r -= d;
                if r <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all remaining mass zero: duplicate points; pick uniformly
            rng.gen_range(0..n)
        };
        let c = points[next];
        centroids.push(c);
        for (i, p) in points.iter().enumerate() {
            let d = dist2(*p, c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Lloyd iterations with k-means++ seeding.
///
/// Stops when assignments reach a fixed point, when the largest centroid
/// shift drops below `tol`, or after `max_iter` rounds. Empty clusters are
/// repaired by reassigning the point currently farthest from its centroid.
/// Deterministic for a fixed seed and input order.
pub fn fit_kmeans(
    points: &[[f64; 2]],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::parameter("k must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::parameter(format!(
            "need at least k={k} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::parameter("points must be finite"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plusplus(points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;

        // assignment
        let mut changed = false;
        let mut sizes = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(&centroids, *p);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            sizes[c] += 1;
        }

        // empty-cluster repair: hand the farthest point its own cluster
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut far_i = None;
            let mut far_d = -1.0;
            for (i, p) in points.iter().enumerate() {
                if sizes[labels[i]] <= 1 {
                    continue;
                }
                let d = dist2(*p, centroids[labels[i]]);
                if d > far_d {
                    far_d = d;
                    far_i = Some(i);
                }
            }
            if let Some(i) = far_i {
                sizes[labels[i]] -= 1;
                labels[i] = c;
                sizes[c] = 1;
                changed = true;
            }
        }

        // update
        let mut sums = vec![[0.0f64; 2]; k];
        for (i, p) in points.iter().enumerate() {
            sums[labels[i]][0] += p[0];
            sums[labels[i]][1] += p[1];
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if sizes[c] > 0 {
                let mean = [sums[c][0] / sizes[c] as f64, sums[c][1] / sizes[c] as f64];
                shift = shift.max(dist2(mean, centroids[c]).sqrt());
                centroids[c] = mean;
            }
        }

        let inertia: f64 = points
            .iter()
            .enumerate()
            .map(|(i, p)| dist2(*p, centroids[labels[i]]))
            .sum();
        inertia_trace.push(inertia);

        if !changed || shift < tol {
            break;
        }
    }

    let inertia = *inertia_trace.last().unwrap();
    Ok(KMeansModel {
        k,
        centroids,
        seed,
        inertia,
        iterations_run: iterations,
        inertia_trace,
    })
}

/// Cluster of the nearest centroid; ties break to the lowest cluster id.
pub fn assign(model: &KMeansModel, point: [f64; 2]) -> Result<usize> {
    if !point[0].is_finite() || !point[1].is_finite() {
        return Err(Error::parameter("point must be finite"));
    }
    Ok(nearest(&model.centroids, point).0)
}

pub const LABEL_LOW_W_HIGH_V: &str = "Low Weight / High Value (Specialty)";
pub const LABEL_HIGH_W_LOW_V: &str = "High Weight / Low Value (Bulk)";
pub const LABEL_LOW_W_LOW_V: &str = "Low Weight / Low Value";
pub const LABEL_HIGH_W_HIGH_V: &str = "High Weight / High Value";

/// Label each centroid by its quadrant relative to the global medians
/// (at or above the median counts as High).
pub fn label_archetypes(
    model: &KMeansModel,
    global_median_log_weight: f64,
    global_median_log_value: f64,
) -> Vec<ArchetypeLabel> {
    model
        .centroids
        .iter()
        .enumerate()
        .map(|(cluster_id, c)| {
            let high_w = c[0] >= global_median_log_weight;
            let high_v = c[1] >= global_median_log_value;
            let label = match (high_w, high_v) {
                (false, true) => LABEL_LOW_W_HIGH_V,
                (true, false) => LABEL_HIGH_W_LOW_V,
                (false, false) => LABEL_LOW_W_LOW_V,
                (true, true) => LABEL_HIGH_W_HIGH_V,
            };
            ArchetypeLabel {
                cluster_id,
                label: label.to_string(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_single_cluster() {
        let points = vec![[2.0, 3.0]; 10];
        let m = fit_kmeans(&points, 1, 1, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert_eq!(m.centroids[0], [2.0, 3.0]);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn two_cluster_split_matches_brute_force() {
        // 1-D points embedded on the x axis; brute force over all 2-partitions
        // says the optimum splits {0, 0.1} from {9.9, 10}.
        let xs = [0.0, 0.1, 9.9, 10.0];
        let points: Vec<[f64; 2]> = xs.iter().map(|x| [*x, 0.0]).collect();

        let mut best = f64::INFINITY;
        let mut best_centroids = (0.0, 0.0);
        for mask in 1u32..(1 << xs.len()) - 1 {
            let (mut a, mut b): (Vec<f64>, Vec<f64>) = (vec![], vec![]);
            for (i, x) in xs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    a.push(*x);
                } else {
                    b.push(*x);
                }
            }
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let inertia: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            if inertia < best {
                best = inertia;
                best_centroids = (ma.min(mb), ma.max(mb));
            }
        }
        assert_eq!(best_centroids, (0.05, 9.95));

        let m = fit_kmeans(&points, 2, 3, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let mut got: Vec<f64> = m.centroids.iter().map(|c| c[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] - 0.05).abs() < 1e-12);
        assert!((got[1] - 9.95).abs() < 1e-12);
        assert!((m.inertia - best).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_is_parameter_error() {
        assert!(fit_kmeans(&[[0.0, 0.0]], 2, 0, 10, 1e-6).is_err());
    }

    #[test]
    fn assign_exact_centroid_and_tie_rule() {
        let model = KMeansModel {
            k: 3,
            centroids: vec![[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]],
            seed: 0,
            inertia: 0.0,
            iterations_run: 0,
            inertia_trace: vec![],
        };
        assert_eq!(assign(&model, [5.0, 5.0]).unwrap(), 2);
        // equidistant between centroids 0 and 1
        assert_eq!(assign(&model, [1.0, 0.0]).unwrap(), 0);
        assert!(assign(&model, [f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn inertia_trace_non_increasing_and_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let centers = [[-3.0, -3.0], [3.0, -3.0], [-3.0, 3.0], [3.0, 3.0]];
        let mut points = Vec::new();
        for i in 0..400 {
            let c = centers[i % 4];
            points.push([c[0] + rng.gen::<f64>() - 0.5, c[1] + rng.gen::<f64>() - 0.5]);
        }
        let a = fit_kmeans(&points, 4, 42, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let b = fit_kmeans(&points, 4, 42, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert_eq!(a, b);
        for w in a.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "inertia increased: {:?}", w);
        }
    }

    #[test]
    fn converged_centroids_are_means_and_assignments_nearest() {
        let points: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let b = if i % 2 == 0 { 0.0 } else { 8.0 };
                [b + (i as f64 % 5.0) * 0.01, b - (i as f64 % 3.0) * 0.01]
            })
            .collect();
        let m = fit_kmeans(&points, 2, 7, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        // recompute assignment and means from scratch
        let mut sums = vec![[0.0f64; 2]; 2];
        let mut counts = vec![0usize; 2];
        for p in &points {
            let (c, _) = nearest(&m.centroids, *p);
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        for c in 0..2 {
            assert!(counts[c] > 0);
            assert!((sums[c][0] / counts[c] as f64 - m.centroids[c][0]).abs() < 1e-9);
            assert!((sums[c][1] / counts[c] as f64 - m.centroids[c][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrant_labels() {
        let model = KMeansModel {
            k: 4,
            centroids: vec![[-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [1.0, 1.0]],
            seed: 0,
            inertia: 0.0,
            iterations_run: 0,
            inertia_trace: vec![],
        };
        let labels = label_archetypes(&model, 0.0, 0.0);
        assert_eq!(labels[0].label, LABEL_LOW_W_HIGH_V);
        assert_eq!(labels[1].label, LABEL_HIGH_W_LOW_V);
        assert_eq!(labels[2].label, LABEL_LOW_W_LOW_V);
        assert_eq!(labels[3].label, LABEL_HIGH_W_HIGH_V);
    }
}
