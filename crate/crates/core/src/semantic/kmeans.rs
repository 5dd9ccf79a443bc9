use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{GsecError, Result};
use crate::numerics::{squared_distance, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centers: Matrix,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration of the winning restart.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn cluster_count(&self) -> usize {
        self.centers.rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansOptions {
    pub max_iterations: usize,
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            restarts: 5,
        }
    }
}

/// Seed used by restart `r` of a run seeded with `seed`.
pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed ^ (restart as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia wins (earliest restart on ties).
pub fn kmeans(data: &Matrix, clusters: usize, options: KMeansOptions, seed: u64) -> Result<KMeansResult> {
    if options.restarts == 0 {
        return Err(GsecError::Domain("k-means needs at least one restart".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..options.restarts {
        let run = kmeans_single(data, clusters, options.max_iterations, restart_seed(seed, r))?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// A single k-means++ seeded Lloyd run.
pub fn kmeans_single(data: &Matrix, clusters: usize, max_iterations: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.rows();
    if clusters == 0 || clusters > n {
        return Err(GsecError::Domain(format!(
            "cannot form {clusters} clusters from {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(data, clusters, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..max_iterations.max(1) {
        let changed = assign(data, &centers, &mut assignment);
        update_centers(data, &assignment, &mut centers);
        history.push(inertia(data, &centers, &assignment));
        if !changed {
            break;
        }
    }

    Ok(KMeansResult {
        inertia: *history.last().expect("at least one iteration"),
        centers,
        assignment,
        inertia_history: history,
    })
}

fn plus_plus_init(data: &Matrix, clusters: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = data.rows();
    let mut chosen = Vec::with_capacity(clusters);
    chosen.push(rng.random_range(0..n));
    let mut dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i), data.row(chosen[0])))
        .collect();
    while chosen.len() < clusters {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // rounding can walk off the end onto a zero-distance point
            if dist[pick] == 0.0 {
                pick = dist.iter().rposition(|&d| d > 0.0).expect("positive mass");
            }
            pick
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), data.row(next)));
        }
    }
    data.select_rows(&chosen)
}

/// Nearest-center assignment; a point keeps its cluster unless another center
/// is strictly closer. Returns whether anything moved.
fn assign(data: &Matrix, centers: &Matrix, assignment: &mut [usize]) -> bool {
    let updated: Vec<usize> = assignment
        .par_iter()
        .enumerate()
        .map(|(i, &current)| {
            let point = data.row(i);
            let mut best = current;
            let mut best_d = if current < centers.rows() {
                squared_distance(point, centers.row(current))
            } else {
                f64::INFINITY
            };
            for c in 0..centers.rows() {
                let d = squared_distance(point, centers.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect();
    let changed = updated.as_slice() != assignment;
    assignment.copy_from_slice(&updated);
    changed
}

/// Moves each center to the mean of its members; empty clusters keep their
/// previous center.
fn update_centers(data: &Matrix, assignment: &[usize], centers: &mut Matrix) {
    let d = data.cols();
    let mut sums = Matrix::zeros(centers.rows(), d);
    let mut counts = vec![0usize; centers.rows()];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
            *s += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
}

fn inertia(data: &Matrix, centers: &Matrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(data.row(i), centers.row(c)))
        .sum()
}

#[cfg(test)]
mod tests {
    use rand_distr::StandardNormal;

    use super::*;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn one_center_per_point() {
        let m = random_matrix(12, 3, 1);
        let r = kmeans(&m, 12, KMeansOptions::default(), 4).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut seen = r.assignment.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn far_pairs_give_pair_means() {
        let m = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 2.0],
            vec![100.0, 100.0],
            vec![102.0, 100.0],
        ])
        .unwrap();
        let r = kmeans(&m, 2, KMeansOptions::default(), 0).unwrap();
        let mut centers: Vec<Vec<f64>> = r.centers.row_iter().map(<[f64]>::to_vec).collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(centers, vec![vec![0.0, 1.0], vec![101.0, 100.0]]);
        assert_eq!(r.inertia, 4.0);
    }

    #[test]
    fn restarts_dominate_single_runs() {
        let m = random_matrix(200, 8, 2);
        let opts = KMeansOptions { max_iterations: 100, restarts: 5 };
        let best = kmeans(&m, 5, opts, 77).unwrap();
        for r in 0..5 {
            let single = kmeans_single(&m, 5, 100, restart_seed(77, r)).unwrap();
            assert!(best.inertia <= single.inertia);
        }
    }

    #[test]
    fn inertia_never_increases() {
        let m = random_matrix(300, 4, 3);
        for seed in 0..5 {
            let r = kmeans_single(&m, 7, 100, seed).unwrap();
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", r.inertia_history);
            }
        }
    }

    #[test]
    fn centers_are_member_means() {
        let m = random_matrix(100, 3, 9);
        let r = kmeans(&m, 4, KMeansOptions::default(), 1).unwrap();
        for c in 0..4 {
            let members: Vec<usize> = (0..100).filter(|&i| r.assignment[i] == c).collect();
            let mean = m.select_rows(&members).column_means();
            for (a, b) in mean.iter().zip(r.centers.row(c)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_many_clusters_is_domain_error() {
        let m = random_matrix(3, 2, 0);
        assert!(matches!(
            kmeans(&m, 4, KMeansOptions::default(), 0),
            Err(GsecError::Domain(_))
        ));
    }

    #[test]
    fn duplicate_points_still_seed() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let r = kmeans(&m, 3, KMeansOptions::default(), 0).unwrap();
        assert_eq!(r.inertia, 0.0);
    }
}
