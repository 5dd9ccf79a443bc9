use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GsecError, Result};
use crate::numerics::{dot, norm, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Image,
    Text,
}

/// Exact cosine k-nearest-neighbor lists, self excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborIndex {
    k: usize,
    modality: Modality,
    neighbors: Vec<usize>,
}

impl NeighborIndex {
    /// Index from explicit neighbor lists. Used for fixtures; no self-exclusion
    /// check is made.
    pub fn from_lists(modality: Modality, lists: &[Vec<usize>]) -> Result<Self> {
        let k = lists.first().map_or(0, Vec::len);
        if k == 0 || lists.iter().any(|l| l.len() != k) {
            return Err(GsecError::Shape("neighbor lists must share a nonzero length".into()));
        }
        let n = lists.len();
        if lists.iter().flatten().any(|&j| j >= n) {
            return Err(GsecError::InvalidInput("neighbor index out of range".into()));
        }
        Ok(Self {
            k,
            modality,
            neighbors: lists.concat(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Uniform draw from the neighbors of sample `i`.
    pub fn sample_neighbor<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let row = self.neighbors_of(i);
        row[rng.random_range(0..row.len())]
    }
}

/// Exact k-NN by cosine similarity. Rows are ordered by descending similarity
/// with ties broken by lower sample index.
pub fn build_neighbor_index(matrix: &Matrix, k: usize, modality: Modality) -> Result<NeighborIndex> {
    let n = matrix.rows();
    if k == 0 || k >= n {
        return Err(GsecError::Domain(format!(
            "neighbor count k={k} must satisfy 1 <= k < n={n}"
        )));
    }
    let mut unit = matrix.clone();
    for i in 0..n {
        let row = unit.row_mut(i);
        let len = norm(row);
        if len == 0.0 {
            return Err(GsecError::Domain(format!("row {i} has zero norm")));
        }
        row.iter_mut().for_each(|v| *v /= len);
    }

    let rows: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let query = unit.row(i);
            let mut scored: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dot(query, unit.row(j)), j))
                .collect();
            let by_rank = |a: &(f64, usize), b: &(f64, usize)| {
                b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
            };
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
            scored.sort_by(by_rank);
            scored.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    Ok(NeighborIndex {
        k,
        modality,
        neighbors: rows.concat(),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    #[test]
    fn orthogonal_ties_pick_lower_index() {
        let m = Matrix::identity(3);
        let idx = build_neighbor_index(&m, 1, Modality::Image).unwrap();
        assert_eq!(idx.neighbors_of(0), &[1]);
        assert_eq!(idx.neighbors_of(1), &[0]);
        assert_eq!(idx.neighbors_of(2), &[0]);
    }

    #[test]
    fn duplicates_find_their_twin() {
        let m = Matrix::from_rows(&[
            vec![1.0, 0.2],
            vec![-0.3, 1.0],
            vec![1.0, 0.2],
            vec![-0.3, 1.0],
        ])
        .unwrap();
        let idx = build_neighbor_index(&m, 1, Modality::Text).unwrap();
        let got: Vec<usize> = (0..4).map(|i| idx.neighbors_of(i)[0]).collect();
        assert_eq!(got, vec![2, 3, 0, 1]);
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d, k) = (50, 8, 5);
        let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let m = Matrix::from_vec(n, d, data).unwrap();
        let idx = build_neighbor_index(&m, k, Modality::Image).unwrap();
        for i in 0..n {
            // plain O(n^2) scan with unnormalised cosine
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let (a, b) = (m.row(i), m.row(j));
                    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
                        / (a.iter().map(|x| x * x).sum::<f64>().sqrt()
                            * b.iter().map(|x| x * x).sum::<f64>().sqrt());
                    (c, j)
                })
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
            assert_eq!(idx.neighbors_of(i), expected.as_slice(), "row {i}");
        }
    }

    #[test]
    fn invalid_k_and_zero_rows() {
        let m = Matrix::identity(3);
        assert!(build_neighbor_index(&m, 3, Modality::Image).is_err());
        assert!(build_neighbor_index(&m, 0, Modality::Image).is_err());
        let z = Matrix::zeros(3, 2);
        assert!(matches!(
            build_neighbor_index(&z, 1, Modality::Image),
            Err(GsecError::Domain(_))
        ));
    }

    #[test]
    fn single_neighbor_is_always_drawn() {
        let idx = NeighborIndex::from_lists(Modality::Image, &[vec![1], vec![0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..20).all(|_| idx.sample_neighbor(0, &mut rng) == 1));
    }

    #[test]
    fn draws_are_reproducible() {
        let idx = NeighborIndex::from_lists(
            Modality::Image,
            &[vec![1, 2, 3, 4], vec![0, 2, 3, 4], vec![0, 1, 3, 4], vec![0, 1, 2, 4], vec![0, 1, 2, 3]],
        )
        .unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| idx.sample_neighbor(0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn draws_pass_chi_square_uniformity() {
        let idx = NeighborIndex::from_lists(
            Modality::Image,
            &[vec![1, 2, 3, 4], vec![0, 2, 3, 4], vec![0, 1, 3, 4], vec![0, 1, 2, 4], vec![0, 1, 2, 3]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[idx.sample_neighbor(0, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts[1..]
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square, 3 degrees of freedom, p = 0.01
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }
}
