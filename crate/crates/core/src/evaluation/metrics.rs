use std::collections::BTreeMap;

use crate::error::{GsecError, Result};

/// Counts of (predicted cluster, true class) pairs over compacted label ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    pred_labels: Vec<u32>,
    true_labels: Vec<u32>,
    total: u64,
}

fn compact(labels: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let distinct: BTreeMap<u32, usize> = labels.iter().map(|&l| (l, 0)).collect();
    let values: Vec<u32> = distinct.keys().copied().collect();
    let index: BTreeMap<u32, usize> = values.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    (values, labels.iter().map(|l| index[l]).collect())
}

impl ContingencyTable {
    pub fn new(pred: &[u32], truth: &[u32]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(GsecError::Shape(format!(
                "{} predictions for {} ground-truth labels",
                pred.len(),
                truth.len()
            )));
        }
        let (pred_labels, p) = compact(pred);
        let (true_labels, t) = compact(truth);
        let mut counts = vec![vec![0u64; true_labels.len()]; pred_labels.len()];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        Ok(Self {
            counts,
            pred_labels,
            true_labels,
            total: pred.len() as u64,
        })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Row `i` is predicted label `pred_labels()[i]`.
    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn pred_labels(&self) -> &[u32] {
        &self.pred_labels
    }

    pub fn true_labels(&self) -> &[u32] {
        &self.true_labels
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.true_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Optimal one-to-one matching of predicted to true labels, maximizing the
    /// matched count. Predicted labels left over when there are more clusters
    /// than classes map to `None`.
    pub fn best_matching(&self) -> (u64, BTreeMap<u32, Option<u32>>) {
        let size = self.pred_labels.len().max(self.true_labels.len());
        let max = self.counts.iter().flatten().copied().max().unwrap_or(0) as i64;
        let mut cost = vec![vec![max; size]; size];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                cost[i][j] = max - c as i64;
            }
        }
        let assignment = hungarian(&cost);
        let mut matched = 0;
        let mut mapping = BTreeMap::new();
        for (i, &label) in self.pred_labels.iter().enumerate() {
            let j = assignment[i];
            if j < self.true_labels.len() {
                matched += self.counts[i][j];
                mapping.insert(label, Some(self.true_labels[j]));
            } else {
                mapping.insert(label, None);
            }
        }
        (matched, mapping)
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres with
/// potentials). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = i64::MAX / 4;
    // 1-based potentials and matching; column 0 is a virtual start.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_v = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = col0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        col1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=n {
        result[owner[j] - 1] = j - 1;
    }
    result
}

/// Clustering accuracy under the best one-to-one cluster-to-class mapping.
pub fn accuracy(pred: &[u32], truth: &[u32]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.total == 0 {
        return Err(GsecError::InvalidInput("accuracy of zero samples".into()));
    }
    Ok(table.best_matching().0 as f64 / table.total as f64)
}

fn entropy_of_counts(counts: &[u64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I / sqrt(H(pred) H(truth))`.
pub fn nmi(pred: &[u32], truth: &[u32]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.total == 0 {
        return Err(GsecError::InvalidInput("nmi of zero samples".into()));
    }
    let n = table.total as f64;
    let (rows, cols) = (table.row_sums(), table.col_sums());
    let (hp, ht) = (entropy_of_counts(&rows, n), entropy_of_counts(&cols, n));
    if hp == 0.0 || ht == 0.0 {
        // Both single-cluster means the partitions coincide.
        return Ok(if hp == 0.0 && ht == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts.
pub fn ari(pred: &[u32], truth: &[u32]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = table.row_sums().into_iter().map(pairs).sum();
    let b: f64 = table.col_sums().into_iter().map(pairs).sum();
    let all = pairs(table.total);
    if all == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / all;
    let max = (a + b) / 2.0;
    if max == expected {
        // Only reachable when both partitions are all singletons or one block.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusteringScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn score(pred: &[u32], truth: &[u32]) -> Result<ClusteringScores> {
    Ok(ClusteringScores {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}

/// Rewrites each predicted label to its matched true label. Unmatched
/// clusters get fresh labels above every true label so they never count as
/// correct.
pub fn align_to_truth(pred: &[u32], truth: &[u32]) -> Result<Vec<u32>> {
    let table = ContingencyTable::new(pred, truth)?;
    let (_, mapping) = table.best_matching();
    let mut next = truth.iter().copied().max().map_or(0, |m| m + 1);
    let mapping: BTreeMap<u32, u32> = mapping
        .into_iter()
        .map(|(p, t)| {
            let t = t.unwrap_or_else(|| {
                next += 1;
                next - 1
            });
            (p, t)
        })
        .collect();
    Ok(pred.iter().map(|p| mapping[p]).collect())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn six_sample_oracles() {
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [0, 0, 1, 1, 2, 2];
        assert_abs_diff_eq!(nmi(&pred, &truth).unwrap(), 0.52954057805756174054, epsilon = 1e-12);
        assert_abs_diff_eq!(ari(&pred, &truth).unwrap(), 0.24242424242424242424, epsilon = 1e-12);
        assert_abs_diff_eq!(accuracy(&pred, &truth).unwrap(), 4.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn identical_and_relabelled() {
        let truth = [0, 1, 2, 2, 1, 0, 0];
        let pred = [5, 3, 9, 9, 3, 5, 5];
        for f in [accuracy, nmi, ari] {
            assert_eq!(f(&truth, &truth).unwrap(), 1.0);
            assert_abs_diff_eq!(f(&pred, &truth).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chance_level_anchors() {
        let truth = [0, 0, 1, 1];
        assert_eq!(ari(&[0, 0, 0, 0], &truth).unwrap(), 0.0);
        // Balanced product partition carries no information.
        assert_abs_diff_eq!(nmi(&[0, 1, 0, 1], &truth).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(nmi(&[0, 0, 0, 0], &[1, 1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &truth).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        for f in [accuracy, nmi, ari] {
            assert!(matches!(f(&[0, 1], &[0]), Err(GsecError::Shape(_))));
        }
    }

    fn brute_force(pred: &[u32], truth: &[u32], k: usize) -> usize {
        fn permute(rest: &mut Vec<usize>, fixed: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if rest.is_empty() {
                f(fixed);
                return;
            }
            for i in 0..rest.len() {
                let x = rest.remove(i);
                fixed.push(x);
                permute(rest, fixed, f);
                fixed.pop();
                rest.insert(i, x);
            }
        }
        let mut best = 0;
        permute(&mut (0..k).collect(), &mut Vec::new(), &mut |perm| {
            let hits = pred.iter().zip(truth).filter(|(p, t)| perm[**p as usize] == **t as usize).count();
            best = best.max(hits);
        });
        best
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let k = rng.random_range(1..=6);
            let n = rng.random_range(1..=40);
            let pred: Vec<u32> = (0..n).map(|_| rng.random_range(0..k) as u32).collect();
            let truth: Vec<u32> = (0..n).map(|_| rng.random_range(0..k) as u32).collect();
            let acc = accuracy(&pred, &truth).unwrap();
            assert_eq!(acc, brute_force(&pred, &truth, k as usize) as f64 / n as f64);
        }
    }

    #[test]
    fn alignment_maps_to_truth_labels() {
        let truth = [0, 0, 1, 1, 2];
        let pred = [7, 7, 4, 4, 4];
        let aligned = align_to_truth(&pred, &truth).unwrap();
        assert_eq!(aligned, vec![0, 0, 1, 1, 1]);
        let extra = align_to_truth(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap();
        assert_eq!(extra.iter().filter(|&&l| l >= 2).count(), 2);
    }
}
