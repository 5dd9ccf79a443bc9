use log::warn;

use crate::numerics::{squared_distance, Matrix};
use crate::semantic::KMeansResult;

/// Representative sample indices for one pre-cluster, closest to the center
/// first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterRepresentatives {
    pub cluster: usize,
    pub samples: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepresentativeSelection {
    pub clusters: Vec<ClusterRepresentatives>,
    /// Pre-clusters that ended up with no members.
    pub skipped_empty: Vec<usize>,
}

impl RepresentativeSelection {
    pub fn total(&self) -> usize {
        self.clusters.iter().map(|c| c.samples.len()).sum()
    }

    /// `(sample, cluster)` pairs in cluster order.
    pub fn flatten(&self) -> Vec<(usize, usize)> {
        self.clusters
            .iter()
            .flat_map(|c| c.samples.iter().map(move |&s| (s, c.cluster)))
            .collect()
    }
}

/// Positions picked from a distance-sorted list of `size` members: all of them
/// when `size <= per_cluster`, otherwise `ceil(j (size-1) / (per_cluster-1))`
/// for `j = 0..per_cluster`.
pub fn spaced_positions(size: usize, per_cluster: usize) -> Vec<usize> {
    if size <= per_cluster {
        return (0..size).collect();
    }
    if per_cluster <= 1 {
        return vec![0];
    }
    let span = per_cluster - 1;
    (0..per_cluster)
        .map(|j| (j * (size - 1)).div_ceil(span))
        .collect()
}

/// Evenly spaced members of every pre-cluster, ranked by Euclidean distance to
/// the cluster center (ties by sample index).
pub fn select_representatives(
    result: &KMeansResult,
    embeddings: &Matrix,
    per_cluster: usize,
) -> RepresentativeSelection {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); result.cluster_count()];
    for (i, &c) in result.assignment.iter().enumerate() {
        members[c].push(i);
    }

    let mut selection = RepresentativeSelection::default();
    for (cluster, mut list) in members.into_iter().enumerate() {
        if list.is_empty() {
            warn!("pre-cluster {cluster} is empty; no representatives selected");
            selection.skipped_empty.push(cluster);
            continue;
        }
        let center = result.centers.row(cluster);
        let mut ranked: Vec<(f64, usize)> = list
            .drain(..)
            .map(|i| (squared_distance(embeddings.row(i), center), i))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let samples = spaced_positions(ranked.len(), per_cluster)
            .into_iter()
            .map(|p| ranked[p].1)
            .collect();
        selection.clusters.push(ClusterRepresentatives { cluster, samples });
    }
    selection
}
