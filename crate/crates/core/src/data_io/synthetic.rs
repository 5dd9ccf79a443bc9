use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{GsecError, Result};
use crate::numerics::{dot, norm, squared_distance, Matrix};

/// Parameters of the Gaussian-mixture generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub dim: usize,
    pub clusters: usize,
    pub separation: f64,
    pub modality_noise: f64,
    pub seed: u64,
}

/// Generates `clusters` unit-variance Gaussian blobs whose centers are at
/// least `separation` apart, plus a paired text modality obtained by a random
/// rotation of each image embedding with isotropic noise of scale
/// `modality_noise` added. Sample `i` belongs to class `i % clusters`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec {
        samples: n,
        dim: d,
        clusters: k,
        separation,
        modality_noise,
        seed,
    } = *spec;
    if k < 2 || n < k {
        return Err(GsecError::Domain(format!(
            "need n >= K >= 2, got n={n}, K={k}"
        )));
    }
    if d < 2 {
        return Err(GsecError::Domain(format!("need d >= 2, got {d}")));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(GsecError::Domain(format!("separation must be >= 0, got {separation}")));
    }
    if !(modality_noise >= 0.0) || !modality_noise.is_finite() {
        return Err(GsecError::Domain(format!(
            "modality noise must be >= 0, got {modality_noise}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = cluster_centers(&mut rng, k, d, separation);
    let rotation = random_orthogonal(&mut rng, d);

    let mut images = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        labels.push(class as u32);
        for (x, c) in images.row_mut(i).iter_mut().zip(&centers[class]) {
            *x = c + rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut texts = Matrix::zeros(n, d);
    for i in 0..n {
        let rotated = rotation.matvec(images.row(i))?;
        for (t, r) in texts.row_mut(i).iter_mut().zip(rotated) {
            *t = r + modality_noise * rng.sample::<f64, _>(StandardNormal);
        }
    }

    Dataset::new(images, Some(texts), Some(labels), None)
}

fn cluster_centers(rng: &mut ChaCha8Rng, k: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    if separation == 0.0 {
        return vec![vec![0.0; d]; k];
    }
    if k <= d {
        // k rows of a random orthonormal frame scaled by separation / sqrt(2):
        // every pair is exactly `separation` apart
        let frame = random_orthogonal(rng, d);
        let scale = separation / std::f64::consts::SQRT_2;
        return (0..k)
            .map(|c| frame.row(c).iter().map(|v| v * scale).collect())
            .collect();
    }
    // more clusters than dimensions: rejection sampling in a growing ball
    let mut radius = separation * (k as f64).powf(1.0 / d as f64);
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        for _ in 0..10_000 {
            if centers.len() == k {
                break;
            }
            let candidate: Vec<f64> = (0..d)
                .map(|_| rng.random_range(-radius..=radius))
                .collect();
            let far_enough = centers
                .iter()
                .all(|c| squared_distance(c, &candidate) >= separation * separation);
            if far_enough {
                centers.push(candidate);
            }
        }
        if centers.len() == k {
            return centers;
        }
        radius *= 2.0;
    }
}

/// Gram-Schmidt on Gaussian vectors; rows form an orthonormal basis.
fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let len = norm(&v);
        if len > 1e-8 {
            v.iter_mut().for_each(|x| *x /= len);
            basis.push(v);
        }
    }
    Matrix::from_rows(&basis).expect("square basis")
}
