use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GsecError, Result};
use crate::numerics::{softmax_backward, softmax_in_place, Matrix, ProbRow};

/// A BatchEnsemble linear layer: `m` members share one weight matrix `W` and
/// differ by rank-1 input/output modulators and a bias.
///
/// Member `k` computes `s_k ⊙ (W (r_k ⊙ x)) + b_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchEnsembleLayer {
    /// `output_dim x input_dim`
    pub weight: Matrix,
    /// `m x input_dim`
    pub input_mod: Matrix,
    /// `m x output_dim`
    pub output_mod: Matrix,
    /// `m x output_dim`
    pub bias: Matrix,
}

/// Gradients with the same shapes as [`BatchEnsembleLayer`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub input_mod: Matrix,
    pub output_mod: Matrix,
    pub bias: Matrix,
}

impl LayerGrads {
    pub fn zeros_like(layer: &BatchEnsembleLayer) -> Self {
        Self {
            weight: Matrix::zeros(layer.output_dim(), layer.input_dim()),
            input_mod: Matrix::zeros(layer.members(), layer.input_dim()),
            output_mod: Matrix::zeros(layer.members(), layer.output_dim()),
            bias: Matrix::zeros(layer.members(), layer.output_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrads) {
        for (dst, src) in self.groups_mut().into_iter().zip(other.groups()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    pub fn groups(&self) -> [&[f64]; 4] {
        [
            self.weight.as_slice(),
            self.input_mod.as_slice(),
            self.output_mod.as_slice(),
            self.bias.as_slice(),
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.weight.as_mut_slice(),
            self.input_mod.as_mut_slice(),
            self.output_mod.as_mut_slice(),
            self.bias.as_mut_slice(),
        ]
    }
}

/// Activations of one sample kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct SampleCache {
    /// `m x output_dim` pre-modulation activations `W (r_k ⊙ x)`
    hidden: Vec<f64>,
    /// `m x output_dim` member probabilities
    probs: Vec<f64>,
}

impl BatchEnsembleLayer {
    /// Shared weight uniform in `±1/sqrt(input_dim)`, random-sign modulators,
    /// zero biases.
    pub fn init(input_dim: usize, output_dim: usize, members: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || members == 0 {
            return Err(GsecError::Domain(format!(
                "layer dimensions must be positive: in={input_dim}, out={output_dim}, m={members}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (input_dim as f64).sqrt();
        let weight: Vec<f64> = (0..output_dim * input_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
        let input_mod: Vec<f64> = (0..members * input_dim).map(|_| sign()).collect();
        let output_mod: Vec<f64> = (0..members * output_dim).map(|_| sign()).collect();
        Ok(Self {
            weight: Matrix::from_vec(output_dim, input_dim, weight)?,
            input_mod: Matrix::from_vec(members, input_dim, input_mod)?,
            output_mod: Matrix::from_vec(members, output_dim, output_mod)?,
            bias: Matrix::zeros(members, output_dim),
        })
    }

    /// A plain affine layer `W x + b` seen as a one-member ensemble.
    pub fn from_affine(weight: Matrix, bias: &[f64]) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(GsecError::Shape(format!(
                "bias has {} entries for {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        let (out, inp) = (weight.rows(), weight.cols());
        Ok(Self {
            weight,
            input_mod: Matrix::filled(1, inp, 1.0),
            output_mod: Matrix::filled(1, out, 1.0),
            bias: Matrix::from_vec(1, out, bias.to_vec())?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (m, inp, out) = (self.members(), self.input_dim(), self.output_dim());
        if m == 0 || inp == 0 || out == 0 {
            return Err(GsecError::Shape("empty layer".into()));
        }
        let shapes_ok = self.input_mod.cols() == inp
            && self.output_mod.rows() == m
            && self.output_mod.cols() == out
            && self.bias.rows() == m
            && self.bias.cols() == out;
        if !shapes_ok {
            return Err(GsecError::Shape("inconsistent BatchEnsemble parameter shapes".into()));
        }
        if self.groups().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(GsecError::InvalidInput("non-finite layer parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn members(&self) -> usize {
        self.input_mod.rows()
    }

    pub fn set_unit_modulators(&mut self) {
        self.input_mod.as_mut_slice().fill(1.0);
        self.output_mod.as_mut_slice().fill(1.0);
    }

    pub fn groups(&self) -> [&[f64]; 4] {
        [
            self.weight.as_slice(),
            self.input_mod.as_slice(),
            self.output_mod.as_slice(),
            self.bias.as_slice(),
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.weight.as_mut_slice(),
            self.input_mod.as_mut_slice(),
            self.output_mod.as_mut_slice(),
            self.bias.as_mut_slice(),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(GsecError::Shape(format!(
                "input has {} features, layer expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// `W (r_k ⊙ x)` written into `hidden`.
    fn hidden_into(&self, k: usize, x: &[f64], hidden: &mut [f64]) {
        let r = self.input_mod.row(k);
        for (o, h) in hidden.iter_mut().enumerate() {
            *h = self
                .weight
                .row(o)
                .iter()
                .zip(r)
                .zip(x)
                .map(|((w, r), x)| w * r * x)
                .sum();
        }
    }

    /// Logits of member `k`.
    pub fn member_forward(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        if k >= self.members() {
            return Err(GsecError::InvalidInput(format!(
                "member {k} out of range for ensemble of {}",
                self.members()
            )));
        }
        self.check_input(x)?;
        let mut z = vec![0.0; self.output_dim()];
        self.hidden_into(k, x, &mut z);
        for ((z, s), b) in z.iter_mut().zip(self.output_mod.row(k)).zip(self.bias.row(k)) {
            *z = *z * s + b;
        }
        Ok(z)
    }

    /// Mean over members of the per-member softmax distributions.
    pub fn ensemble_assign(&self, x: &[f64]) -> Result<ProbRow> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.output_dim()];
        self.assign_into(x, &mut out, None);
        ProbRow::new(out)
    }

    /// Unchecked ensemble average; fills `cache` for backpropagation if given.
    pub(crate) fn assign_into(&self, x: &[f64], out: &mut [f64], cache: Option<&mut SampleCache>) {
        let (m, k_out) = (self.members(), self.output_dim());
        let mut hidden = vec![0.0; m * k_out];
        let mut probs = vec![0.0; m * k_out];
        out.fill(0.0);
        let inv_m = 1.0 / m as f64;
        for k in 0..m {
            let h = &mut hidden[k * k_out..(k + 1) * k_out];
            self.hidden_into(k, x, h);
            let p = &mut probs[k * k_out..(k + 1) * k_out];
            for c in 0..k_out {
                p[c] = h[c] * self.output_mod[(k, c)] + self.bias[(k, c)];
            }
            softmax_in_place(p, 1.0);
            for (o, v) in out.iter_mut().zip(p.iter()) {
                *o += v * inv_m;
            }
        }
        if let Some(cache) = cache {
            cache.hidden = hidden;
            cache.probs = probs;
        }
    }

    /// Ensemble assignments for every row of `inputs`.
    pub fn assign_matrix(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.cols() != self.input_dim() {
            return Err(GsecError::Shape(format!(
                "inputs have {} features, layer expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let mut out = Matrix::zeros(inputs.rows(), self.output_dim());
        for i in 0..inputs.rows() {
            self.assign_into(inputs.row(i), out.row_mut(i), None);
        }
        Ok(out)
    }

    pub(crate) fn forward_cached(&self, x: &[f64], out: &mut [f64]) -> SampleCache {
        let mut cache = SampleCache {
            hidden: Vec::new(),
            probs: Vec::new(),
        };
        self.assign_into(x, out, Some(&mut cache));
        cache
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to this sample's ensemble assignment is `grad_assign`.
    pub(crate) fn backward_into(&self, x: &[f64], cache: &SampleCache, grad_assign: &[f64], grads: &mut LayerGrads) {
        let (m, k_out, d) = (self.members(), self.output_dim(), self.input_dim());
        let inv_m = 1.0 / m as f64;
        let grad_member: Vec<f64> = grad_assign.iter().map(|g| g * inv_m).collect();
        let mut dz = vec![0.0; k_out];
        let mut dh = vec![0.0; k_out];
        let mut u = vec![0.0; d];
        for k in 0..m {
            let p = &cache.probs[k * k_out..(k + 1) * k_out];
            let h = &cache.hidden[k * k_out..(k + 1) * k_out];
            softmax_backward(p, &grad_member, &mut dz);
            let s = self.output_mod.row(k);
            for c in 0..k_out {
                grads.bias[(k, c)] += dz[c];
                grads.output_mod[(k, c)] += dz[c] * h[c];
                dh[c] = dz[c] * s[c];
            }
            let r = self.input_mod.row(k);
            for j in 0..d {
                u[j] = r[j] * x[j];
            }
            // dW += dh uᵀ ; du = Wᵀ dh
            for c in 0..k_out {
                let row = grads.weight.row_mut(c);
                for j in 0..d {
                    row[j] += dh[c] * u[j];
                }
            }
            let gr = grads.input_mod.row_mut(k);
            for j in 0..d {
                let mut du = 0.0;
                for c in 0..k_out {
                    du += self.weight[(c, j)] * dh[c];
                }
                gr[j] += du * x[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand_distr::StandardNormal;

    use super::*;

    fn random_layer(inp: usize, out: usize, m: usize, seed: u64) -> BatchEnsembleLayer {
        let mut layer = BatchEnsembleLayer::init(inp, out, m, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for g in layer.groups_mut() {
            g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        }
        layer
    }

    #[test]
    fn unit_modulators_reduce_to_matvec() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, -1.0], vec![0.5, 0.0, 3.0]]).unwrap();
        let layer = BatchEnsembleLayer::from_affine(w.clone(), &[0.0, 0.0]).unwrap();
        let x = [0.3, -1.0, 2.0];
        assert_eq!(layer.member_forward(0, &x).unwrap(), w.matvec(&x).unwrap());
    }

    #[test]
    fn identity_weight_adds_bias() {
        let layer = BatchEnsembleLayer::from_affine(Matrix::identity(3), &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(layer.member_forward(0, &[1.0, 2.0, 3.0]).unwrap(), vec![1.5, 2.5, 3.5]);
    }

    #[test]
    fn matches_dense_factorization() {
        let layer = random_layer(3, 2, 4, 9);
        let x = [0.7, -1.2, 0.4];
        for k in 0..4 {
            // diag(s) W diag(r) x + b, built as an explicit dense matrix
            let mut dense = Matrix::zeros(2, 3);
            for c in 0..2 {
                for j in 0..3 {
                    dense[(c, j)] = layer.output_mod[(k, c)] * layer.weight[(c, j)] * layer.input_mod[(k, j)];
                }
            }
            let expected: Vec<f64> = dense
                .matvec(&x)
                .unwrap()
                .iter()
                .zip(layer.bias.row(k))
                .map(|(a, b)| a + b)
                .collect();
            let got = layer.member_forward(k, &x).unwrap();
            for (g, e) in got.iter().zip(expected) {
                assert!((g - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ensemble_average_of_member_softmaxes() {
        let layer = random_layer(5, 3, 4, 2);
        let x = [0.1, 0.2, -0.3, 1.0, -2.0];
        let mut expected = [0.0; 3];
        for k in 0..4 {
            let p = crate::numerics::softmax(&layer.member_forward(k, &x).unwrap(), 1.0).unwrap();
            for c in 0..3 {
                expected[c] += p[c] / 4.0;
            }
        }
        let got = layer.ensemble_assign(&x).unwrap();
        for c in 0..3 {
            assert!((got[c] - expected[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn single_member_and_identical_members() {
        let single = random_layer(4, 3, 1, 5);
        let x = [1.0, -1.0, 0.5, 0.0];
        let direct = crate::numerics::softmax(&single.member_forward(0, &x).unwrap(), 1.0).unwrap();
        assert_eq!(single.ensemble_assign(&x).unwrap(), direct);

        let mut clones = random_layer(4, 3, 3, 5);
        clones.weight = single.weight.clone();
        for k in 0..3 {
            clones.input_mod.row_mut(k).copy_from_slice(single.input_mod.row(0));
            clones.output_mod.row_mut(k).copy_from_slice(single.output_mod.row(0));
            clones.bias.row_mut(k).copy_from_slice(single.bias.row(0));
        }
        let got = clones.ensemble_assign(&x).unwrap();
        for c in 0..3 {
            assert!((got[c] - direct[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_and_index_errors() {
        let layer = random_layer(3, 2, 2, 0);
        assert!(layer.member_forward(2, &[0.0; 3]).is_err());
        assert!(matches!(layer.member_forward(0, &[0.0; 2]), Err(GsecError::Shape(_))));
        assert!(matches!(layer.ensemble_assign(&[0.0; 4]), Err(GsecError::Shape(_))));
        assert!(BatchEnsembleLayer::init(0, 2, 2, 0).is_err());
    }

    #[test]
    fn init_conventions() {
        let layer = BatchEnsembleLayer::init(16, 3, 24, 1).unwrap();
        assert!(layer.bias.as_slice().iter().all(|&b| b == 0.0));
        assert!(layer.input_mod.as_slice().iter().all(|v| v.abs() == 1.0));
        assert!(layer.output_mod.as_slice().iter().all(|v| v.abs() == 1.0));
        assert!(layer.weight.as_slice().iter().all(|w| w.abs() < 0.25));
        layer.validate().unwrap();
    }
}
