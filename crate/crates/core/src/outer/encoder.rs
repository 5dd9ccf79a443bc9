use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GsecError, Result};
use crate::numerics::{argmax, dot, softmax_backward, softmax_in_place, Matrix, ProbRow};

/// Affine map `out × in` plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let values = (0..inputs * outputs).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            weight: Matrix::from_vec(outputs, inputs, values).expect("finite init"),
            bias: vec![0.0; outputs],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.weight.row(c), x) + self.bias[c];
        }
    }

    /// Accumulates parameter gradients for output gradient `dy` and writes
    /// the input gradient into `dx` when given.
    fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Dense, dx: Option<&mut [f64]>) {
        for (c, &g) in dy.iter().enumerate() {
            grads.bias[c] += g;
            for (w, xi) in grads.weight.row_mut(c).iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            for (c, &g) in dy.iter().enumerate() {
                for (d, w) in dx.iter_mut().zip(self.weight.row(c)) {
                    *d += g * w;
                }
            }
        }
    }

    fn add_assign(&mut self, other: &Dense) {
        for (a, b) in self.weight.as_mut_slice().iter_mut().zip(other.weight.as_slice()) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    fn groups(&self) -> [&[f64]; 2] {
        [self.weight.as_slice(), &self.bias]
    }

    fn groups_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), &mut self.bias]
    }
}

/// Task encoder on the concatenation `[v; t]`: softmax of an affine map, or of
/// an affine map after one tanh hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskEncoder {
    pub hidden: Option<Dense>,
    pub output: Dense,
}

pub(crate) struct EncoderCache {
    hidden: Vec<f64>,
    pub(crate) probs: Vec<f64>,
}

impl TaskEncoder {
    pub fn init(input_dim: usize, clusters: usize, hidden_width: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || clusters == 0 {
            return Err(GsecError::Config("task encoder needs positive input and output sizes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = (hidden_width > 0).then(|| Dense::init(input_dim, hidden_width, &mut rng));
        let output = Dense::init(if hidden_width > 0 { hidden_width } else { input_dim }, clusters, &mut rng);
        Ok(Self { hidden, output })
    }

    /// Single affine head with the given weights (`K × in`) and bias.
    pub fn linear(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() || weight.rows() == 0 {
            return Err(GsecError::Shape(format!(
                "weight has {} rows, bias has {} entries",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(Self {
            hidden: None,
            output: Dense { weight, bias },
        })
    }

    pub fn input_dim(&self) -> usize {
        match &self.hidden {
            Some(h) => h.weight.cols(),
            None => self.output.weight.cols(),
        }
    }

    pub fn clusters(&self) -> usize {
        self.output.bias.len()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.as_ref().map_or(0, |h| h.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden.as_ref().map(Dense::zeros_like),
            output: self.output.zeros_like(),
        }
    }

    pub fn add_assign(&mut self, other: &TaskEncoder) {
        if let (Some(a), Some(b)) = (&mut self.hidden, &other.hidden) {
            a.add_assign(b);
        }
        self.output.add_assign(&other.output);
    }

    pub fn groups(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.hidden.iter().flat_map(Dense::groups).collect();
        out.extend(self.output.groups());
        out
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.hidden.iter_mut().flat_map(Dense::groups_mut).collect();
        out.extend(self.output.groups_mut());
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.groups().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let expected: usize = self.groups().iter().map(|g| g.len()).sum();
        if values.len() != expected {
            return Err(GsecError::Shape(format!("{} values for {expected} parameters", values.len())));
        }
        let mut offset = 0;
        for g in self.groups_mut() {
            let len = g.len();
            g.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> EncoderCache {
        let hidden = match &self.hidden {
            Some(layer) => {
                let mut h = vec![0.0; layer.bias.len()];
                layer.apply(x, &mut h);
                h.iter_mut().for_each(|v| *v = v.tanh());
                h
            }
            None => Vec::new(),
        };
        let mut probs = vec![0.0; self.clusters()];
        let head_input = if self.hidden.is_some() { &hidden[..] } else { x };
        self.output.apply(head_input, &mut probs);
        softmax_in_place(&mut probs, 1.0);
        EncoderCache { hidden, probs }
    }

    pub(crate) fn backward_into(&self, x: &[f64], cache: &EncoderCache, grad_prob: &[f64], grads: &mut TaskEncoder) {
        let mut dz = vec![0.0; self.clusters()];
        softmax_backward(&cache.probs, grad_prob, &mut dz);
        match (&self.hidden, &mut grads.hidden) {
            (Some(layer), Some(layer_grads)) => {
                let mut dh = vec![0.0; cache.hidden.len()];
                self.output.backward(&cache.hidden, &dz, &mut grads.output, Some(&mut dh));
                for (d, h) in dh.iter_mut().zip(&cache.hidden) {
                    *d *= 1.0 - h * h;
                }
                layer.backward(x, &dh, layer_grads, None);
            }
            _ => self.output.backward(x, &dz, &mut grads.output, None),
        }
    }

    /// Cluster distribution for one concatenated input row.
    pub fn forward(&self, x: &[f64]) -> Result<ProbRow> {
        if x.len() != self.input_dim() {
            return Err(GsecError::Shape(format!(
                "encoder expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        ProbRow::new(self.forward_cached(x).probs)
    }

    /// Forward pass over every row of a concatenated input matrix.
    pub fn forward_matrix(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.cols() != self.input_dim() {
            return Err(GsecError::Shape(format!(
                "encoder expects {} inputs, got {}",
                self.input_dim(),
                inputs.cols()
            )));
        }
        let mut out = Matrix::zeros(inputs.rows(), self.clusters());
        for i in 0..inputs.rows() {
            let probs = self.forward_cached(inputs.row(i)).probs;
            out.row_mut(i).copy_from_slice(&probs);
        }
        Ok(out)
    }
}

/// `softmax(φ([v; t]))` for one sample.
pub fn encoder_forward(encoder: &TaskEncoder, image: &[f64], text: &[f64]) -> Result<ProbRow> {
    if image.len() + text.len() != encoder.input_dim() {
        return Err(GsecError::Shape(format!(
            "encoder expects {} inputs, got {} + {}",
            encoder.input_dim(),
            image.len(),
            text.len()
        )));
    }
    let x: Vec<f64> = image.iter().chain(text).copied().collect();
    encoder.forward(&x)
}

/// Hard cluster id per sample: row argmax, lowest id on ties.
pub fn final_assignments(encoder: &TaskEncoder, images: &Matrix, texts: &Matrix) -> Result<Vec<u32>> {
    let probs = encoder.forward_matrix(&images.hconcat(texts)?)?;
    Ok(hard_assignments(&probs))
}

pub fn hard_assignments(probs: &Matrix) -> Vec<u32> {
    probs.row_iter().map(|r| argmax(r) as u32).collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand_distr::StandardNormal;

    use super::*;

    #[test]
    fn zero_weights_give_uniform() {
        let enc = TaskEncoder::linear(Matrix::zeros(4, 5), vec![0.0; 4]).unwrap();
        let y = encoder_forward(&enc, &[1.0, 2.0, 3.0], &[-1.0, 0.5]).unwrap();
        for v in y.iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn known_linear_head() {
        let w = Matrix::from_rows(&[vec![0.5, -1.0], vec![0.25, 0.75]]).unwrap();
        let enc = TaskEncoder::linear(w, vec![0.1, -0.2]).unwrap();
        let y = encoder_forward(&enc, &[1.0], &[2.0]).unwrap();
        assert_abs_diff_eq!(y[0], 0.049736511558556725184, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 0.95026348844144327482, epsilon = 1e-15);
    }

    #[test]
    fn rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for hidden in [0, 6] {
            let enc = TaskEncoder::init(7, 3, hidden, 11).unwrap();
            for _ in 0..50 {
                let x: Vec<f64> = (0..7).map(|_| 4.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let y = enc.forward(&x).unwrap();
                assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let enc = TaskEncoder::init(4, 2, 0, 0).unwrap();
        assert!(matches!(encoder_forward(&enc, &[1.0], &[1.0]), Err(GsecError::Shape(_))));
    }

    #[test]
    fn tie_break_and_one_hot() {
        let uniform = Matrix::filled(3, 4, 0.25);
        assert_eq!(hard_assignments(&uniform), vec![0, 0, 0]);
        let one_hot = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(hard_assignments(&one_hot), vec![1, 2, 0]);
    }

    #[test]
    fn final_assignments_match_rowwise_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = |r, c| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let (v, t) = (m(20, 3), m(20, 2));
        let enc = TaskEncoder::init(5, 4, 0, 9).unwrap();
        let ids = final_assignments(&enc, &v, &t).unwrap();
        for i in 0..20 {
            let y = encoder_forward(&enc, v.row(i), t.row(i)).unwrap();
            let best = (0..4).fold(0, |b, c| if y[c] > y[b] { c } else { b });
            assert_eq!(ids[i] as usize, best);
        }
    }
}
