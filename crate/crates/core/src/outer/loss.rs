use serde::{Deserialize, Serialize};

use crate::error::{GsecError, Result};
use crate::numerics::{d_ln, d_p_ln_p, entropy, floored_ln, Matrix};

/// Which side of the alignment cross-entropy is the target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignOrder {
    /// `-Σ ŷ ln y`: the inner prediction supervises the encoder.
    #[default]
    InnerTarget,
    /// `-Σ y ln ŷ`.
    EncoderTarget,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterLossParts {
    pub align: f64,
    /// Entropy of the mean encoder prediction.
    pub entropy: f64,
    pub total: f64,
}

impl OuterLossParts {
    pub fn is_finite(&self) -> bool {
        self.align.is_finite() && self.entropy.is_finite() && self.total.is_finite()
    }
}

impl std::fmt::Display for OuterLossParts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "align={} entropy={} outer={}", self.align, self.entropy, self.total)
    }
}

fn check_shapes(y: &Matrix, target: &Matrix) -> Result<()> {
    if y.rows() != target.rows() || y.cols() != target.cols() {
        return Err(GsecError::Shape(format!(
            "encoder output {}x{} vs inner prediction {}x{}",
            y.rows(),
            y.cols(),
            target.rows(),
            target.cols()
        )));
    }
    Ok(())
}

fn align_unchecked(y: &Matrix, inner: &Matrix, order: AlignOrder) -> f64 {
    let (a, b) = match order {
        AlignOrder::InnerTarget => (inner, y),
        AlignOrder::EncoderTarget => (y, inner),
    };
    -a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(t, p)| t * floored_ln(*p))
        .sum::<f64>()
}

/// Summed soft-target cross-entropy between encoder output `y` and inner
/// prediction `inner`.
pub fn loss_align(y: &Matrix, inner: &Matrix, order: AlignOrder) -> Result<f64> {
    check_shapes(y, inner)?;
    Ok(align_unchecked(y, inner, order))
}

/// `loss_align - H(mean row of y)`.
pub fn loss_outer(y: &Matrix, inner: &Matrix, order: AlignOrder) -> Result<OuterLossParts> {
    Ok(outer_loss_with_grad(y, inner, order)?.0)
}

/// Outer loss and its gradient with respect to `y` (the inner prediction is
/// a constant).
pub fn outer_loss_with_grad(y: &Matrix, inner: &Matrix, order: AlignOrder) -> Result<(OuterLossParts, Matrix)> {
    check_shapes(y, inner)?;
    if y.rows() == 0 {
        return Err(GsecError::InvalidInput("outer loss of an empty batch".into()));
    }
    let align = align_unchecked(y, inner, order);
    let mean = y.column_means();
    let h = entropy(&mean);
    let inv_n = 1.0 / y.rows() as f64;
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        let (yr, tr, gr) = (y.row(i), inner.row(i), grad.row_mut(i));
        for c in 0..yr.len() {
            let align_grad = match order {
                AlignOrder::InnerTarget => -tr[c] * d_ln(yr[c]),
                AlignOrder::EncoderTarget => -floored_ln(tr[c]),
            };
            gr[c] = align_grad + d_p_ln_p(mean[c]) * inv_n;
        }
    }
    Ok((
        OuterLossParts {
            align,
            entropy: h,
            total: align - h,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::check_gradient;

    fn random_stochastic(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut m = Matrix::zeros(n, k);
        for i in 0..n {
            let row = m.row_mut(i);
            row.iter_mut().for_each(|v| *v = rng.random_range(0.05..1.0));
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        m
    }

    #[test]
    fn align_anchors() {
        let one_hot = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(loss_align(&one_hot, &one_hot, AlignOrder::InnerTarget).unwrap(), 0.0);
        let y = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let t = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(loss_align(&y, &t, AlignOrder::InnerTarget).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn align_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_stochastic(8, 3, &mut rng);
        let t = random_stochastic(8, 3, &mut rng);
        let mut expected = 0.0;
        for i in 0..8 {
            for c in 0..3 {
                expected -= t[(i, c)] * y[(i, c)].ln();
            }
        }
        assert_abs_diff_eq!(loss_align(&y, &t, AlignOrder::InnerTarget).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn outer_anchors() {
        let k = 4;
        let u = Matrix::filled(5, k, 0.25);
        let parts = loss_outer(&u, &u, AlignOrder::InnerTarget).unwrap();
        // Uniform rows: align = n ln K, entropy = ln K.
        assert_abs_diff_eq!(parts.align, 5.0 * (k as f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(parts.entropy, (k as f64).ln(), epsilon = 1e-12);

        let collapsed = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let parts = loss_outer(&collapsed, &collapsed, AlignOrder::InnerTarget).unwrap();
        assert_eq!(parts.total, 0.0);
    }

    #[test]
    fn outer_is_sum_of_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = random_stochastic(8, 3, &mut rng);
        let t = random_stochastic(8, 3, &mut rng);
        let parts = loss_outer(&y, &t, AlignOrder::InnerTarget).unwrap();
        let expected = loss_align(&y, &t, AlignOrder::InnerTarget).unwrap() - entropy(&y.column_means());
        assert_abs_diff_eq!(parts.total, expected, epsilon = 1e-12);
        assert!(-parts.entropy >= -(3f64.ln()) - 1e-12 && -parts.entropy <= 0.0);
    }

    #[test]
    fn cross_entropy_dominates_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let y = random_stochastic(6, 4, &mut rng);
            let t = random_stochastic(6, 4, &mut rng);
            let floor: f64 = t.row_iter().map(entropy).sum();
            assert!(loss_align(&y, &t, AlignOrder::InnerTarget).unwrap() >= floor - 1e-12);
            assert_abs_diff_eq!(loss_align(&t, &t, AlignOrder::InnerTarget).unwrap(), floor, epsilon = 1e-12);
        }
    }

    #[test]
    fn grad_wrt_outputs_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = random_stochastic(6, 3, &mut rng);
        let t = random_stochastic(6, 3, &mut rng);
        for order in [AlignOrder::InnerTarget, AlignOrder::EncoderTarget] {
            let report = check_gradient(
                |p| {
                    let y = Matrix::from_vec(6, 3, p.to_vec())?;
                    let (parts, g) = outer_loss_with_grad(&y, &t, order)?;
                    Ok((parts.total, g.into_vec()))
                },
                y.as_slice(),
                1e-6,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-6, "{order:?} {}", report.max_relative_error);
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Matrix::filled(2, 3, 1.0 / 3.0);
        let b = Matrix::filled(3, 3, 1.0 / 3.0);
        assert!(matches!(loss_align(&a, &b, AlignOrder::InnerTarget), Err(GsecError::Shape(_))));
    }
}
