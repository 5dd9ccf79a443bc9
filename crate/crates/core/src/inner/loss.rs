use serde::{Deserialize, Serialize};

use crate::error::{GsecError, Result};
use crate::numerics::{d_p_ln_p, dot, entropy, floored_ln, kl_unchecked, Matrix, PROB_FLOOR};

/// How the confidence term combines per-sample agreements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceForm {
    /// `-ln sum_i <y_i^v, y_i^t>`
    #[default]
    LogOfSum,
    /// `-sum_i ln <y_i^v, y_i^t>`
    SumOfLogs,
}

/// Value of each term of the inner objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerLossParts {
    pub dist: f64,
    pub conf: f64,
    pub bal: f64,
    pub total: f64,
}

impl InnerLossParts {
    pub fn is_finite(&self) -> bool {
        self.dist.is_finite() && self.conf.is_finite() && self.bal.is_finite() && self.total.is_finite()
    }
}

impl std::fmt::Display for InnerLossParts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "L_dist={} L_conf={} L_bal={} L_inner={}",
            self.dist, self.conf, self.bal, self.total
        )
    }
}

fn same_shape(mats: &[&Matrix]) -> Result<()> {
    let (r, c) = (mats[0].rows(), mats[0].cols());
    if let Some(m) = mats.iter().find(|m| m.rows() != r || m.cols() != c) {
        return Err(GsecError::Shape(format!(
            "assignment matrices differ: {r}x{c} vs {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Cross-modal distillation: `sum_i KL(y_i^t || y_i^{v,N}) + KL(y_i^v || y_i^{t,N})`.
pub fn loss_dist(text: &Matrix, image_neighbor: &Matrix, image: &Matrix, text_neighbor: &Matrix) -> Result<f64> {
    same_shape(&[text, image_neighbor, image, text_neighbor])?;
    Ok((0..text.rows())
        .map(|i| {
            kl_unchecked(text.row(i), image_neighbor.row(i)) + kl_unchecked(image.row(i), text_neighbor.row(i))
        })
        .sum())
}

/// Confidence term; see [`ConfidenceForm`].
pub fn loss_conf(image: &Matrix, text: &Matrix, form: ConfidenceForm) -> Result<f64> {
    same_shape(&[image, text])?;
    let agreements = (0..image.rows()).map(|i| dot(image.row(i), text.row(i)));
    Ok(match form {
        ConfidenceForm::LogOfSum => -floored_ln(agreements.sum()),
        ConfidenceForm::SumOfLogs => -agreements.map(floored_ln).sum::<f64>(),
    })
}

/// Balance term: entropy of the mean image assignment plus entropy of the
/// mean text assignment.
pub fn loss_bal(image: &Matrix, text: &Matrix) -> Result<f64> {
    same_shape(&[image, text])?;
    Ok(entropy(&image.column_means()) + entropy(&text.column_means()))
}

/// `L_dist + L_conf - L_bal` and its gradient with respect to the image and
/// text assignments. Neighbor assignments are constants.
pub fn inner_loss_with_grad(
    image: &Matrix,
    text: &Matrix,
    image_neighbor: &Matrix,
    text_neighbor: &Matrix,
    form: ConfidenceForm,
) -> Result<(InnerLossParts, Matrix, Matrix)> {
    let dist = loss_dist(text, image_neighbor, image, text_neighbor)?;
    let conf = loss_conf(image, text, form)?;
    let bal = loss_bal(image, text)?;
    let parts = InnerLossParts {
        dist,
        conf,
        bal,
        total: dist + conf - bal,
    };

    let (n, k) = (image.rows(), image.cols());
    let mut grad_image = Matrix::zeros(n, k);
    let mut grad_text = Matrix::zeros(n, k);

    // distillation: d/dy KL(y || q) = d(y ln y)/dy - ln q
    for i in 0..n {
        for c in 0..k {
            grad_text[(i, c)] = d_p_ln_p(text[(i, c)]) - floored_ln(image_neighbor[(i, c)]);
            grad_image[(i, c)] = d_p_ln_p(image[(i, c)]) - floored_ln(text_neighbor[(i, c)]);
        }
    }

    // confidence
    match form {
        ConfidenceForm::LogOfSum => {
            let total: f64 = (0..n).map(|i| dot(image.row(i), text.row(i))).sum();
            if total > PROB_FLOOR {
                let scale = -1.0 / total;
                for i in 0..n {
                    for c in 0..k {
                        grad_image[(i, c)] += scale * text[(i, c)];
                        grad_text[(i, c)] += scale * image[(i, c)];
                    }
                }
            }
        }
        ConfidenceForm::SumOfLogs => {
            for i in 0..n {
                let a = dot(image.row(i), text.row(i));
                if a > PROB_FLOOR {
                    let scale = -1.0 / a;
                    for c in 0..k {
                        grad_image[(i, c)] += scale * text[(i, c)];
                        grad_text[(i, c)] += scale * image[(i, c)];
                    }
                }
            }
        }
    }

    // -balance: d/dy_ic of sum_c ybar_c ln ybar_c = d(ybar ln ybar)/dybar / n
    if n > 0 {
        let inv_n = 1.0 / n as f64;
        let image_mean = image.column_means();
        let text_mean = text.column_means();
        for c in 0..k {
            let gi = d_p_ln_p(image_mean[c]) * inv_n;
            let gt = d_p_ln_p(text_mean[c]) * inv_n;
            for i in 0..n {
                grad_image[(i, c)] += gi;
                grad_text[(i, c)] += gt;
            }
        }
    }

    Ok((parts, grad_image, grad_text))
}

/// Inner-ensemble output: the elementwise mean of image and text assignments.
pub fn inner_average(image: &Matrix, text: &Matrix) -> Result<Matrix> {
    same_shape(&[image, text])?;
    let data = image
        .as_slice()
        .iter()
        .zip(text.as_slice())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    Matrix::from_vec(image.rows(), image.cols(), data)
}
