use rayon::prelude::*;

use crate::error::{GsecError, Result};
use crate::numerics::{dot, norm, softmax_in_place, Matrix};

fn unit_rows(m: &Matrix, what: &str) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let len = norm(row);
        if len == 0.0 {
            return Err(GsecError::Domain(format!("{what} row {i} has zero norm")));
        }
        row.iter_mut().for_each(|v| *v /= len);
    }
    Ok(out)
}

/// Per-sample distribution over class embeddings: a softmax of cosine
/// similarities divided by `temperature`. Returns an `n x M` matrix.
pub fn semantic_weights(images: &Matrix, class_embeddings: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(GsecError::Domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if class_embeddings.rows() == 0 {
        return Err(GsecError::InvalidInput("no class embeddings".into()));
    }
    if images.cols() != class_embeddings.cols() {
        return Err(GsecError::Shape(format!(
            "image dimension {} differs from class embedding dimension {}",
            images.cols(),
            class_embeddings.cols()
        )));
    }
    let images = unit_rows(images, "image")?;
    let classes = unit_rows(class_embeddings, "class embedding")?;
    let m = classes.rows();
    let rows: Vec<Vec<f64>> = (0..images.rows())
        .into_par_iter()
        .map(|i| {
            let v = images.row(i);
            let mut w: Vec<f64> = classes.row_iter().map(|t| dot(v, t)).collect();
            softmax_in_place(&mut w, temperature);
            w
        })
        .collect();
    Matrix::from_vec(images.rows(), m, rows.concat())
}

/// Text counterpart of every image: the weighted average of the class
/// embeddings under [`semantic_weights`].
pub fn synthesize_text_embeddings(images: &Matrix, class_embeddings: &Matrix, temperature: f64) -> Result<Matrix> {
    let weights = semantic_weights(images, class_embeddings, temperature)?;
    let d = class_embeddings.cols();
    let mut out = Matrix::zeros(images.rows(), d);
    for i in 0..images.rows() {
        let target = out.row_mut(i);
        for (w, t) in weights.row(i).iter().zip(class_embeddings.row_iter()) {
            for (o, x) in target.iter_mut().zip(t) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_is_copied() {
        let images = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        let classes = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let t = synthesize_text_embeddings(&images, &classes, 0.04).unwrap();
        for row in t.row_iter() {
            assert_eq!(row, &[0.3, -0.7]);
        }
    }

    #[test]
    fn equidistant_sample_gets_mean() {
        // (1,1) has equal cosine with both axes
        let images = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let classes = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let t = synthesize_text_embeddings(&images, &classes, 0.1).unwrap();
        assert!((t[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((t[(0, 1)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rows_and_dimension_mismatch() {
        let classes = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let images = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let err = synthesize_text_embeddings(&images, &classes, 1.0).unwrap_err();
        assert!(err.to_string().contains("image row 1"));
        let wide = Matrix::zeros(1, 3);
        assert!(matches!(
            synthesize_text_embeddings(&wide, &classes, 1.0),
            Err(GsecError::Shape(_))
        ));
        assert!(synthesize_text_embeddings(&classes, &classes, 0.0).is_err());
    }
}
