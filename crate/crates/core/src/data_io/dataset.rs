use std::collections::HashSet;

use crate::error::{GsecError, Result};
use crate::numerics::Matrix;

/// Paired image/text embeddings with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Matrix,
    texts: Option<Matrix>,
    labels: Option<Vec<u32>>,
    ids: Vec<u64>,
}

impl Dataset {
    /// Dataset with ids `0..n` and no text modality or labels.
    pub fn from_images(images: Matrix) -> Self {
        let ids = (0..images.rows() as u64).collect();
        Self {
            images,
            texts: None,
            labels: None,
            ids,
        }
    }

    pub fn new(
        images: Matrix,
        texts: Option<Matrix>,
        labels: Option<Vec<u32>>,
        ids: Option<Vec<u64>>,
    ) -> Result<Self> {
        let n = images.rows();
        let ids = ids.unwrap_or_else(|| (0..n as u64).collect());
        if ids.len() != n {
            return Err(GsecError::Shape(format!("{} ids for {n} samples", ids.len())));
        }
        if ids.iter().collect::<HashSet<_>>().len() != n {
            return Err(GsecError::InvalidInput("sample ids are not unique".into()));
        }
        let mut ds = Self {
            images,
            texts: None,
            labels: None,
            ids,
        };
        if let Some(t) = texts {
            ds.set_texts(t)?;
        }
        if let Some(l) = labels {
            ds.set_labels(l)?;
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn texts(&self) -> Option<&Matrix> {
        self.texts.as_ref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn set_texts(&mut self, texts: Matrix) -> Result<()> {
        if texts.rows() != self.len() {
            return Err(GsecError::Shape(format!(
                "text embeddings have {} rows, images have {}",
                texts.rows(),
                self.len()
            )));
        }
        self.texts = Some(texts);
        Ok(())
    }

    pub fn set_labels(&mut self, labels: Vec<u32>) -> Result<()> {
        if labels.len() != self.len() {
            return Err(GsecError::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(())
    }

    /// Rows picked by `indices` (repeats allowed). The result gets fresh ids
    /// `0..indices.len()` since repeated rows would otherwise collide.
    pub fn resample(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select_rows(indices),
            texts: self.texts.as_ref().map(|t| t.select_rows(indices)),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            ids: (0..indices.len() as u64).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shapes_and_ids() {
        let images = Matrix::zeros(3, 2);
        assert!(Dataset::new(images.clone(), Some(Matrix::zeros(2, 2)), None, None).is_err());
        assert!(Dataset::new(images.clone(), None, Some(vec![0; 4]), None).is_err());
        assert!(Dataset::new(images.clone(), None, None, Some(vec![1, 1, 2])).is_err());
        let ds = Dataset::new(images, None, Some(vec![0, 1, 0]), Some(vec![7, 8, 9])).unwrap();
        assert_eq!(ds.ids(), &[7, 8, 9]);
    }

    #[test]
    fn resample_repeats_rows() {
        let images = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let ds = Dataset::new(images, None, Some(vec![5, 6]), None).unwrap();
        let r = ds.resample(&[1, 1, 0]);
        assert_eq!(r.images().as_slice(), &[2.0, 2.0, 1.0]);
        assert_eq!(r.labels().unwrap(), &[6, 6, 5]);
        assert_eq!(r.ids(), &[0, 1, 2]);
    }
}
