use std::ops::Deref;

use crate::error::{GsecError, Result};
use crate::numerics::matrix::{dot, norm};

/// Floor applied to every probability before it enters a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `|sum - 1|` for a probability row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// A discrete distribution over clusters: nonnegative entries summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbRow(Vec<f64>);

impl ProbRow {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_prob_row(&values)?;
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbRow {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn validate_prob_row(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(GsecError::InvalidInput("empty probability row".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(GsecError::InvalidInput(
            "probability entries must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(GsecError::InvalidInput(format!(
            "probability row sums to {total}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Derivative of `p * floored_ln(p)` with respect to `p`.
#[inline]
pub(crate) fn d_p_ln_p(p: f64) -> f64 {
    if p > PROB_FLOOR {
        p.ln() + 1.0
    } else {
        PROB_FLOOR.ln()
    }
}

/// Derivative of `floored_ln(p)` with respect to `p`.
#[inline]
pub(crate) fn d_ln(p: f64) -> f64 {
    if p > PROB_FLOOR {
        1.0 / p
    } else {
        0.0
    }
}

/// Temperature softmax, stabilised by subtracting the maximum logit.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<ProbRow> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(GsecError::Domain(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(GsecError::InvalidInput("softmax of empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(GsecError::InvalidInput("non-finite logit".into()));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out, temperature);
    Ok(ProbRow(out))
}

/// Unchecked softmax used on hot paths where inputs are already validated.
pub(crate) fn softmax_in_place(values: &mut [f64], temperature: f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    values.iter_mut().for_each(|v| *v *= inv);
}

/// Backpropagates `grad_prob` (dL/dp) through a unit-temperature softmax,
/// returning dL/dz for the logits that produced `prob`.
pub(crate) fn softmax_backward(prob: &[f64], grad_prob: &[f64], grad_logits: &mut [f64]) {
    let inner = dot(prob, grad_prob);
    for ((g, p), gp) in grad_logits.iter_mut().zip(prob).zip(grad_prob) {
        *g = p * (gp - inner);
    }
}

/// `KL(p || q) = sum p ln(p / q)` with `0 ln 0 = 0` and both sides floored.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(GsecError::Shape(format!(
            "kl_divergence: lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_unchecked(p, q))
}

#[inline]
pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (floored_ln(pi) - floored_ln(qi)))
        .sum()
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&pi| pi * floored_ln(pi)).sum::<f64>()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GsecError::Shape(format!(
            "cosine_similarity: dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(GsecError::Domain("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
