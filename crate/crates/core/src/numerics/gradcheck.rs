use crate::error::{GsecError, Result};

/// Denominator floor for the relative error, so that near-zero gradient
/// components are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Parameter index where the maximum was attained.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the analytic gradient returned by `loss_fn` at `params` against
/// central finite differences with step `perturbation`.
///
/// `loss_fn` maps a flat parameter vector to `(loss, gradient)`.
pub fn check_gradient<F>(mut loss_fn: F, params: &[f64], perturbation: f64) -> Result<GradientCheck>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(perturbation > 0.0) {
        return Err(GsecError::Domain(format!(
            "perturbation must be positive, got {perturbation}"
        )));
    }
    let (loss, analytic) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(GsecError::InvalidInput(format!("loss is {loss}")));
    }
    if analytic.len() != params.len() {
        return Err(GsecError::Shape(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }

    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let original = probe[i];
        probe[i] = original + perturbation;
        let (plus, _) = loss_fn(&probe)?;
        probe[i] = original - perturbation;
        let (minus, _) = loss_fn(&probe)?;
        probe[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(GsecError::InvalidInput(format!(
                "non-finite loss while perturbing parameter {i}"
            )));
        }
        numeric.push((plus - minus) / (2.0 * perturbation));
    }

    let (worst_index, max_relative_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    Ok(GradientCheck {
        max_relative_error,
        worst_index,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let half_sq = |x: &[f64]| Ok((0.5 * x.iter().map(|v| v * v).sum::<f64>(), x.to_vec()));
        let report = check_gradient(half_sq, &[1.5, -0.25, 3.0, 0.0], 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-8, "{}", report.max_relative_error);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let bad = |x: &[f64]| Ok((x[0] * x[0], vec![x[0]]));
        let report = check_gradient(bad, &[2.0], 1e-5).unwrap();
        assert!(report.max_relative_error > 0.4);
    }

    #[test]
    fn non_finite_loss_propagates() {
        let nan = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(matches!(
            check_gradient(nan, &[0.0], 1e-5),
            Err(GsecError::InvalidInput(_))
        ));
    }
}
