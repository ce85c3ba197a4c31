//! Closed-form pieces of the second-order squared-error objective.

use super::TrainError;

/// First and second derivative of the loss at one row. For squared error
/// `L = (prediction - label)^2 / 2` these are `g = prediction - label` and
/// `h = 1` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientPair {
    pub g: f64,
    pub h: f64,
}

/// Per-row gradient pairs of the squared-error loss.
pub fn gradients(labels: &[f64], predictions: &[f64]) -> Result<Vec<GradientPair>, TrainError> {
    if labels.len() != predictions.len() {
        return Err(TrainError::LengthMismatch {
            labels: labels.len(),
            predictions: predictions.len(),
        });
    }
    if let Some(i) = labels.iter().position(|l| l.is_nan()) {
        return Err(TrainError::NanLabel(i));
    }
    Ok(labels
        .iter()
        .zip(predictions)
        .map(|(&y, &pred)| GradientPair { g: pred - y, h: 1.0 })
        .collect())
}

/// Optimal leaf weight `-G / (H + lambda)` for gradient sum `G` and hessian
/// sum `H`.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, lambda: f64) -> Result<f64, TrainError> {
    if hess_sum + lambda <= 0.0 {
        return Err(TrainError::DegenerateLeaf {
            hess: hess_sum,
            lambda,
        });
    }
    Ok(-grad_sum / (hess_sum + lambda))
}

/// Gain of splitting a node with children stats `(G_L, H_L)` and `(G_R, H_R)`:
/// half the reduction of the regularized quadratic objective, minus `gamma`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}
