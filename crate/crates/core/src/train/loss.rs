use crate::error::Result;
use crate::grid::{ensure_same_geometry, OccupancyGrid, ProbGrid};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over cells and its gradient with respect to
/// each prediction.
pub fn bce_loss(pred: &ProbGrid, target: &OccupancyGrid) -> Result<(f64, Vec<f64>)> {
    ensure_same_geometry(pred.geometry(), target.geometry(), "loss target")?;
    let mut grad = vec![0.0; pred.values().len()];
    let loss = bce_into(pred.values(), target.cells(), &mut grad);
    Ok((loss, grad))
}

/// Writes `dL/dp` into `grad` and returns the loss. The gradient is taken at
/// the clamped prediction so saturated cells still receive a signal.
pub(crate) fn bce_into(pred: &[f64], target: &[bool], grad: &mut [f64]) -> f64 {
    let n = pred.len() as f64;
    let mut total = 0.0;
    for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
        let q = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        if t {
            total -= q.ln();
            *g = -1.0 / (q * n);
        } else {
            total -= (1.0 - q).ln();
            *g = 1.0 / ((1.0 - q) * n);
        }
    }
    total / n
}

pub(crate) fn bce_value(pred: &[f64], target: &[bool]) -> f64 {
    let n = pred.len() as f64;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let q = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if t {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    total / n
}
