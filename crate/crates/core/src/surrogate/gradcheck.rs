//! Central finite-difference verification of [`loss_and_gradients`].

use super::model::{loss_and_gradients, SurrogateModel};
use crate::error::Result;
use crate::geometry::PlateMatrix;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientMismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub parameters: usize,
    pub max_rel_error: f64,
    /// Entries above the tolerance, in layout order.
    pub failures: Vec<GradientMismatch>,
}

/// Compares every analytic gradient entry with `(L(w+h) − L(w−h)) / 2h`,
/// `h = step·max(1, |w|)`.
pub fn gradient_check(
    model: &SurrogateModel,
    batch: &[(PlateMatrix, [f64; 2])],
    step: f64,
    tolerance: f64,
) -> Result<GradientCheck> {
    let (_, analytic) = loss_and_gradients(model, batch)?;
    let mut probe = model.clone();
    let mut report = GradientCheck {
        parameters: 0,
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    for (ti, grad) in analytic.tensors.iter().enumerate() {
        for (k, &a) in grad.data.iter().enumerate() {
            let w = model.weights.tensors[ti].data[k];
            let h = step * w.abs().max(1.0);
            probe.weights.tensors[ti].data[k] = w + h;
            let (up, _) = loss_and_gradients(&probe, batch)?;
            probe.weights.tensors[ti].data[k] = w - h;
            let (down, _) = loss_and_gradients(&probe, batch)?;
            probe.weights.tensors[ti].data[k] = w;

            let numeric = (up - down) / (2.0 * h);
            let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.parameters += 1;
            report.max_rel_error = report.max_rel_error.max(rel_error);
            if rel_error > tolerance {
                report.failures.push(GradientMismatch {
                    tensor: grad.name.clone(),
                    index: k,
                    analytic: a,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    Ok(report)
}
