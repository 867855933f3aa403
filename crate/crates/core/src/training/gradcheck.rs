//! Central finite-difference check of the analytic batch gradient.

use super::{batch_loss, batch_loss_and_grad, LossOptions, PreparedInstance, TrainError};
use crate::model::ModelParameters;
use crate::tensor::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-tensor relative error.
    pub max_relative_error: f64,
    /// `(tensor name, ‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖))`.
    pub per_tensor: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_tensor
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    }
}

/// Floor on the per-tensor denominator, as a fraction of the global
/// analytic gradient norm. Tensors whose true gradient is identically
/// zero (key biases, unused rows) would otherwise score finite-difference
/// rounding noise as a 100% error.
const DENOM_FLOOR: f64 = 1e-6;

pub fn gradient_check(
    params: &ModelParameters<f64>,
    batch: &[PreparedInstance],
    opts: LossOptions,
    eps: f64,
) -> Result<GradCheckReport, TrainError> {
    gradient_check_with(params, batch, opts, eps, |_, _| {})
}

/// As [`gradient_check`], letting `tamper` modify the analytic gradient
/// before comparison.
pub fn gradient_check_with<F>(
    params: &ModelParameters<f64>,
    batch: &[PreparedInstance],
    opts: LossOptions,
    eps: f64,
    tamper: F,
) -> Result<GradCheckReport, TrainError>
where
    F: FnOnce(&ModelParameters<f64>, &mut ParamStore<f64>),
{
    let (_, mut analytic) = batch_loss_and_grad(params, batch, opts)?;
    tamper(params, &mut analytic);
    let floor = (DENOM_FLOOR * analytic.global_norm()).max(f64::MIN_POSITIVE);
    let mut work = params.clone();
    let mut per_tensor = Vec::with_capacity(params.store.len());
    for (ti, name) in params.store.names().iter().enumerate() {
        let id = crate::tensor::ParamId(ti);
        let n = params.store.get(id).len();
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..n {
            let orig = work.store.data(id)[j];
            work.store.data_mut(id)[j] = orig + eps;
            let up = batch_loss(&work, batch, opts)?;
            work.store.data_mut(id)[j] = orig - eps;
            let down = batch_loss(&work, batch, opts)?;
            work.store.data_mut(id)[j] = orig;
            let num = (up - down) / (2.0 * eps);
            let a = analytic.data(id)[j];
            diff2 += (a - num) * (a - num);
            a2 += a * a;
            n2 += num * num;
        }
        let denom = a2.sqrt() + n2.sqrt();
        let rel = diff2.sqrt() / denom.max(floor);
        per_tensor.push((name.clone(), rel));
    }
    let max_relative_error = per_tensor.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        per_tensor,
    })
}
